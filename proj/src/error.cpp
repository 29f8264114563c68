#include "op2vec/error.hpp"

namespace op2vec {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::not_an_archive: return "NotAnArchive";
    case Errc::entry_not_found: return "EntryNotFound";
    case Errc::corrupt_entry: return "CorruptEntry";
    case Errc::io_error: return "IoError";
    case Errc::bad_magic: return "BadMagic";
    case Errc::bad_endian_tag: return "BadEndianTag";
    case Errc::size_mismatch: return "SizeMismatch";
    case Errc::too_short: return "TooShort";
    case Errc::undefined_opcode: return "UndefinedOpcode";
    case Errc::truncated_instruction: return "TruncatedInstruction";
    case Errc::parse_error: return "ParseError";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::zero_vector: return "ZeroVector";
    case Errc::unknown_opcode: return "UnknownOpcode";
    case Errc::bad_config: return "BadConfig";
    case Errc::unsupported_version: return "UnsupportedVersion";
    case Errc::truncated_file: return "TruncatedFile";
    case Errc::corrupt_record: return "CorruptRecord";
    case Errc::missing_label: return "MissingLabel";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::single_class_dataset: return "SingleClassDataset";
  }
  return "UnknownError";
}

}  // namespace op2vec
