#pragma once

#include <stdexcept>
#include <string>

namespace op2vec {

// Every failure in the pipeline carries one of these codes so callers can
// react to the kind of error without parsing message text.
enum class Errc {
  // archive ingest
  not_an_archive,
  entry_not_found,
  corrupt_entry,
  io_error,
  // dex parsing
  bad_magic,
  bad_endian_tag,
  size_mismatch,
  too_short,
  undefined_opcode,
  truncated_instruction,
  parse_error,
  // corpus / training
  empty_corpus,
  index_out_of_range,
  non_finite_loss,
  zero_vector,
  unknown_opcode,
  bad_config,
  // containers
  unsupported_version,
  truncated_file,
  corrupt_record,
  missing_label,
  // classifier
  shape_mismatch,
  length_mismatch,
  empty_dataset,
  single_class_dataset,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace op2vec
