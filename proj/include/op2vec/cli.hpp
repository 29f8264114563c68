#pragma once

namespace op2vec {

// Entry point behind the op2vec binary. Exit codes: 0 success, 1 pipeline
// error (diagnostic on stderr), 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace op2vec
