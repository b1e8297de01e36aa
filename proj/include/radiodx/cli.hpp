#pragma once

#include <iosfwd>

namespace radiodx::cli {

/// Exit codes of `run`.
inline constexpr int kOk = 0;
inline constexpr int kRuntimeError = 1;
inline constexpr int kUsageError = 2;

/// Entry point for the `radiodx` tool. Subcommands:
///
///   analyze  --manifest M --out D [--config C]
///   split    --manifest M --seed S --out D [--config C]
///   train    --config C --out D
///   evaluate (--weights W | --predictions P) --manifest M --out D [--config C]
///   explain  --weights W --image I --out D [--layer L] [--alpha A] [--config C]
///   predict  --weights W --image I [--config C] [--out D]
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace radiodx::cli
