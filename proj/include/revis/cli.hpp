#pragma once

#include "revis/error.hpp"

namespace revis::cli {

/// Process exit codes. Stable; documented in the README.
enum ExitCode : int {
  kExitOk = 0,
  kExitIo = 1,                // unreadable/unwritable file, internal error
  kExitInvalidInput = 2,      // bad format, config, flag or parse error
  kExitMissingCondition = 3,  // dump lacks a required condition
  kExitNoSeparableLayer = 4,  // calibration found no layer with delta > 0
};

int exit_code_for(Errc code) noexcept;

/// Entry point for the `revis` binary: synth, extract, calibrate, steer,
/// metrics, inspect.
int run(int argc, char** argv);

}  // namespace revis::cli
