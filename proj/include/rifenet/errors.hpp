#pragma once

#include <stdexcept>
#include <string>

namespace rifenet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration value, unknown dataset, bad fold index.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing or malformed dataset files.
class DataError : public Error {
 public:
  using Error::Error;
};

// The sampler could not assemble an episode from the class pool.
class SamplingError : public DataError {
 public:
  using DataError::DataError;
};

// A mask lost all foreground, e.g. after downsampling; callers resample.
class DegenerateMaskError : public DataError {
 public:
  using DataError::DataError;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (shape mismatch, wrong phase, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Process exit codes used by the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2, kExitData = 3, kExitCheckpoint = 4 };

}  // namespace rifenet
