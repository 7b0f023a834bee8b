#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vqag {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A required input file or directory could not be read or parsed.
struct LoadError : Error {
  LoadError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

// A caller-supplied value violates an operation's precondition.
struct InputError : Error {
  using Error::Error;
};

// A computation produced NaN or infinity.
struct NumericError : Error {
  using Error::Error;
};

struct TrainingDiverged : NumericError {
  explicit TrainingDiverged(std::size_t step)
      : NumericError("training diverged (non-finite loss) at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace vqag
