#pragma once

#include <stdexcept>
#include <string>

namespace diffurec {

/// Operand shapes do not agree for the requested operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an API precondition (wrong loss rank, optimizer fed a different parameter set, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid model or run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A noise schedule produced a beta outside (0, 1).
class ScheduleError : public std::invalid_argument {
 public:
  ScheduleError(const std::string& what, int step) : std::invalid_argument(what), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class PreprocessError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Loss went non-finite during training.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch, std::size_t batch, double loss)
      : std::runtime_error(what), epoch_(epoch), batch_(batch), loss_(loss) {}
  int epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }
  double loss() const noexcept { return loss_; }

 private:
  int epoch_;
  std::size_t batch_;
  double loss_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  CheckpointTruncatedError(const std::string& what, std::string tensor)
      : CheckpointError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

}  // namespace diffurec
