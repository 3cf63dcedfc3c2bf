#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ctrlsimp {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input that violates a documented precondition (bad argument, bad request).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed file or text (corpus, CoNLL-U, rule list, checkpoint).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Dependency tree that is not a single rooted, acyclic, spanning tree.
class TreeError : public Error {
 public:
  using Error::Error;
};

// Sequence longer than the model's positional table.
class LengthError : public Error {
 public:
  using Error::Error;
};

// NaN or infinity found in a tensor.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Training diverged.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, long step)
      : Error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
        epoch_(epoch),
        step_(step) {}
  int epoch() const { return epoch_; }
  long step() const { return step_; }

 private:
  int epoch_;
  long step_;
};

// Every hypothesis was pruned by the constraint set.
class ConstraintInfeasible : public Error {
 public:
  explicit ConstraintInfeasible(std::vector<std::string> blocking)
      : Error(make_message(blocking)), blocking_(std::move(blocking)) {}
  const std::vector<std::string>& blocking() const { return blocking_; }

 private:
  static std::string make_message(const std::vector<std::string>& blocking) {
    std::string msg = "constraint set is infeasible; blocking:";
    for (const auto& b : blocking) msg += " " + b;
    return msg;
  }
  std::vector<std::string> blocking_;
};

}  // namespace ctrlsimp
