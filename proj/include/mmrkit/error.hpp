#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mmr {

// Error hierarchy. The CLI maps ConvergenceError to exit code 4 and every
// other mmr::Error to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing data files, bad columns, unparseable cells.
class DataError : public Error {
 public:
  using Error::Error;
};

class SingularityError : public Error {
 public:
  using Error::Error;
};

class NonPsdError : public Error {
 public:
  using Error::Error;
};

// Risk has no minimizer (e.g. separable logistic data).
class NonCompactError : public Error {
 public:
  using Error::Error;
};

// Point outside the interior of the gradient range of a cumulant.
class DomainError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> best_iterate)
      : Error(what), best_(std::move(best_iterate)) {}
  explicit ConvergenceError(const std::string& what) : Error(what) {}

  const std::vector<double>& best_iterate() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

}  // namespace mmr
