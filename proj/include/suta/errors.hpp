#pragma once

#include <stdexcept>
#include <string>

namespace suta {

// Caller broke a documented precondition (shapes, ranges, config fields).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data is well-formed but unusable (OOV transcript, infeasible CTC
// target, empty reference, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file could not be parsed. `record` names the offending record when known.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& message, std::string record = {})
      : std::runtime_error(record.empty() ? message : message + " (record '" + record + "')"),
        record_(std::move(record)) {}

  const std::string& record() const noexcept { return record_; }

 private:
  std::string record_;
};

#define SUTA_REQUIRE(cond, msg)                         \
  do {                                                  \
    if (!(cond)) throw ::suta::ContractViolation(msg);  \
  } while (0)

}  // namespace suta
