#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dknn {

using VertexId = std::uint32_t;
using EdgeId = std::uint32_t;
using SubgraphId = std::uint32_t;
using ObjectId = std::uint64_t;
using QueryId = std::uint64_t;
using Version = std::uint64_t;

// Travel cost. Units are whatever the edge weights use.
using Cost = double;

inline constexpr Cost kInfinity = std::numeric_limits<Cost>::infinity();
inline constexpr VertexId kNoVertex = std::numeric_limits<VertexId>::max();

// Sender id used for messages that originate at the coordinator (root dispatch).
inline constexpr SubgraphId kCoordinatorId = std::numeric_limits<SubgraphId>::max();

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : Error(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Raised when a call breaks a documented precondition of a stateful component.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// The runtime went quiet while a query was still unfinished.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace dknn
