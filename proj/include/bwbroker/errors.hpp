#pragma once

#include <stdexcept>
#include <string>

namespace bwbroker {

// Base for all bwbroker errors so callers can catch broadly.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class UnknownLeafError : public Error {
 public:
  using Error::Error;
};

class InfeasibleMinsError : public Error {
 public:
  using Error::Error;
};

class MissingLeafDemandError : public Error {
 public:
  using Error::Error;
};

class PacketTooLargeError : public Error {
 public:
  using Error::Error;
};

class NonPositiveRateError : public Error {
 public:
  using Error::Error;
};

class MalformedReportError : public Error {
 public:
  using Error::Error;
};

class UnknownMachineError : public Error {
 public:
  using Error::Error;
};

class UnknownRackError : public Error {
 public:
  using Error::Error;
};

class EmptyRackError : public Error {
 public:
  using Error::Error;
};

class UnknownLinkError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class UnsortedTraceError : public Error {
 public:
  using Error::Error;
};

class RhoTooSmallError : public Error {
 public:
  using Error::Error;
};

class InvalidEnvelopeError : public Error {
 public:
  using Error::Error;
};

class InvalidProbabilityError : public Error {
 public:
  using Error::Error;
};

}  // namespace bwbroker
