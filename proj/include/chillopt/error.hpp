#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chillopt {

enum class ErrorCode {
  InvalidArgument,
  LoadInfeasible,
  EquipmentOff,
  OutOfOrder,
  InsufficientData,
  Degenerate,
  ZeroActual,
  DoesNotFit,
  NonFinite,
  UntrainedModule,
  NoFeasiblePoint,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);

// Every module reports failures through this type; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, const std::string& what) {
  if (!condition) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace chillopt
