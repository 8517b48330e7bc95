#ifndef MCG_ERRORS_HPP
#define MCG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mcg {

// Error categories. The numeric codes are mirrored by the C API and the
// CLI exit codes (config -> 2, oracle protocol -> 3, everything else -> 1).
enum class ErrorCode {
  runtime = 1,
  config = 2,
  oracle_protocol = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg)
      : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

#define MCG_DEFINE_ERROR(NAME, CODE)                      \
  class NAME : public Error {                             \
   public:                                                \
    explicit NAME(const std::string& msg)                 \
        : Error(ErrorCode::CODE, std::string(#NAME ": ") + msg) {} \
  }

MCG_DEFINE_ERROR(InvalidTensor, runtime);
MCG_DEFINE_ERROR(ShapeError, runtime);
MCG_DEFINE_ERROR(InvalidScores, runtime);
MCG_DEFINE_ERROR(InvalidGoal, runtime);
MCG_DEFINE_ERROR(BudgetExhausted, runtime);
MCG_DEFINE_ERROR(OracleUnavailable, runtime);
MCG_DEFINE_ERROR(NumericalError, runtime);
MCG_DEFINE_ERROR(DataError, runtime);
MCG_DEFINE_ERROR(HistoryEmpty, runtime);
MCG_DEFINE_ERROR(EmptyResults, runtime);
MCG_DEFINE_ERROR(CheckpointError, runtime);
MCG_DEFINE_ERROR(ConfigError, config);
MCG_DEFINE_ERROR(OracleProtocolError, oracle_protocol);

#undef MCG_DEFINE_ERROR

}  // namespace mcg

#endif  // MCG_ERRORS_HPP
