#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sri {

// Typed failure conditions. The CLI maps categories to exit codes, library
// users can switch on code() instead of parsing messages.
enum class ErrorCode {
  InfeasibleAssignment,
  NotImputable,
  SpaceTooLarge,
  BudgetExhausted,
  DegenerateVariance,
  EmptyArm,
  ZeroDenominator,
  ChainTooShort,
  NoBracket,
  Undefined,
  InsufficientUnits,
  InvalidConfig,
  UsageError,
  SpecParseError,
  DataSchemaError,
};

// Stable snake_case tag per code; used in result artifacts and CLI error
// lines, so changing one is a format break.
const char* error_tag(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string msg) : std::runtime_error(std::move(msg)), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

class SpaceTooLarge : public Error {
 public:
  SpaceTooLarge(std::uint64_t count, std::string msg)
      : Error(ErrorCode::SpaceTooLarge, std::move(msg)), count_(count) {}
  std::uint64_t count() const { return count_; }

 private:
  std::uint64_t count_;
};

class BudgetExhausted : public Error {
 public:
  BudgetExhausted(std::uint64_t accepted, std::string msg)
      : Error(ErrorCode::BudgetExhausted, std::move(msg)), accepted_(accepted) {}
  std::uint64_t accepted() const { return accepted_; }

 private:
  std::uint64_t accepted_;
};

class DataSchemaError : public Error {
 public:
  DataSchemaError(std::size_t row, std::string column, std::string msg)
      : Error(ErrorCode::DataSchemaError, std::move(msg)), row_(row), column_(std::move(column)) {}
  std::size_t row() const { return row_; }  // 1-based, header = row 1
  const std::string& column() const { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

}  // namespace sri
