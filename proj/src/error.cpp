#include "sri/error.hpp"

namespace sri {

const char* error_tag(ErrorCode c) {
  switch (c) {
    case ErrorCode::InfeasibleAssignment:
      return "infeasible_assignment";
    case ErrorCode::NotImputable:
      return "not_imputable";
    case ErrorCode::SpaceTooLarge:
      return "space_too_large";
    case ErrorCode::BudgetExhausted:
      return "budget_exhausted";
    case ErrorCode::DegenerateVariance:
      return "degenerate_variance";
    case ErrorCode::EmptyArm:
      return "empty_arm";
    case ErrorCode::ZeroDenominator:
      return "zero_denominator";
    case ErrorCode::ChainTooShort:
      return "chain_too_short";
    case ErrorCode::NoBracket:
      return "no_bracket";
    case ErrorCode::Undefined:
      return "undefined";
    case ErrorCode::InsufficientUnits:
      return "insufficient_units";
    case ErrorCode::InvalidConfig:
      return "invalid_config";
    case ErrorCode::UsageError:
      return "usage_error";
    case ErrorCode::SpecParseError:
      return "spec_parse_error";
    case ErrorCode::DataSchemaError:
      return "data_schema_error";
  }
  return "error";
}

}  // namespace sri
