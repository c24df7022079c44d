#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace wegp {

// Shape/size mismatches between operands.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// An input object violates its structural invariants.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A value is outside the mathematical domain of an operation.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Basis construction ran out of candidates before reaching the target rank.
struct BasisExhaustionError : std::runtime_error {
    BasisExhaustionError(const std::string& msg, int rank)
        : std::runtime_error(msg), rank_achieved(rank) {}
    int rank_achieved;
};

// Cholesky factorization failed even after escalating jitter.
struct ConditioningError : std::runtime_error {
    ConditioningError(const std::string& msg, std::vector<double> ladder)
        : std::runtime_error(msg), jitter_ladder(std::move(ladder)) {}
    std::vector<double> jitter_ladder;
};

// Optimizer failed to produce any usable local optimum.
struct OptimizationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment configuration does not resolve to runnable settings.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Metric is undefined for the given inputs (e.g. constant truth vector).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wegp
