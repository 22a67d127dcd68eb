#pragma once

#include <stdexcept>

namespace acc {

// Dimension disagreement between containers that must conform.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Request exceeds what a fixed-capacity structure can hold or supply.
struct CapacityError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Input is well-shaped but degenerate in value (zero vector, all-identical points).
struct DegenerateInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Operation needs a feature the current configuration disables.
struct FeatureDisabledError : std::logic_error {
    using std::logic_error::logic_error;
};

// Training produced a non-finite or absurd loss.
struct NumericDivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace acc
