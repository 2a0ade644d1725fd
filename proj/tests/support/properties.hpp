#pragma once

// Randomized invariant checks shared by the property suite and the
// acceptance runner. Each check draws one case from the given generator and
// returns a description of the violation, or nothing when the case passes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "resmamba/rng.hpp"
#include "resmamba/tensor.hpp"

namespace rmb::testing {

using PropertyCheck = std::function<std::optional<std::string>(Rng&)>;

struct Property {
    std::string module;
    std::string name;
    std::size_t cases = 1000;
    PropertyCheck check;
};

struct PropertyOutcome {
    std::string module;
    std::string name;
    std::size_t cases = 0;
    std::size_t failures = 0;
    std::string first_failure;

    bool passed() const { return failures == 0 && cases > 0; }
};

const std::vector<Property>& all_properties();

/// A small differentiable expression built from one op kind in [0, kOpCaseKinds).
struct OpCase {
    std::string name;
    std::vector<Tensor> inputs;  // undefined entries are placeholders
    std::function<Tensor()> loss;
};

inline constexpr std::size_t kOpCaseKinds = 19;

OpCase make_op_case(Rng& rng, std::size_t kind);

PropertyOutcome run_property(const Property& property, std::uint64_t seed = 0);

}  // namespace rmb::testing
