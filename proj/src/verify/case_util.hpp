#pragma once

#include <functional>
#include <vector>

#include "rose/rng.hpp"
#include "rose/tensor.hpp"

namespace rose::verify {

using MultiFn = std::function<ad::Tensor(const std::vector<ad::Tensor>&)>;

/// Worst check_gradient discrepancy of random_projection(fn(inputs)) with
/// respect to each listed input (all inputs when `which` is empty).
double check_inputs(const std::vector<ad::Tensor>& inputs, const MultiFn& fn, std::uint64_t seed,
                    std::vector<std::size_t> which = {});

/// Disparities with fractional part in [0.1, 0.9] so no probe crosses a
/// bilinear knot.
ad::Tensor fractional_disparity(const ad::Shape& shape, Rng& rng, double max_int);

}  // namespace rose::verify
