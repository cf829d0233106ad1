#pragma once

#include <optional>

#include "sci/image.hpp"

namespace sci {

struct TvConfig {
    /// TV weight. nullopt = auto-calibrate at the first TV iteration so the
    /// TV step's max element magnitude is ~10% of the first ascent step's.
    std::optional<double> lambda1;
    /// The TV descent step runs once every period_k iterations (>= 1).
    int period_k = 1;
};

/// Anisotropic total variation: sum over in-range neighbor pairs of
/// |I(y+1,x,c) - I(y,x,c)| + |I(y,x+1,c) - I(y,x,c)|, channels independent,
/// out-of-range pairs omitted. Terms are accumulated in (y, x, c) order,
/// vertical term before horizontal, so the value is bit-reproducible.
double tv_value(const ImageTensor& img);

/// Subgradient of tv_value with sign(0) = 0; same shape as the input.
ImageTensor tv_gradient(const ImageTensor& img);

}  // namespace sci
