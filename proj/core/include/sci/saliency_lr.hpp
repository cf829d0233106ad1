#pragma once

#include "sci/image.hpp"

namespace sci {

/// Ramp of the gradient-direction weight: 0 -> c2 over the first t iterations,
/// constant c2 afterwards.
struct RampSchedule {
    double c2 = 4.0;
    int t = 150;
};

/// c2 * i / t for i < t, else c2.
double ramp_coefficient(int i, const RampSchedule& sched);

enum class AccumulationMode {
    /// State recurrence exactly as written: prev * i + C * grad_hat.
    /// The state magnitude grows like i!, so it is stored factored into a
    /// unit direction and a log magnitude (see CumulativeGradient); the
    /// downstream lr map only ever uses the direction.
    literal,
    /// Running-average variant: (prev * (i - 1) + C * grad_hat) / i.
    running_average,
};

enum class LrSignMode {
    signed_map,  ///< lr map keeps the accumulated gradient's sign
    magnitude,   ///< element-wise absolute value (L2 norm unchanged)
};

/// Cumulative weighted gradient after `iteration` steps, stored in
/// overflow-free form: the true state equals direction * exp(log_norm),
/// with ||direction|| = 1 (or direction = 0 before any contribution).
struct CumulativeGradient {
    ImageTensor direction;
    double log_norm = 0.0;
    int iteration = 0;

    static CumulativeGradient zero(int height, int width, int channels) {
        return {ImageTensor(height, width, channels), 0.0, 0};
    }

    /// direction * exp(log_norm); only meaningful while the magnitude is
    /// representable (small iteration counts, e.g. in oracle comparisons).
    ImageTensor materialize() const;
};

/// Advances the state by one iteration: i must equal prev.iteration + 1.
/// The incoming gradient is normalized to unit global L2 before weighting;
/// gradients with norm < 1e-12 contribute nothing (pure rescale).
CumulativeGradient update_cumulative(const CumulativeGradient& prev,
                                     const ImageTensor& grad_i, int i,
                                     const RampSchedule& sched,
                                     AccumulationMode mode =
                                         AccumulationMode::literal);

/// Unit-global-L2-norm per-element learning rate map.
struct LrMap {
    ImageTensor values;
    bool degenerate = false;  ///< state norm < 1e-12; uniform fallback used
};

/// state / ||state|| (global L2). Degenerate input yields the uniform map.
LrMap normalize_lr_map(const CumulativeGradient& cum,
                       LrSignMode mode = LrSignMode::signed_map);

/// All elements equal with unit global L2 norm: 1/sqrt(H*W*C).
ImageTensor uniform_lr_map(int height, int width, int channels);

}  // namespace sci
