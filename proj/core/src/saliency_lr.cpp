#include "sci/saliency_lr.hpp"

#include <cmath>
#include <stdexcept>

namespace sci {

namespace {
constexpr double kNormGuard = 1e-12;
}

double ramp_coefficient(int i, const RampSchedule& sched) {
    if (i < 0) throw std::invalid_argument("ramp_coefficient: negative i");
    if (i >= sched.t) return sched.c2;
    return sched.c2 * static_cast<double>(i) / static_cast<double>(sched.t);
}

ImageTensor CumulativeGradient::materialize() const {
    ImageTensor out = direction;
    const double scale = std::exp(log_norm);
    for (double& v : out.values()) v *= scale;
    return out;
}

CumulativeGradient update_cumulative(const CumulativeGradient& prev,
                                     const ImageTensor& grad_i, int i,
                                     const RampSchedule& sched,
                                     AccumulationMode mode) {
    if (i != prev.iteration + 1)
        throw std::invalid_argument("update_cumulative: non-consecutive iteration");
    if (!prev.direction.same_shape(grad_i))
        throw std::invalid_argument("update_cumulative: gradient shape mismatch");
    if (!grad_i.finite())
        throw std::invalid_argument("update_cumulative: non-finite gradient");

    const double coeff = ramp_coefficient(i, sched);
    const double gnorm = l2_norm(grad_i);

    // True state: prev_state * i + coeff * grad_hat (literal) or the
    // running average. Working with state = direction * exp(log_norm),
    // factor exp(log_norm) out of the update.
    double prev_factor, grad_factor;
    if (mode == AccumulationMode::literal) {
        prev_factor = static_cast<double>(i);
        grad_factor = coeff * std::exp(-prev.log_norm);
    } else {
        prev_factor = static_cast<double>(i - 1) / i;
        grad_factor = coeff * std::exp(-prev.log_norm) / i;
    }
    if (gnorm < kNormGuard) grad_factor = 0.0;

    CumulativeGradient next;
    next.iteration = i;
    next.direction = prev.direction;
    auto out = next.direction.values();
    const auto g = grad_i.values();
    const double gscale = grad_factor == 0.0 ? 0.0 : grad_factor / gnorm;
    for (std::size_t e = 0; e < out.size(); ++e)
        out[e] = out[e] * prev_factor + gscale * g[e];

    const double norm = l2_norm(next.direction);
    if (norm < kNormGuard) {
        // Still no contribution; keep an exact zero state.
        for (double& v : out) v = 0.0;
        next.log_norm = 0.0;
        return next;
    }
    const double inv = 1.0 / norm;
    for (double& v : out) v *= inv;
    next.log_norm = prev.log_norm + std::log(norm);
    return next;
}

LrMap normalize_lr_map(const CumulativeGradient& cum, LrSignMode mode) {
    const double norm = l2_norm(cum.direction);
    if (norm < kNormGuard) {
        return {uniform_lr_map(cum.direction.height(), cum.direction.width(),
                               cum.direction.channels()),
                true};
    }
    LrMap map{cum.direction, false};
    const double inv = 1.0 / norm;
    for (double& v : map.values.values()) {
        v *= inv;
        if (mode == LrSignMode::magnitude) v = std::abs(v);
    }
    return map;
}

ImageTensor uniform_lr_map(int height, int width, int channels) {
    const double n = static_cast<double>(height) * width * channels;
    return ImageTensor(height, width, channels, 1.0 / std::sqrt(n));
}

}  // namespace sci
