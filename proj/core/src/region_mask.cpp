#include "sci/region_mask.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace sci {

double radius_at(int i, const RadiusSchedule& sched) {
    if (i < 0) throw std::invalid_argument("radius_at: negative i");
    if (sched.ramp_iters < 1)
        throw std::invalid_argument("radius_at: ramp_iters < 1");
    const double frac =
        static_cast<double>(std::min(i, sched.ramp_iters)) / sched.ramp_iters;
    return sched.r0 + (sched.r_max - sched.r0) * frac;
}

ImageTensor circ(PixelCoord center, double radius, int height, int width) {
    if (center.x < 0 || center.x >= height || center.y < 0 || center.y >= width)
        throw std::invalid_argument("circ: center out of bounds");
    if (radius < 0.0) throw std::invalid_argument("circ: negative radius");
    ImageTensor mask(height, width, 1);
    const double r2 = radius * radius;
    for (int y = 0; y < height; ++y) {
        const double dy = static_cast<double>(y - center.x);
        for (int x = 0; x < width; ++x) {
            const double dx = static_cast<double>(x - center.y);
            if (dy * dy + dx * dx <= r2) mask.at(y, x, 0) = 1.0;
        }
    }
    return mask;
}

PixelCoord most_activated_center(const ImageTensor& lr_map, double radius) {
    if (radius <= 0.0)
        throw std::invalid_argument("most_activated_center: radius must be > 0");
    const int h = lr_map.height(), w = lr_map.width(), ch = lr_map.channels();

    // Per-pixel saliency: |lr| summed across channels.
    std::vector<double> sal(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int c = 0; c < ch; ++c) s += std::abs(lr_map.at(y, x, c));
            sal[static_cast<std::size_t>(y) * w + x] = s;
        }

    // Row-major disk stencil. Offsets are enumerated in the same order a
    // full-image row-major sweep would visit them, so the per-center sums
    // round identically to the exhaustive reference.
    const int reach = static_cast<int>(std::floor(radius));
    const double r2 = radius * radius;
    std::vector<std::pair<int, int>> stencil;
    for (int dy = -reach; dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx)
            if (static_cast<double>(dy) * dy + static_cast<double>(dx) * dx <= r2)
                stencil.emplace_back(dy, dx);

    PixelCoord best{0, 0};
    double best_score = -1.0;
    for (int cy = 0; cy < h; ++cy) {
        for (int cx = 0; cx < w; ++cx) {
            double score = 0.0;
            for (const auto& [dy, dx] : stencil) {
                const int y = cy + dy, x = cx + dx;
                if (y >= 0 && y < h && x >= 0 && x < w)
                    score += sal[static_cast<std::size_t>(y) * w + x];
            }
            if (score > best_score) {
                best_score = score;
                best = {cy, cx};
            }
        }
    }
    return best;
}

ImageTensor apply_mask(const ImageTensor& lr_map, const ImageTensor& mask) {
    if (mask.height() != lr_map.height() || mask.width() != lr_map.width() ||
        (mask.channels() != 1 && mask.channels() != lr_map.channels()))
        throw std::invalid_argument("apply_mask: shape mismatch");
    ImageTensor out = lr_map;
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            for (int c = 0; c < out.channels(); ++c)
                out.at(y, x, c) *=
                    mask.at(y, x, mask.channels() == 1 ? 0 : c);
    return out;
}

}  // namespace sci
