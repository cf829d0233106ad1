#pragma once

#include "sci/image.hpp"

namespace sci {

/// Linear radius growth: r0 at i = 0, r_max at i = ramp_iters, constant after.
struct RadiusSchedule {
    double r0 = 1.0;
    double r_max = 150.0;
    int ramp_iters = 150;
};

/// r0 + (r_max - r0) * min(i, ramp_iters) / ramp_iters.
double radius_at(int i, const RadiusSchedule& sched);

/// H x W x 1 indicator of the closed Euclidean disk of `radius` around
/// `center` (center.x = row, center.y = column). Clipped at image borders.
ImageTensor circ(PixelCoord center, double radius, int height, int width);

/// Center (x, y) maximizing sum over the disk of the per-pixel saliency
/// |lr_map| summed across channels; ties go to the smallest row-major index.
PixelCoord most_activated_center(const ImageTensor& lr_map, double radius);

/// Element-wise product; a 1-channel mask broadcasts across the map's
/// channels. The result is NOT renormalized.
ImageTensor apply_mask(const ImageTensor& lr_map, const ImageTensor& mask);

}  // namespace sci
