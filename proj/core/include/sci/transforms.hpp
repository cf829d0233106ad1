#pragma once

#include <array>
#include <cstdint>

#include "sci/image.hpp"
#include "sci/rng.hpp"

namespace sci {

/// Inter-iteration random transformation knobs. All values are conventions
/// recorded in the run config snapshot, not literature values.
struct TransformParams {
    bool enabled = true;
    double rotation_deg = 5.0;   // angle drawn from +-rotation_deg
    double scale_min = 0.95;
    double scale_max = 1.05;
    int crop_pad = -1;           // -1 = auto: ceil(S/16) for input size S
    double jitter = 10.0;        // per-channel shift drawn from +-jitter
    double apply_probability = 1.0;
};

/// Concrete draws for one iteration.
struct TransformSample {
    bool identity = true;
    double angle_deg = 0.0;
    double scale = 1.0;
    int pad = 0;
    int crop_x = 0, crop_y = 0;  // crop window offset in [0, 2*pad]
    std::array<double, 3> jitter{0.0, 0.0, 0.0};
    std::uint64_t id = 0;        // sequence number recorded in the trace
};

/// Resolves crop_pad -1 to ceil(size/16).
int effective_crop_pad(const TransformParams& params, int size);

/// Draws one sample. Disabled params return the identity without consuming
/// randomness; an enabled draw that fails the apply_probability coin also
/// returns the identity (randomness consumed, stream stays aligned).
TransformSample sample_transform(const TransformParams& params, Rng& rng,
                                 int image_size);

/// Applies rotate+scale (one bilinear resample about the center, fill =
/// per-channel mean), then crop of (S - 2*pad) resized back to S, then
/// per-channel jitter; clamps to [0, 255]. Identity samples are returned
/// bit-exactly.
ImageTensor apply_transform(const ImageTensor& img, const TransformSample& s);

}  // namespace sci
