#include "sci/transforms.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace sci {

namespace {

// Bilinear lookup with constant fill outside the support.
double sample_bilinear(const ImageTensor& img, double y, double x, int c,
                       double fill) {
    const int h = img.height(), w = img.width();
    if (y < -1.0 || y > h || x < -1.0 || x > w) return fill;
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const double fy = y - y0, fx = x - x0;
    auto at = [&](int yy, int xx) {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return fill;
        return img.at(yy, xx, c);
    };
    const double top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    const double bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    return top * (1.0 - fy) + bot * fy;
}

std::vector<double> channel_means(const ImageTensor& img) {
    std::vector<double> means(img.channels(), 0.0);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c)
                means[c] += img.at(y, x, c);
    const double inv = 1.0 / (static_cast<double>(img.height()) * img.width());
    for (double& m : means) m *= inv;
    return means;
}

}  // namespace

int effective_crop_pad(const TransformParams& params, int size) {
    if (params.crop_pad >= 0) return params.crop_pad;
    return (size + 15) / 16;
}

TransformSample sample_transform(const TransformParams& params, Rng& rng,
                                 int image_size) {
    if (params.scale_min > params.scale_max || params.scale_min <= 0.0)
        throw std::invalid_argument("sample_transform: bad scale range");
    if (params.apply_probability < 0.0 || params.apply_probability > 1.0)
        throw std::invalid_argument("sample_transform: bad apply probability");
    TransformSample s;
    if (!params.enabled) return s;

    // Fixed draw order keeps the stream aligned whether or not this sample
    // ends up applied.
    const double coin = rng.uniform();
    const double angle = rng.uniform(-params.rotation_deg, params.rotation_deg);
    const double scale = rng.uniform(params.scale_min, params.scale_max);
    const int pad = effective_crop_pad(params, image_size);
    const int cx = pad > 0 ? rng.uniform_int(0, 2 * pad) : 0;
    const int cy = pad > 0 ? rng.uniform_int(0, 2 * pad) : 0;
    std::array<double, 3> jitter{};
    for (double& j : jitter) j = rng.uniform(-params.jitter, params.jitter);

    if (coin >= params.apply_probability) return s;
    s.identity = false;
    s.angle_deg = angle;
    s.scale = scale;
    s.pad = pad;
    s.crop_x = cx;
    s.crop_y = cy;
    s.jitter = jitter;
    return s;
}

ImageTensor apply_transform(const ImageTensor& img, const TransformSample& s) {
    if (!img.finite())
        throw std::invalid_argument("apply_transform: non-finite image");
    if (s.identity) return img;
    if (s.scale <= 0.0)
        throw std::invalid_argument("apply_transform: degenerate scale");

    const int h = img.height(), w = img.width(), ch = img.channels();
    const std::vector<double> fill = channel_means(img);
    ImageTensor cur = img;

    // Rotation then scaling about the image center, fused into one resample.
    if (s.angle_deg != 0.0 || s.scale != 1.0) {
        const double theta = s.angle_deg * std::numbers::pi / 180.0;
        const double cos_t = std::cos(theta), sin_t = std::sin(theta);
        const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
        const double inv_scale = 1.0 / s.scale;
        ImageTensor out(h, w, ch);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dy = (y - cy) * inv_scale;
                const double dx = (x - cx) * inv_scale;
                const double sy = cy + cos_t * dy - sin_t * dx;
                const double sx = cx + sin_t * dy + cos_t * dx;
                for (int c = 0; c < ch; ++c)
                    out.at(y, x, c) = sample_bilinear(cur, sy, sx, c, fill[c]);
            }
        }
        cur = std::move(out);
    }

    // Crop of (S - 2*pad) at the sampled offset, resized back to S.
    if (s.pad > 0) {
        const int crop_h = h - 2 * s.pad, crop_w = w - 2 * s.pad;
        if (crop_h <= 0 || crop_w <= 0)
            throw std::invalid_argument("apply_transform: crop pad too large");
        ImageTensor out(h, w, ch);
        const double sy_scale = static_cast<double>(crop_h) / h;
        const double sx_scale = static_cast<double>(crop_w) / w;
        for (int y = 0; y < h; ++y) {
            const double sy = (y + 0.5) * sy_scale - 0.5 + s.crop_y;
            for (int x = 0; x < w; ++x) {
                const double sx = (x + 0.5) * sx_scale - 0.5 + s.crop_x;
                for (int c = 0; c < ch; ++c)
                    out.at(y, x, c) = sample_bilinear(cur, sy, sx, c, fill[c]);
            }
        }
        cur = std::move(out);
    }

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < ch; ++c)
                cur.at(y, x, c) += s.jitter[std::min(c, 2)];

    cur.clamp();
    return cur;
}

}  // namespace sci
