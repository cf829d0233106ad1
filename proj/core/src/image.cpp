#include "sci/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sci/rng.hpp"

namespace sci {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument("ImageTensor: non-positive dimensions");
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("ImageTensor: channels must be 1 or 3");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

void ImageTensor::clamp() {
    for (double& v : data_) v = std::clamp(v, 0.0, 255.0);
}

bool ImageTensor::finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

double l2_norm(const ImageTensor& t) {
    double sum = 0.0;
    for (double v : t.values()) sum += v * v;
    return std::sqrt(sum);
}

ImageTensor dataset_mean(std::span<const ImageTensor> images) {
    if (images.empty())
        throw std::invalid_argument("dataset_mean: empty dataset");
    const ImageTensor& first = images.front();
    ImageTensor sum(first.height(), first.width(), first.channels());
    for (const ImageTensor& img : images) {
        if (!img.same_shape(first))
            throw std::invalid_argument("dataset_mean: image shape mismatch");
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += img[i];
    }
    const double inv = 1.0 / static_cast<double>(images.size());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] *= inv;
    return sum;
}

ImageTensor init_canvas(const ImageTensor& mean, double noise_amplitude,
                        std::uint64_t seed) {
    if (noise_amplitude < 0.0)
        throw std::invalid_argument("init_canvas: negative noise amplitude");
    ImageTensor canvas = mean;
    Rng rng(seed);
    for (double& v : canvas.values()) v += rng.uniform(0.0, noise_amplitude);
    canvas.clamp();
    return canvas;
}

}  // namespace sci
