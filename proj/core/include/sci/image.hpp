#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sci {

/// H x W x C grid of real values, row-major (y, x, c), C = 1 or 3.
///
/// The same container holds images (intensities in [0, 255]) and
/// gradient/learning-rate fields (unbounded reals). Image-producing
/// operations clamp their result before returning; fields are never clamped.
class ImageTensor {
public:
    ImageTensor() = default;
    ImageTensor(int height, int width, int channels, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    double at(int y, int x, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const ImageTensor& other) const {
        return height_ == other.height_ && width_ == other.width_ &&
               channels_ == other.channels_;
    }

    /// Clamps every element into [0, 255] in place. Idempotent.
    void clamp();

    /// True if every element is finite.
    bool finite() const;

    bool operator==(const ImageTensor&) const = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Integer pixel location: x is the row index, y the column index.
struct PixelCoord {
    int x = 0;
    int y = 0;
    bool operator==(const PixelCoord&) const = default;
};

/// Global L2 norm over all elements.
double l2_norm(const ImageTensor& t);

/// Per-element arithmetic mean of a non-empty, shape-homogeneous collection.
ImageTensor dataset_mean(std::span<const ImageTensor> images);

/// mean + U[0, noise_amplitude] per element, clamped to [0, 255].
/// Deterministic for a fixed seed.
ImageTensor init_canvas(const ImageTensor& mean, double noise_amplitude,
                        std::uint64_t seed);

}  // namespace sci
