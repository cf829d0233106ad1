#pragma once

#include <filesystem>

#include "sci/image.hpp"

namespace sci {

/// Writes a binary NetPBM file: P5 for 1-channel, P6 for 3-channel images.
/// Intensities are rounded half-up to 8 bits; read-back round-trips within
/// +-0.5 per element. NetPBM is the one raster format used across the repo.
void write_image(const ImageTensor& img, const std::filesystem::path& path);

/// Reads a binary P5/P6 NetPBM file (maxval 255).
ImageTensor read_image(const std::filesystem::path& path);

}  // namespace sci
