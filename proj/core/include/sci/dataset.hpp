#pragma once

#include <filesystem>
#include <vector>

#include "sci/image.hpp"

namespace sci {

struct LabeledDataset {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    int num_classes = 0;

    std::size_t size() const { return images.size(); }
};

/// Loads an IDX image file (magic 0x00000803, big-endian dims, unsigned
/// bytes). Values become intensities in [0, 255], channels = 1.
std::vector<ImageTensor> load_idx_images(const std::filesystem::path& path);

/// Loads an IDX label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::filesystem::path& path);

/// Loads paired image/label files and checks they agree in length.
/// num_classes is max(label) + 1.
LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path);

}  // namespace sci
