#include "sci/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include "sci/errors.hpp"

namespace sci {

namespace {

std::uint32_t read_be32(std::istream& in, const std::filesystem::path& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4)
        throw IoError("idx read: truncated header in " + path.string());
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

std::vector<ImageTensor> load_idx_images(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx read: cannot open " + path.string());
    if (read_be32(in, path) != 0x00000803u)
        throw IoError("idx read: bad image magic in " + path.string());
    const std::uint32_t count = read_be32(in, path);
    const std::uint32_t rows = read_be32(in, path);
    const std::uint32_t cols = read_be32(in, path);
    std::vector<ImageTensor> images;
    images.reserve(count);
    std::vector<unsigned char> raw(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t n = 0; n < count; ++n) {
        in.read(reinterpret_cast<char*>(raw.data()),
                static_cast<std::streamsize>(raw.size()));
        if (in.gcount() != static_cast<std::streamsize>(raw.size()))
            throw IoError("idx read: truncated image data in " + path.string());
        ImageTensor img(static_cast<int>(rows), static_cast<int>(cols), 1);
        for (std::size_t i = 0; i < raw.size(); ++i)
            img[i] = static_cast<double>(raw[i]);
        images.push_back(std::move(img));
    }
    return images;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx read: cannot open " + path.string());
    if (read_be32(in, path) != 0x00000801u)
        throw IoError("idx read: bad label magic in " + path.string());
    const std::uint32_t count = read_be32(in, path);
    std::vector<unsigned char> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("idx read: truncated label data in " + path.string());
    return {raw.begin(), raw.end()};
}

LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                const std::filesystem::path& labels_path) {
    LabeledDataset ds;
    ds.images = load_idx_images(images_path);
    ds.labels = load_idx_labels(labels_path);
    if (ds.images.size() != ds.labels.size())
        throw IoError("idx read: image/label count mismatch");
    const auto it = std::max_element(ds.labels.begin(), ds.labels.end());
    ds.num_classes = it == ds.labels.end() ? 0 : *it + 1;
    return ds;
}

}  // namespace sci
