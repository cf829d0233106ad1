#include "sci/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

#include "sci/errors.hpp"

namespace sci {

namespace {

// Skips whitespace and '#' comment lines, then reads one ASCII token.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
        } else if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    throw IoError("image read: unexpected end of header");
}

}  // namespace

void write_image(const ImageTensor& img, const std::filesystem::path& path) {
    if (img.channels() != 1 && img.channels() != 3)
        throw IoError("write_image: unsupported channel count");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_image: cannot open " + path.string());
    out << (img.channels() == 1 ? "P5" : "P6") << "\n"
        << img.width() << " " << img.height() << "\n255\n";
    std::vector<unsigned char> row(
        static_cast<std::size_t>(img.width()) * img.channels());
    for (int y = 0; y < img.height(); ++y) {
        std::size_t i = 0;
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                double v = std::floor(img.at(y, x, c) + 0.5);  // half-up
                v = std::min(std::max(v, 0.0), 255.0);
                row[i++] = static_cast<unsigned char>(v);
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw IoError("write_image: write failed for " + path.string());
}

ImageTensor read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_image: cannot open " + path.string());
    const std::string magic = next_token(in);
    int channels = 0;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw IoError("read_image: unsupported format '" + magic + "'");
    const int width = std::stoi(next_token(in));
    const int height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw IoError("read_image: expected maxval 255");
    in.get();  // single whitespace after maxval
    ImageTensor img(height, width, channels);
    std::vector<unsigned char> raw(img.size());
    in.read(reinterpret_cast<char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw IoError("read_image: truncated file " + path.string());
    for (std::size_t i = 0; i < raw.size(); ++i)
        img[i] = static_cast<double>(raw[i]);
    return img;
}

}  // namespace sci
