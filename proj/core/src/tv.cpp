#include "sci/tv.hpp"

#include <cmath>

namespace sci {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double tv_value(const ImageTensor& img) {
    const int h = img.height(), w = img.width(), ch = img.channels();
    double total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                if (y + 1 < h)
                    total += std::abs(img.at(y + 1, x, c) - img.at(y, x, c));
                if (x + 1 < w)
                    total += std::abs(img.at(y, x + 1, c) - img.at(y, x, c));
            }
        }
    }
    return total;
}

ImageTensor tv_gradient(const ImageTensor& img) {
    const int h = img.height(), w = img.width(), ch = img.channels();
    ImageTensor grad(h, w, ch);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < ch; ++c) {
                if (y + 1 < h) {
                    const double s = sign(img.at(y + 1, x, c) - img.at(y, x, c));
                    grad.at(y + 1, x, c) += s;
                    grad.at(y, x, c) -= s;
                }
                if (x + 1 < w) {
                    const double s = sign(img.at(y, x + 1, c) - img.at(y, x, c));
                    grad.at(y, x + 1, c) += s;
                    grad.at(y, x, c) -= s;
                }
            }
        }
    }
    return grad;
}

}  // namespace sci
