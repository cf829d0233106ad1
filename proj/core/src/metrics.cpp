#include "sci/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <vector>

#include "sci/errors.hpp"
#include "sci/image_io.hpp"
#include "sci/tv.hpp"

namespace sci {

std::pair<double, double> confidence_metrics(const Classifier& model,
                                             const ImageTensor& img, int c) {
    if (c < 0 || c >= model.num_classes())
        throw std::invalid_argument("confidence_metrics: class out of range");
    const LogitVector logits = model.forward_logits(img);
    const double mx =
        *std::max_element(logits.values.begin(), logits.values.end());
    double z = 0.0;
    for (double l : logits.values) z += std::exp(l - mx);
    return {logits.values[c], std::exp(logits.values[c] - mx) / z};
}

int salient_components(const ImageTensor& saliency, double percentile,
                       int connectivity) {
    if (percentile <= 0.0 || percentile >= 100.0)
        throw std::invalid_argument(
            "salient_components: percentile must be in (0, 100)");
    if (connectivity != 4 && connectivity != 8)
        throw std::invalid_argument(
            "salient_components: connectivity must be 4 or 8");
    const int h = saliency.height(), w = saliency.width();
    std::vector<double> mag(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int c = 0; c < saliency.channels(); ++c)
                s += std::abs(saliency.at(y, x, c));
            mag[static_cast<std::size_t>(y) * w + x] = s;
        }

    // nearest-rank percentile
    std::vector<double> sorted = mag;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(sorted.size())));
    const double threshold = sorted[std::min(rank, sorted.size()) - 1];

    std::vector<char> super(mag.size());
    for (std::size_t i = 0; i < mag.size(); ++i) super[i] = mag[i] > threshold;

    // flood fill
    std::vector<char> seen(mag.size(), 0);
    std::vector<std::pair<int, int>> stack;
    int components = 0;
    for (int y0 = 0; y0 < h; ++y0) {
        for (int x0 = 0; x0 < w; ++x0) {
            const std::size_t i0 = static_cast<std::size_t>(y0) * w + x0;
            if (!super[i0] || seen[i0]) continue;
            ++components;
            seen[i0] = 1;
            stack.push_back({y0, x0});
            while (!stack.empty()) {
                const auto [y, x] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dy == 0 && dx == 0) continue;
                        if (connectivity == 4 && dy != 0 && dx != 0) continue;
                        const int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                        const std::size_t ni =
                            static_cast<std::size_t>(ny) * w + nx;
                        if (super[ni] && !seen[ni]) {
                            seen[ni] = 1;
                            stack.push_back({ny, nx});
                        }
                    }
                }
            }
        }
    }
    return components;
}

RunMetrics compute_run_metrics(const Classifier& model, const ImageTensor& img,
                               int class_id, std::string mode,
                               std::string run_id, double percentile,
                               int connectivity) {
    RunMetrics m;
    m.run_id = std::move(run_id);
    m.class_id = class_id;
    m.mode = std::move(mode);
    std::tie(m.target_logit, m.softmax_confidence) =
        confidence_metrics(model, img, class_id);
    m.tv_energy = tv_value(img);
    m.salient_components = salient_components(
        model.input_gradient(img, class_id), percentile, connectivity);
    return m;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

void emit_report(std::span<const ReportEntry> entries,
                 const std::filesystem::path& out_dir) {
    if (entries.empty())
        throw std::invalid_argument("emit_report: no runs given");
    std::filesystem::create_directories(out_dir);

    std::vector<const ReportEntry*> order;
    order.reserve(entries.size());
    for (const ReportEntry& e : entries) order.push_back(&e);
    std::sort(order.begin(), order.end(),
              [](const ReportEntry* a, const ReportEntry* b) {
                  const RunMetrics& ma = a->metrics;
                  const RunMetrics& mb = b->metrics;
                  return std::tie(ma.class_id, ma.mode, ma.run_id) <
                         std::tie(mb.class_id, mb.mode, mb.run_id);
              });

    {
        std::ofstream csv(out_dir / "report.csv", std::ios::binary);
        if (!csv) throw IoError("emit_report: cannot write report.csv");
        csv << "run_id,class,mode,logit,confidence,tv,components\n";
        for (const ReportEntry* e : order) {
            const RunMetrics& m = e->metrics;
            csv << m.run_id << "," << m.class_id << "," << m.mode << ","
                << format_double(m.target_logit) << ","
                << format_double(m.softmax_confidence) << ","
                << format_double(m.tv_energy) << "," << m.salient_components
                << "\n";
        }
    }

    // Montage: one column per distinct mode, rows follow the sorted order.
    const ImageTensor& first = order.front()->image;
    for (const ReportEntry* e : order)
        if (!e->image.same_shape(first))
            throw std::invalid_argument("emit_report: image shape mismatch");
    std::set<std::string> modes;
    for (const ReportEntry* e : order) modes.insert(e->metrics.mode);
    const int cols = static_cast<int>(modes.size());
    const int rows =
        (static_cast<int>(order.size()) + cols - 1) / cols;
    const int pad = 2;
    const double pad_value = 32.0;
    const int cell_h = first.height() + pad, cell_w = first.width() + pad;
    ImageTensor montage(rows * cell_h + pad, cols * cell_w + pad,
                        first.channels(), pad_value);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const int row = static_cast<int>(i) / cols;
        const int col = static_cast<int>(i) % cols;
        const ImageTensor& img = order[i]->image;
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                for (int c = 0; c < img.channels(); ++c)
                    montage.at(row * cell_h + pad + y, col * cell_w + pad + x,
                               c) = img.at(y, x, c);
    }
    write_image(montage, out_dir / "montage.pnm");
}

}  // namespace sci
