#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sci/image.hpp"
#include "sci/net.hpp"

namespace sci {

struct RunMetrics {
    std::string run_id;
    int class_id = 0;
    std::string mode;  // "ci" | "pre" | "sci" | "fuse"
    double target_logit = 0.0;
    double softmax_confidence = 0.0;  // in [0, 1]
    double tv_energy = 0.0;
    int salient_components = 0;
};

/// (logit, softmax confidence) of class c; softmax is max-subtracted so a
/// dominant logit cannot overflow.
std::pair<double, double> confidence_metrics(const Classifier& model,
                                             const ImageTensor& img, int c);

/// Counts connected components of the super-threshold set of |saliency|
/// (channels summed), threshold = the given percentile (nearest-rank) of
/// those values. "Super" means strictly greater. 8- or 4-connectivity.
int salient_components(const ImageTensor& saliency, double percentile,
                       int connectivity = 8);

/// All metrics for one synthesized image: saliency for the component count
/// is |input gradient of the target logit| at the image.
RunMetrics compute_run_metrics(const Classifier& model, const ImageTensor& img,
                               int class_id, std::string mode,
                               std::string run_id, double percentile = 90.0,
                               int connectivity = 8);

struct ReportEntry {
    RunMetrics metrics;
    ImageTensor image;
};

/// Writes report.csv (one row per run, ordered by class then mode then run
/// id) and montage.pnm (grid with one column per distinct mode) into
/// out_dir. Deterministic: identical inputs give byte-identical files.
void emit_report(std::span<const ReportEntry> entries,
                 const std::filesystem::path& out_dir);

}  // namespace sci
