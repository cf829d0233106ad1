// sci: train a small classifier, synthesize class impressions from it,
// fuse class pairs, check gradients, and emit reports.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sci/config.hpp"
#include "sci/dataset.hpp"
#include "sci/errors.hpp"
#include "sci/image_io.hpp"
#include "sci/metrics.hpp"
#include "sci/net.hpp"
#include "sci/rng.hpp"
#include "sci/run_io.hpp"
#include "sci/synthesizer.hpp"

namespace {

// Exit codes (documented in the README): sysexits-inspired.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 64;
constexpr int kExitConfig = 65;
constexpr int kExitNumerical = 70;
constexpr int kExitIo = 74;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_root;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "Config file (INI; see configs/)");
    cmd->add_option("--set", opts.overrides,
                    "Override one config key: section.key=value (repeatable)");
    cmd->add_option("--out-root", opts.out_root,
                    "Run output root (default: $SCI_OUTPUT_ROOT or ./runs)");
}

sci::CliConfig resolve_config(const CommonOpts& opts) {
    sci::CliConfig cfg;
    if (!opts.config_path.empty())
        sci::apply_config_file(cfg, opts.config_path);
    for (const std::string& o : opts.overrides) sci::apply_override(cfg, o);
    if (!opts.out_root.empty()) cfg.out_root = opts.out_root;
    if (cfg.out_root.empty()) {
        const char* env = std::getenv("SCI_OUTPUT_ROOT");
        cfg.out_root = env && *env ? env : "runs";
    }
    return cfg;
}

std::string run_id(const std::string& mode, int cls, std::uint64_t seed) {
    std::ostringstream os;
    os << mode << "_c" << (cls < 10 ? "0" : "") << cls << "_s" << seed;
    return os.str();
}

std::vector<int> parse_classes(const std::string& spec, int num_classes) {
    std::vector<int> classes;
    if (spec == "all") {
        for (int c = 0; c < num_classes; ++c) classes.push_back(c);
        return classes;
    }
    std::istringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const int c = std::stoi(tok);
        if (c < 0 || c >= num_classes)
            throw sci::UsageError("class " + tok + " out of range [0, " +
                                  std::to_string(num_classes) + ")");
        classes.push_back(c);
    }
    if (classes.empty()) throw sci::UsageError("no classes given");
    return classes;
}

sci::PixelCoord parse_coord(const std::string& s) {
    const auto comma = s.find(',');
    if (comma == std::string::npos)
        throw sci::UsageError("coordinate '" + s + "': expected x,y");
    return {std::stoi(s.substr(0, comma)), std::stoi(s.substr(comma + 1))};
}

int cmd_train(const std::string& images, const std::string& labels,
              const std::string& test_images, const std::string& test_labels,
              const std::string& out, sci::TrainConfig hp, int limit) {
    sci::LabeledDataset train = sci::load_idx_dataset(images, labels);
    if (limit > 0 && static_cast<std::size_t>(limit) < train.size()) {
        train.images.resize(limit);
        train.labels.resize(limit);
    }
    sci::LabeledDataset held_out;
    const bool have_test = !test_images.empty() && !test_labels.empty();
    if (have_test) held_out = sci::load_idx_dataset(test_images, test_labels);
    if (have_test) train.num_classes =
        std::max(train.num_classes, held_out.num_classes);

    sci::TrainReport report;
    const sci::NetworkWeights w = sci::train_classifier(
        train, hp, have_test ? &held_out : nullptr, &report);
    for (std::size_t e = 0; e < report.epoch_losses.size(); ++e)
        std::cout << "epoch " << (e + 1) << ": loss " << report.epoch_losses[e]
                  << "\n";
    if (have_test)
        std::cout << "test_accuracy = " << report.test_accuracy << "\n";
    sci::save_weights(w, out);
    std::cout << "weights written to " << out << " (fingerprint "
              << sci::arch_fingerprint(w) << ")\n";
    return kExitOk;
}

int cmd_synthesize(const std::string& weights_path,
                   const std::string& mode_str, const std::string& classes_str,
                   const CommonOpts& common, std::uint64_t seed_flag,
                   bool seed_given, int workers_flag) {
    sci::CliConfig base = resolve_config(common);
    if (mode_str == "ci")
        base.synth.phase_mode = sci::PhaseMode::ci_baseline;
    else if (mode_str == "pre")
        base.synth.phase_mode = sci::PhaseMode::pre_only;
    else if (mode_str == "sci")
        base.synth.phase_mode = sci::PhaseMode::full_sci;
    else
        throw sci::UsageError("--mode must be ci, pre or sci");
    if (seed_given) base.synth.seed = seed_flag;
    if (workers_flag > 0) base.workers = workers_flag;

    const sci::NetworkWeights w = sci::load_weights(weights_path);
    const sci::Network net(w);
    const std::vector<int> classes =
        parse_classes(classes_str, net.num_classes());

    struct Outcome {
        int cls;
        std::string id;
        double initial, final_logit;
        bool ok;
    };
    std::vector<Outcome> outcomes(classes.size());
    std::mutex fail_mutex;
    std::string failure;

    // Independent runs over shared read-only weights.
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < classes.size();
             i = next.fetch_add(1)) {
            try {
                sci::CliConfig cfg = base;
                cfg.synth.target_class = classes[i];
                sci::Synthesizer synth(net, w.mean_image, cfg.synth);
                sci::RunResult res = synth.run();
                res.weights_fingerprint = net.fingerprint();
                const std::string id =
                    run_id(mode_str, classes[i], cfg.synth.seed);
                sci::save_run_dir(std::filesystem::path(cfg.out_root) / id,
                                  res, cfg, mode_str);
                outcomes[i] = {classes[i], id, res.initial_logit,
                               res.final_logit, res.ascent_ok};
            } catch (...) {
                std::lock_guard lock(fail_mutex);
                try {
                    throw;
                } catch (const std::exception& e) {
                    failure = e.what();
                }
            }
        }
    };
    const int nworkers =
        std::max(1, std::min<int>(base.workers,
                                  static_cast<int>(classes.size())));
    std::vector<std::thread> pool;
    for (int t = 0; t < nworkers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (!failure.empty()) throw sci::NumericalError(failure);

    bool all_ok = true;
    for (const Outcome& o : outcomes) {
        std::cout << o.id << ": logit " << o.initial << " -> " << o.final_logit
                  << (o.ok ? "" : "  [WARN: no ascent]") << "\n";
        all_ok = all_ok && o.ok;
    }
    std::cout << "runs written under " << base.out_root << "\n";
    if (!all_ok) {
        std::cerr << "error: target logit did not increase for every run\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_fuse(const std::string& weights_path, int class_a, int class_b,
             const std::string& seed_a_str, const std::string& seed_b_str,
             const CommonOpts& common, std::uint64_t seed_flag,
             bool seed_given) {
    sci::CliConfig cfg = resolve_config(common);
    if (seed_given) cfg.synth.seed = seed_flag;

    const sci::NetworkWeights w = sci::load_weights(weights_path);
    const sci::Network net(w);
    const sci::Shape3 in = net.input_shape();
    const sci::PixelCoord seed_a = seed_a_str.empty()
                                       ? sci::PixelCoord{in.h / 4, in.w / 4}
                                       : parse_coord(seed_a_str);
    const sci::PixelCoord seed_b =
        seed_b_str.empty() ? sci::PixelCoord{3 * in.h / 4, 3 * in.w / 4}
                           : parse_coord(seed_b_str);

    cfg.synth.target_class = class_a;
    sci::Synthesizer synth(net, w.mean_image, cfg.synth);
    sci::RunResult res = synth.fuse_classes(class_a, class_b, seed_a, seed_b);
    res.weights_fingerprint = net.fingerprint();

    std::ostringstream id;
    id << "fuse_c" << (class_a < 10 ? "0" : "") << class_a << "x"
       << (class_b < 10 ? "0" : "") << class_b << "_s" << cfg.synth.seed;
    sci::save_run_dir(std::filesystem::path(cfg.out_root) / id.str(), res, cfg,
                      "fuse");
    std::cout << id.str() << ": logit(a) " << res.initial_logit << " -> "
              << res.final_logit << (res.ascent_ok ? "" : "  [WARN: no ascent]")
              << "\n";
    return res.ascent_ok ? kExitOk : kExitNumerical;
}

int cmd_gradcheck(const std::string& weights_path, double epsilon, int samples,
                  double tolerance, std::uint64_t seed, int class_index) {
    const sci::NetworkWeights w = sci::load_weights(weights_path);
    const sci::Network net(w);
    const sci::Shape3 in = net.input_shape();
    sci::ImageTensor probe(in.h, in.w, in.c);
    sci::Rng rng(sci::Rng::derive(seed, 0x9c));
    for (double& v : probe.values()) v = rng.uniform(0.0, 255.0);

    double worst = 0.0;
    int checked = 0, excluded = 0;
    const int c_lo = class_index >= 0 ? class_index : 0;
    const int c_hi = class_index >= 0 ? class_index + 1 : net.num_classes();
    for (int c = c_lo; c < c_hi; ++c) {
        const sci::GradCheckResult r =
            sci::gradient_check(net, probe, c, epsilon, samples, seed + c);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
        excluded += r.excluded;
    }
    std::cout << "max relative error: " << worst << " (checked " << checked
              << " elements, excluded " << excluded << " at kinks)\n";
    if (worst >= tolerance) {
        std::cerr << "error: gradient check failed tolerance " << tolerance
                  << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_report(const std::string& weights_path, const std::string& runs_dir,
               const std::string& out_dir, double percentile,
               int connectivity) {
    const sci::NetworkWeights w = sci::load_weights(weights_path);
    const sci::Network net(w);
    const std::vector<sci::LoadedRun> runs = sci::load_run_dirs(runs_dir);
    std::vector<sci::ReportEntry> entries;
    entries.reserve(runs.size());
    for (const sci::LoadedRun& run : runs) {
        sci::ReportEntry e;
        e.metrics =
            sci::compute_run_metrics(net, run.image, run.class_id, run.mode,
                                     run.run_id, percentile, connectivity);
        e.image = run.image;
        entries.push_back(std::move(e));
    }
    sci::emit_report(entries, out_dir);
    std::cout << "report written to " << out_dir << " (" << entries.size()
              << " runs)\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "sci: saliency-driven class impressions from a differentiable "
        "classifier"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train the built-in classifier");
    std::string tr_images, tr_labels, tr_test_images, tr_test_labels,
        tr_out = "weights.sciw";
    sci::TrainConfig hp;
    int tr_limit = 0;
    train->add_option("--images", tr_images, "IDX image file")->required();
    train->add_option("--labels", tr_labels, "IDX label file")->required();
    train->add_option("--test-images", tr_test_images, "held-out IDX images");
    train->add_option("--test-labels", tr_test_labels, "held-out IDX labels");
    train->add_option("--out", tr_out, "output weights file");
    train->add_option("--epochs", hp.epochs, "training epochs");
    train->add_option("--batch", hp.batch_size, "mini-batch size");
    train->add_option("--lr", hp.learning_rate, "SGD step size");
    train->add_option("--seed", hp.seed, "training seed");
    train->add_option("--limit", tr_limit, "use only the first N samples");

    // synthesize
    auto* synth = app.add_subcommand("synthesize",
                                     "Generate class impressions (ci|pre|sci)");
    std::string sy_weights, sy_mode = "sci", sy_classes = "all";
    CommonOpts sy_common;
    std::uint64_t sy_seed = 0;
    int sy_workers = 0;
    synth->add_option("--weights", sy_weights, "weights file")->required();
    synth->add_option("--mode", sy_mode, "ci | pre | sci");
    synth->add_option("--classes", sy_classes, "comma list or 'all'");
    auto* sy_seed_opt = synth->add_option("--seed", sy_seed, "run seed");
    synth->add_option("--workers", sy_workers,
                      "max concurrent per-class runs");
    add_common(synth, sy_common);

    // fuse
    auto* fuse = app.add_subcommand("fuse",
                                    "Fuse two classes into a negative image");
    std::string fu_weights, fu_seed_a, fu_seed_b;
    int fu_a = 0, fu_b = 1;
    CommonOpts fu_common;
    std::uint64_t fu_seed = 0;
    fuse->add_option("--weights", fu_weights, "weights file")->required();
    fuse->add_option("--class-a", fu_a, "first class")->required();
    fuse->add_option("--class-b", fu_b, "second class")->required();
    fuse->add_option("--seed-a", fu_seed_a, "seed pixel x,y for class a");
    fuse->add_option("--seed-b", fu_seed_b, "seed pixel x,y for class b");
    auto* fu_seed_opt = fuse->add_option("--seed", fu_seed, "run seed");
    add_common(fuse, fu_common);

    // gradcheck
    auto* gc = app.add_subcommand(
        "gradcheck", "Check input gradients against finite differences");
    std::string gc_weights;
    double gc_eps = 1e-3, gc_tol = 1e-4;
    int gc_samples = 200, gc_class = -1;
    std::uint64_t gc_seed = 1;
    gc->add_option("--weights", gc_weights, "weights file")->required();
    gc->add_option("--epsilon", gc_eps, "finite-difference step");
    gc->add_option("--samples", gc_samples, "elements to check per class");
    gc->add_option("--tolerance", gc_tol, "max relative error allowed");
    gc->add_option("--seed", gc_seed, "probe image seed");
    gc->add_option("--class", gc_class, "single class (default: all)");

    // report
    auto* rep = app.add_subcommand("report", "Metrics table + montage");
    std::string rp_weights, rp_runs, rp_out = "report";
    double rp_percentile = 90.0;
    int rp_connectivity = 8;
    rep->add_option("--weights", rp_weights, "weights file")->required();
    rep->add_option("--runs", rp_runs, "directory of run dirs")->required();
    rep->add_option("--out", rp_out, "output directory");
    rep->add_option("--percentile", rp_percentile,
                    "saliency threshold percentile");
    rep->add_option("--connectivity", rp_connectivity, "4 or 8");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train)
            return cmd_train(tr_images, tr_labels, tr_test_images,
                             tr_test_labels, tr_out, hp, tr_limit);
        if (*synth)
            return cmd_synthesize(sy_weights, sy_mode, sy_classes, sy_common,
                                  sy_seed, sy_seed_opt->count() > 0,
                                  sy_workers);
        if (*fuse)
            return cmd_fuse(fu_weights, fu_a, fu_b, fu_seed_a, fu_seed_b,
                            fu_common, fu_seed, fu_seed_opt->count() > 0);
        if (*gc)
            return cmd_gradcheck(gc_weights, gc_eps, gc_samples, gc_tol,
                                 gc_seed, gc_class);
        if (*rep)
            return cmd_report(rp_weights, rp_runs, rp_out, rp_percentile,
                              rp_connectivity);
    } catch (const sci::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sci::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const sci::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const sci::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}
