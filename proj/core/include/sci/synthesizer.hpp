#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sci/image.hpp"
#include "sci/net.hpp"
#include "sci/region_mask.hpp"
#include "sci/saliency_lr.hpp"
#include "sci/transforms.hpp"
#include "sci/tv.hpp"

namespace sci {

enum class PhaseMode { ci_baseline, pre_only, full_sci };
enum class PostInit { fresh_canvas, continue_pre };
enum class MeanMode { dataset, constant };

struct SynthesisConfig {
    int target_class = 0;
    int iterations_pre = 500;
    int iterations_post = 500;
    double base_step = 1.0;  // intensity units per unit lr
    std::uint64_t seed = 1;
    PhaseMode phase_mode = PhaseMode::full_sci;
    PostInit post_init = PostInit::fresh_canvas;

    /// When true, schedule lengths (ramp t, mask ramp) scale with the phase
    /// iteration budget relative to 500, and radii scale with input size
    /// relative to 224.
    bool auto_scale = true;

    // start canvas
    double noise_amplitude = 255.0;
    MeanMode mean_mode = MeanMode::dataset;
    double constant_fill = 128.0;

    TvConfig tv;
    RampSchedule ramp;
    AccumulationMode accumulation_mode = AccumulationMode::literal;
    LrSignMode lr_sign_mode = LrSignMode::magnitude;
    RadiusSchedule radius;
    double selection_radius = -1.0;  // -1 = auto: effective r_max / 10

    TransformParams transforms;
    bool transforms_post = false;  // transforms during masked phases

    int fusion_blocks = 2;
    int fusion_block_len_a = -1;  // -1 = auto: iterations_post / 4
    int fusion_block_len_b = -1;
};

/// Schedule values actually used after auto-scaling.
struct ResolvedSchedules {
    double iter_scale_pre = 1.0, iter_scale_post = 1.0, radius_scale = 1.0;
    int ramp_t_pre = 150, ramp_t_post = 150;
    RadiusSchedule mask_schedule;   // effective r0/r_max/ramp_iters
    double selection_radius = 15.0;
};

struct TraceRecord {
    int iteration = 0;  // 1-based, global across phases
    std::string phase;  // "ci" | "pre" | "post" | "fuse"
    int active_class = 0;
    double logit = 0.0;      // active-class logit at iteration start
    double tv = 0.0;         // tv_value after the iteration's updates
    double radius = 0.0;     // mask radius; 0 when unmasked
    bool lr_degenerate = false;
    std::uint64_t transform_id = 0;  // 0 = transform stage not run
};

struct SynthesisTrace {
    std::vector<TraceRecord> records;
    double lambda1 = 0.0;  // effective TV weight (configured or calibrated)
    bool lambda1_auto = false;
    ResolvedSchedules resolved;
    std::optional<PixelCoord> region_center;  // full_sci only
};

struct RunResult {
    ImageTensor image;
    SynthesisTrace trace;
    SynthesisConfig config;  // snapshot as given (auto markers intact)
    std::uint64_t weights_fingerprint = 0;
    double initial_logit = 0.0;
    double final_logit = 0.0;
    bool ascent_ok = false;  // final > initial for the run's target(s)
    LrMap final_lr_map;      // saliency phases: map after the last iteration
    ImageTensor pre_image;   // full_sci: pre-phase result (empty otherwise)
    ImageTensor post_initial_canvas;  // full_sci: post phase start (empty otherwise)
};

/// img + base_step * lr (element-wise) * grad, clamped to [0, 255].
ImageTensor ascend_step(const ImageTensor& img, const ImageTensor& grad,
                        const ImageTensor& lr, double base_step);

/// img - step * lambda1 * (mask (element-wise) tv_gradient(img)), clamped.
/// mask may be null (unmasked) or an H x W x 1 indicator.
ImageTensor tv_step(const ImageTensor& img, double lambda1, double step,
                    const ImageTensor* mask = nullptr);

/// One synthesis run over a shared read-only classifier. Runs are strictly
/// sequential internally; distinct runs may execute concurrently.
class Synthesizer {
public:
    /// mean_image may be empty when config.mean_mode == constant.
    Synthesizer(const Classifier& model, const ImageTensor& mean_image,
                SynthesisConfig config);

    /// Per-iteration hook (record plus the canvas after the iteration).
    using Observer =
        std::function<void(const TraceRecord&, const ImageTensor&)>;
    void set_observer(Observer obs) { observer_ = std::move(obs); }

    /// Dispatches on config.phase_mode.
    RunResult run();

    RunResult synthesize_ci_baseline();
    RunResult synthesize_pre_ci();
    RunResult synthesize_sci();
    RunResult fuse_classes(int class_a, int class_b, PixelCoord seed_a,
                           PixelCoord seed_b);

    const ResolvedSchedules& resolved() const { return resolved_; }

private:
    struct LoopState;
    void step(LoopState& st, int phase_iter, const char* phase, int cls,
              bool saliency, const ImageTensor* mask, double logged_radius,
              int ramp_t, Rng* transform_rng);
    ImageTensor start_canvas(std::uint64_t stream) const;
    RunResult finish(LoopState&& st, int cls);

    const Classifier& model_;
    ImageTensor mean_;
    SynthesisConfig cfg_;
    ResolvedSchedules resolved_;
    Observer observer_;
};

}  // namespace sci
