#include "sci/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sci/errors.hpp"

namespace sci {

namespace {

constexpr std::uint64_t kCanvasStream = 0xca01;
constexpr std::uint64_t kPostCanvasStream = 0xca02;
constexpr std::uint64_t kTransformStream = 0x7f01;

double max_abs(const ImageTensor& t) {
    double m = 0.0;
    for (double v : t.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

ImageTensor ascend_step(const ImageTensor& img, const ImageTensor& grad,
                        const ImageTensor& lr, double base_step) {
    if (!img.same_shape(grad) || !img.same_shape(lr))
        throw std::invalid_argument("ascend_step: shape mismatch");
    if (!grad.finite())
        throw NumericalError("ascend_step: non-finite gradient");
    ImageTensor out = img;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += base_step * lr[i] * grad[i];
    out.clamp();
    return out;
}

ImageTensor tv_step(const ImageTensor& img, double lambda1, double step,
                    const ImageTensor* mask) {
    if (step <= 0.0) throw std::invalid_argument("tv_step: step must be > 0");
    ImageTensor grad = tv_gradient(img);
    ImageTensor out = img;
    const double scale = step * lambda1;
    if (mask) {
        for (int y = 0; y < out.height(); ++y)
            for (int x = 0; x < out.width(); ++x)
                for (int c = 0; c < out.channels(); ++c)
                    out.at(y, x, c) -=
                        scale * mask->at(y, x, 0) * grad.at(y, x, c);
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] -= scale * grad[i];
    }
    out.clamp();
    return out;
}

struct Synthesizer::LoopState {
    ImageTensor canvas;
    CumulativeGradient cum;
    SynthesisTrace trace;
    int global_iter = 0;
    std::uint64_t transform_counter = 0;
    double first_ascent_max = 0.0;
    bool lambda1_pending = false;
    double lambda1 = 0.0;
};

Synthesizer::Synthesizer(const Classifier& model, const ImageTensor& mean_image,
                         SynthesisConfig config)
    : model_(model), mean_(mean_image), cfg_(std::move(config)) {
    const Shape3 in = model_.input_shape();
    if (cfg_.target_class < 0 || cfg_.target_class >= model_.num_classes())
        throw std::invalid_argument("Synthesizer: target class out of range");
    if (cfg_.iterations_pre < 1 || cfg_.iterations_post < 1)
        throw std::invalid_argument("Synthesizer: iteration counts must be >= 1");
    if (cfg_.base_step <= 0.0)
        throw std::invalid_argument("Synthesizer: base_step must be > 0");
    if (cfg_.tv.period_k < 1)
        throw std::invalid_argument("Synthesizer: tv period_k must be >= 1");
    if (cfg_.mean_mode == MeanMode::dataset) {
        if (mean_.empty())
            throw ConfigError(
                "Synthesizer: dataset mean requested but no mean image "
                "available (use mean_mode = constant)");
        if (mean_.height() != in.h || mean_.width() != in.w ||
            mean_.channels() != in.c)
            throw std::invalid_argument(
                "Synthesizer: mean image shape does not match model input");
    }

    // Schedule lengths scale with the phase budget relative to the reference
    // 500 iterations; radii scale with input size relative to 224.
    const int size = std::min(in.h, in.w);
    ResolvedSchedules r;
    if (cfg_.auto_scale) {
        r.iter_scale_pre = cfg_.iterations_pre / 500.0;
        r.iter_scale_post = cfg_.iterations_post / 500.0;
        r.radius_scale = size / 224.0;
    }
    r.ramp_t_pre = std::max(
        1, static_cast<int>(std::lround(cfg_.ramp.t * r.iter_scale_pre)));
    r.ramp_t_post = std::max(
        1, static_cast<int>(std::lround(cfg_.ramp.t * r.iter_scale_post)));
    r.mask_schedule.r0 = cfg_.radius.r0 * r.radius_scale;
    r.mask_schedule.r_max = cfg_.radius.r_max * r.radius_scale;
    r.mask_schedule.ramp_iters = std::max(
        1, static_cast<int>(
               std::lround(cfg_.radius.ramp_iters * r.iter_scale_post)));
    r.selection_radius = cfg_.selection_radius < 0.0
                             ? r.mask_schedule.r_max / 10.0
                             : cfg_.selection_radius * r.radius_scale;
    if (r.selection_radius <= 0.0)
        throw std::invalid_argument("Synthesizer: selection radius must be > 0");
    resolved_ = r;
}

ImageTensor Synthesizer::start_canvas(std::uint64_t stream) const {
    const Shape3 in = model_.input_shape();
    ImageTensor base = cfg_.mean_mode == MeanMode::dataset
                           ? mean_
                           : ImageTensor(in.h, in.w, in.c, cfg_.constant_fill);
    return init_canvas(base, cfg_.noise_amplitude,
                       Rng::derive(cfg_.seed, stream));
}

void Synthesizer::step(LoopState& st, int phase_iter, const char* phase,
                       int cls, bool saliency, const ImageTensor* mask,
                       double logged_radius, int ramp_t, Rng* transform_rng) {
    ++st.global_iter;
    const auto [logits, grad] = model_.logits_and_input_gradient(st.canvas, cls);

    bool degenerate = false;
    ImageTensor lr;
    if (!saliency || phase_iter == 1) {
        // Uniform learning rate; the saliency map only kicks in from the
        // second iteration (the map used at i is the state after i-1).
        lr = uniform_lr_map(st.canvas.height(), st.canvas.width(),
                            st.canvas.channels());
    } else {
        LrMap map = normalize_lr_map(st.cum, cfg_.lr_sign_mode);
        degenerate = map.degenerate;
        lr = std::move(map.values);
    }
    if (mask) lr = apply_mask(lr, *mask);

    if (st.global_iter == 1) {
        // Reference magnitude for auto lambda1: the first ascent step.
        ImageTensor delta = lr;
        for (std::size_t i = 0; i < delta.size(); ++i)
            delta[i] *= cfg_.base_step * grad[i];
        st.first_ascent_max = max_abs(delta);
    }

    st.canvas = ascend_step(st.canvas, grad, lr, cfg_.base_step);

    const bool tv_enabled =
        !cfg_.tv.lambda1.has_value() || *cfg_.tv.lambda1 != 0.0;
    if (tv_enabled && st.global_iter % cfg_.tv.period_k == 0) {
        if (st.lambda1_pending) {
            ImageTensor tvg = tv_gradient(st.canvas);
            if (mask) tvg = apply_mask(tvg, *mask);
            const double tv_max = max_abs(tvg);
            st.lambda1 = tv_max < 1e-12
                             ? 0.0
                             : 0.1 * st.first_ascent_max /
                                   (cfg_.base_step * tv_max);
            st.lambda1_pending = false;
        }
        if (st.lambda1 != 0.0)
            st.canvas = tv_step(st.canvas, st.lambda1, cfg_.base_step, mask);
    }

    std::uint64_t transform_id = 0;
    if (transform_rng) {
        TransformSample s = sample_transform(
            cfg_.transforms, *transform_rng,
            std::min(st.canvas.height(), st.canvas.width()));
        s.id = ++st.transform_counter;
        transform_id = s.id;
        st.canvas = apply_transform(st.canvas, s);
    }

    if (saliency) {
        st.cum = update_cumulative(st.cum, grad, phase_iter,
                                   RampSchedule{cfg_.ramp.c2, ramp_t},
                                   cfg_.accumulation_mode);
    }

    TraceRecord rec;
    rec.iteration = st.global_iter;
    rec.phase = phase;
    rec.active_class = cls;
    rec.logit = logits.values[cls];
    rec.tv = tv_value(st.canvas);
    rec.radius = logged_radius;
    rec.lr_degenerate = degenerate;
    rec.transform_id = transform_id;
    st.trace.records.push_back(rec);
    if (observer_) observer_(rec, st.canvas);
}

RunResult Synthesizer::finish(LoopState&& st, int cls) {
    RunResult res;
    res.final_logit = model_.forward_logits(st.canvas).values[cls];
    st.trace.lambda1 = st.lambda1;
    st.trace.lambda1_auto = !cfg_.tv.lambda1.has_value();
    st.trace.resolved = resolved_;
    res.image = std::move(st.canvas);
    res.trace = std::move(st.trace);
    res.config = cfg_;
    return res;
}

RunResult Synthesizer::run() {
    switch (cfg_.phase_mode) {
        case PhaseMode::ci_baseline:
            return synthesize_ci_baseline();
        case PhaseMode::pre_only:
            return synthesize_pre_ci();
        case PhaseMode::full_sci:
            return synthesize_sci();
    }
    throw std::invalid_argument("Synthesizer: bad phase mode");
}

RunResult Synthesizer::synthesize_ci_baseline() {
    LoopState st;
    st.canvas = start_canvas(kCanvasStream);
    st.lambda1_pending = !cfg_.tv.lambda1.has_value();
    st.lambda1 = cfg_.tv.lambda1.value_or(0.0);
    const int cls = cfg_.target_class;
    const double initial = model_.forward_logits(st.canvas).values[cls];

    Rng trng(Rng::derive(cfg_.seed, kTransformStream));
    Rng* trng_ptr = cfg_.transforms.enabled ? &trng : nullptr;
    for (int i = 1; i <= cfg_.iterations_pre; ++i)
        step(st, i, "ci", cls, /*saliency=*/false, nullptr, 0.0,
             resolved_.ramp_t_pre, trng_ptr);

    RunResult res = finish(std::move(st), cls);
    res.initial_logit = initial;
    res.ascent_ok = res.final_logit > res.initial_logit;
    return res;
}

RunResult Synthesizer::synthesize_pre_ci() {
    LoopState st;
    st.canvas = start_canvas(kCanvasStream);
    st.cum = CumulativeGradient::zero(st.canvas.height(), st.canvas.width(),
                                      st.canvas.channels());
    st.lambda1_pending = !cfg_.tv.lambda1.has_value();
    st.lambda1 = cfg_.tv.lambda1.value_or(0.0);
    const int cls = cfg_.target_class;
    const double initial = model_.forward_logits(st.canvas).values[cls];

    Rng trng(Rng::derive(cfg_.seed, kTransformStream));
    Rng* trng_ptr = cfg_.transforms.enabled ? &trng : nullptr;
    for (int i = 1; i <= cfg_.iterations_pre; ++i)
        step(st, i, "pre", cls, /*saliency=*/true, nullptr, 0.0,
             resolved_.ramp_t_pre, trng_ptr);

    LrMap final_map = normalize_lr_map(st.cum, cfg_.lr_sign_mode);
    RunResult res = finish(std::move(st), cls);
    res.initial_logit = initial;
    res.ascent_ok = res.final_logit > res.initial_logit;
    res.final_lr_map = std::move(final_map);
    return res;
}

RunResult Synthesizer::synthesize_sci() {
    const int cls = cfg_.target_class;

    // Phase 1: pre-CI develops the saliency map.
    RunResult pre = synthesize_pre_ci();
    const PixelCoord center = most_activated_center(pre.final_lr_map.values,
                                                    resolved_.selection_radius);

    // Phase 2: masked region growth around the most activated center.
    LoopState st;
    st.canvas = cfg_.post_init == PostInit::fresh_canvas
                    ? start_canvas(kPostCanvasStream)
                    : pre.image;
    const ImageTensor post_initial = st.canvas;
    st.cum = CumulativeGradient::zero(st.canvas.height(), st.canvas.width(),
                                      st.canvas.channels());
    st.trace = std::move(pre.trace);
    st.global_iter = static_cast<int>(st.trace.records.size());
    for (const TraceRecord& rec : st.trace.records)
        st.transform_counter = std::max(st.transform_counter, rec.transform_id);
    // TV weight stays frozen from the pre phase.
    st.lambda1 = st.trace.lambda1;
    st.lambda1_pending = false;

    const double initial = model_.forward_logits(st.canvas).values[cls];
    Rng trng(Rng::derive(cfg_.seed, kTransformStream + 1));
    Rng* trng_ptr =
        cfg_.transforms_post && cfg_.transforms.enabled ? &trng : nullptr;
    for (int i = 1; i <= cfg_.iterations_post; ++i) {
        const double r = radius_at(i - 1, resolved_.mask_schedule);
        const ImageTensor mask =
            circ(center, r, st.canvas.height(), st.canvas.width());
        step(st, i, "post", cls, /*saliency=*/true, &mask, r,
             resolved_.ramp_t_post, trng_ptr);
    }

    LrMap final_map = normalize_lr_map(st.cum, cfg_.lr_sign_mode);
    RunResult res = finish(std::move(st), cls);
    res.initial_logit = pre.initial_logit;
    res.ascent_ok = res.final_logit > initial && pre.ascent_ok;
    res.final_lr_map = pre.final_lr_map;
    res.pre_image = std::move(pre.image);
    res.post_initial_canvas = post_initial;
    res.trace.region_center = center;
    return res;
}

RunResult Synthesizer::fuse_classes(int class_a, int class_b,
                                    PixelCoord seed_a, PixelCoord seed_b) {
    const Shape3 in = model_.input_shape();
    if (class_a == class_b)
        throw std::invalid_argument("fuse_classes: classes must differ");
    if (class_a < 0 || class_a >= model_.num_classes() || class_b < 0 ||
        class_b >= model_.num_classes())
        throw std::invalid_argument("fuse_classes: class out of range");
    if (seed_a == seed_b)
        throw std::invalid_argument("fuse_classes: seeds must be distinct");
    for (const PixelCoord& s : {seed_a, seed_b})
        if (s.x < 0 || s.x >= in.h || s.y < 0 || s.y >= in.w)
            throw std::invalid_argument("fuse_classes: seed out of bounds");

    const int len_a = cfg_.fusion_block_len_a >= 0 ? cfg_.fusion_block_len_a
                                                   : cfg_.iterations_post / 4;
    const int len_b = cfg_.fusion_block_len_b >= 0 ? cfg_.fusion_block_len_b
                                                   : cfg_.iterations_post / 4;
    if (cfg_.fusion_blocks < 1 || len_a < 0 || len_b < 0 ||
        len_a + len_b == 0)
        throw std::invalid_argument("fuse_classes: bad block schedule");

    LoopState st;
    st.canvas = start_canvas(kCanvasStream);
    st.lambda1_pending = !cfg_.tv.lambda1.has_value();
    st.lambda1 = cfg_.tv.lambda1.value_or(0.0);

    const LogitVector initial = model_.forward_logits(st.canvas);
    const double initial_a = initial.values[class_a];
    const double initial_b = initial.values[class_b];

    // Per-class saliency state and mask growth; the canvas is shared.
    struct ClassState {
        int cls;
        PixelCoord seed;
        CumulativeGradient cum;
        int iter = 0;
    };
    ClassState sa{class_a, seed_a, CumulativeGradient::zero(in.h, in.w, in.c),
                  0};
    ClassState sb{class_b, seed_b, CumulativeGradient::zero(in.h, in.w, in.c),
                  0};

    Rng trng(Rng::derive(cfg_.seed, kTransformStream + 2));
    Rng* trng_ptr =
        cfg_.transforms_post && cfg_.transforms.enabled ? &trng : nullptr;

    for (int block = 0; block < cfg_.fusion_blocks; ++block) {
        for (ClassState* cs : {&sa, &sb}) {
            const int len = cs->cls == class_a ? len_a : len_b;
            for (int j = 0; j < len; ++j) {
                ++cs->iter;
                const double r =
                    radius_at(cs->iter - 1, resolved_.mask_schedule);
                const ImageTensor mask = circ(cs->seed, r, in.h, in.w);
                std::swap(st.cum, cs->cum);
                step(st, cs->iter, "fuse", cs->cls, /*saliency=*/true, &mask,
                     r, resolved_.ramp_t_post, trng_ptr);
                std::swap(st.cum, cs->cum);
            }
        }
    }

    const LogitVector final_logits = model_.forward_logits(st.canvas);
    RunResult res = finish(std::move(st), class_a);
    res.initial_logit = initial_a;
    res.ascent_ok = final_logits.values[class_a] > initial_a &&
                    final_logits.values[class_b] > initial_b;
    return res;
}

}  // namespace sci
