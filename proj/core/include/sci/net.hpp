#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sci/dataset.hpp"
#include "sci/image.hpp"

namespace sci {

enum class Padding { valid, same };

struct LayerSpec {
    enum class Kind { conv, relu, maxpool, flatten, dense };
    Kind kind = Kind::relu;

    // conv
    int kernel_h = 0, kernel_w = 0;
    int in_channels = 0, out_channels = 0;
    int stride = 1;
    Padding padding = Padding::same;

    // maxpool
    int pool = 2, pool_stride = 2;

    // dense
    int in_width = 0, out_width = 0;

    static LayerSpec Conv(int kh, int kw, int in_c, int out_c, int stride = 1,
                          Padding pad = Padding::same);
    static LayerSpec Relu();
    static LayerSpec MaxPool(int window = 2, int stride = 2);
    static LayerSpec Flatten();
    static LayerSpec Dense(int in_w, int out_w);

    bool operator==(const LayerSpec&) const = default;
};

struct Shape3 {
    int h = 0, w = 0, c = 0;
    bool operator==(const Shape3&) const = default;
};

struct ParamTensor {
    std::vector<int> dims;
    std::vector<double> v;
};

/// Trained parameters plus the architecture they belong to. Immutable once
/// trained or loaded; safe to share read-only across synthesis runs.
struct NetworkWeights {
    std::vector<LayerSpec> layers;
    Shape3 input;
    int num_classes = 0;
    /// Parameter tensors in layer order: conv -> kernel[oc][ic][kh][kw],
    /// bias[oc]; dense -> w[out][in], bias[out].
    std::vector<ParamTensor> params;
    /// Dataset mean carried along so synthesis can build its start canvas;
    /// may be empty.
    ImageTensor mean_image;

    bool finite() const;
};

/// Canonical text encoding of (input shape, layers, num_classes); the
/// fingerprint is an FNV-1a hash of this string.
std::string arch_string(const NetworkWeights& w);
std::uint64_t arch_fingerprint(const NetworkWeights& w);

/// Throws NumericalError if w's fingerprint differs from `expected`.
void require_fingerprint(const NetworkWeights& w, std::uint64_t expected);

/// Pre-softmax class scores.
struct LogitVector {
    std::vector<double> values;
};

/// Abstract classifier contract the synthesizer depends on. Implementations
/// must be deterministic pure functions of (weights, image).
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual int num_classes() const = 0;
    virtual Shape3 input_shape() const = 0;
    virtual LogitVector forward_logits(const ImageTensor& img) const = 0;
    /// d(logit of class_index)/d(input), same shape as the input, in
    /// intensity units (input normalization folded in).
    virtual ImageTensor input_gradient(const ImageTensor& img,
                                       int class_index) const = 0;
    /// One forward + one backward; default implementation calls both.
    virtual std::pair<LogitVector, ImageTensor> logits_and_input_gradient(
        const ImageTensor& img, int class_index) const;
};

struct TrainConfig;
struct TrainReport;
class Network;
NetworkWeights train_classifier(const LabeledDataset& train,
                                const TrainConfig& hp,
                                const LabeledDataset* held_out,
                                TrainReport* report);

/// Built-in CNN. Intensities are normalized to (v - 127.5)/127.5 before the
/// first layer; the input gradient folds the normalization back in.
/// Maxpool gradient ties route to the first row-major argmax.
class Network final : public Classifier {
public:
    explicit Network(NetworkWeights w);

    const NetworkWeights& weights() const { return weights_; }
    std::uint64_t fingerprint() const { return fingerprint_; }

    int num_classes() const override { return weights_.num_classes; }
    Shape3 input_shape() const override { return weights_.input; }
    LogitVector forward_logits(const ImageTensor& img) const override;
    ImageTensor input_gradient(const ImageTensor& img,
                               int class_index) const override;
    std::pair<LogitVector, ImageTensor> logits_and_input_gradient(
        const ImageTensor& img, int class_index) const override;

    /// Forward pass that also hashes every relu/maxpool branch decision.
    /// Two inputs in the same linear region hash identically; the gradient
    /// checker uses this to exclude elements straddling a kink.
    struct ForwardBranches {
        LogitVector logits;
        std::uint64_t branch_hash = 0;
    };
    ForwardBranches forward_with_branches(const ImageTensor& img) const;

private:
    friend struct NetBackprop;
    friend NetworkWeights train_classifier(const LabeledDataset&,
                                           const TrainConfig&,
                                           const LabeledDataset*, TrainReport*);
    NetworkWeights weights_;
    std::uint64_t fingerprint_ = 0;
    std::vector<Shape3> out_shapes_;   // per layer
    std::vector<int> param_index_;     // layer -> first ParamTensor, -1 if none
};

/// conv3x3x16(same)-relu-maxpool2-conv3x3x32(same)-relu-maxpool2-flatten-dense.
std::vector<LayerSpec> default_architecture(Shape3 input, int num_classes);

/// Zero-initialized weights for an architecture (shapes validated).
NetworkWeights make_weights(std::vector<LayerSpec> layers, Shape3 input,
                            int num_classes);

/// He-normal kernels/dense, zero biases; deterministic for a fixed seed.
void he_init(NetworkWeights& w, std::uint64_t seed);

struct TrainConfig {
    int epochs = 3;
    int batch_size = 64;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
};

struct TrainReport {
    std::vector<double> epoch_losses;  // mean cross-entropy per epoch
    double test_accuracy = -1.0;       // -1 if no held-out set given
};

/// Mini-batch SGD on softmax cross-entropy over the default architecture.
/// Deterministic for a fixed seed; embeds the dataset mean into the returned
/// weights. Throws NumericalError on divergence (non-finite loss).
NetworkWeights train_classifier(const LabeledDataset& train,
                                const TrainConfig& hp,
                                const LabeledDataset* held_out,
                                TrainReport* report);
inline NetworkWeights train_classifier(const LabeledDataset& train,
                                       const TrainConfig& hp) {
    return train_classifier(train, hp, nullptr, nullptr);
}

/// Fraction of samples whose argmax logit equals the label.
double evaluate_accuracy(const Network& net, const LabeledDataset& ds);

/// Self-describing binary: magic, version, fingerprint, architecture,
/// little-endian float64 tensors, trailing FNV-1a checksum.
void save_weights(const NetworkWeights& w, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

struct GradCheckResult {
    double max_rel_error = 0.0;
    int checked = 0;
    int excluded = 0;  // elements skipped for straddling a relu/pool kink
};

/// Central-difference check of input_gradient on a random subsample of at
/// least min_samples elements (fewer only if exclusions exhaust the image).
/// Relative error uses |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult gradient_check(const Network& net, const ImageTensor& img,
                               int class_index, double epsilon,
                               int min_samples = 200, std::uint64_t seed = 1);

}  // namespace sci
