#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cardiomix/augment.hpp"
#include "cardiomix/image.hpp"
#include "cardiomix/tensor.hpp"

namespace cardiomix {

enum class Arch { Logistic, SmallCnn, TinyVit };

const char* arch_name(Arch a);
std::optional<Arch> arch_from_name(std::string_view name);

// Fixed architecture constants. The CNN is
// conv3x3(8)-ReLU-pool2-conv3x3(16)-ReLU-pool2-dense(32)-ReLU-dense(K)
// with zero padding 1 so convolutions preserve dimensions. The transformer
// embeds non-overlapping 10x10 patches, prepends a class token, adds learned
// positional embeddings, applies one pre-norm encoder block (4-head
// self-attention, GELU MLP of width 64) and a linear head on the class token.
namespace cnn {
inline constexpr int kConv1Channels = 8;
inline constexpr int kConv2Channels = 16;
inline constexpr int kKernel = 3;
inline constexpr int kPool = 2;
inline constexpr int kHidden = 32;
}  // namespace cnn
namespace vit {
inline constexpr int kPatch = 10;
inline constexpr int kEmbed = 32;
inline constexpr int kHeads = 4;
inline constexpr int kMlp = 64;
inline constexpr double kLayerNormEps = 1e-5;
}  // namespace vit

struct ModelSpec {
    Arch arch = Arch::Logistic;
    int input_h = 100;
    int input_w = 100;
    int input_c = 1;
    int num_classes = 2;

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

/// Named parameter tensors plus the spec that shaped them. Tensor order is
/// fixed per architecture and shared by gradients and checkpoints.
class ModelParams {
public:
    /// Initialized parameters: weights uniform(-s, s) with
    /// s = scale * sqrt(6/(fan_in+fan_out)), biases zero, layer-norm gains 1.
    /// Each tensor draws from its own derived seed stream.
    ModelParams(const ModelSpec& spec, std::uint64_t seed, double init_scale = 1.0);

    /// Same structure as `shape`, all values zero (gradient/velocity buffers).
    static ModelParams zeros_like(const ModelParams& shape);

    const ModelSpec& spec() const { return spec_; }
    std::vector<NamedTensor>& tensors() { return tensors_; }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }

    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;

private:
    ModelSpec spec_;
    std::vector<NamedTensor> tensors_;
};

std::vector<double> softmax(const std::vector<double>& logits);

/// Intermediate activations captured by forward passes; consumed by
/// backpropagation, attention introspection, and Grad-CAM.
struct ForwardTrace;

struct ForwardResult {
    std::vector<double> logits;
    SoftLabel probs;
};

std::vector<double> forward_logits(const ModelParams& params, const Image& image);
ForwardResult forward(const ModelParams& params, const Image& image);

/// Attention row-softmax matrices of the encoder block, one (T x T) matrix
/// per head, rows summing to 1. TinyVit only.
std::vector<std::vector<double>> attention_rows(const ModelParams& params,
                                                const Image& image);

/// Soft-label cross-entropy: -sum_k label_k * log(max(probs_k, 1e-12)).
double loss_soft_ce(const SoftLabel& probs, const SoftLabel& label);

/// Non-owning view of one training item.
struct Sample {
    const Image* image;
    const SoftLabel* label;
};

struct GradResult {
    std::vector<NamedTensor> grads;  // mean over the batch, same order as params
    double mean_loss = 0.0;
};

/// Mean-over-batch gradient of loss_soft_ce(forward(.)) for all parameters.
GradResult backward(const ModelParams& params, const std::vector<Sample>& batch);

/// Gradient of one logit with respect to the input pixels; for the CNN the
/// last conv feature maps (post-ReLU) and their gradients are also returned.
struct InputGradResult {
    Tensor input_grad;     // [c, h, w]
    Tensor feature_maps;   // smallcnn: [c2, h/4, w/4]; empty otherwise
    Tensor feature_grad;   // same shape as feature_maps
};

InputGradResult logit_input_gradient(const ModelParams& params, const Image& image,
                                     int target_class);

struct MixSettings {
    MixParams params;
    double fraction = 0.5;  // share of each batch replaced by mixed examples
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::uint64_t seed = 0;
    double init_scale = 1.0;
    std::optional<MixSettings> augment;

    void validate() const;
};

/// Architecture-specific default learning rate.
double default_learning_rate(Arch a);

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_history;  // mean training loss per epoch
};

/// SGD with momentum over seed-derived epoch shuffles. When augmentation is
/// on, a `fraction` share of every batch is replaced with freshly mixed
/// examples drawn from the training set. Deterministic given the seed.
TrainResult train(const Dataset& dataset, const ModelSpec& spec, const TrainConfig& cfg);

/// As train(), over an index view of a dataset (used for fold training).
TrainResult train_subset(const Dataset& dataset, const std::vector<int>& indices,
                         const ModelSpec& spec, const TrainConfig& cfg);

/// Checkpoint container: ASCII header (magic CMIX1, arch, input dims, class
/// count, tensor name+shape list) followed by the concatenated little-endian
/// IEEE-754 32-bit payloads in header order.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

/// Parameters with every value passed through 32-bit precision, as a
/// checkpoint round-trip would produce.
ModelParams quantize_to_f32(const ModelParams& params);

}  // namespace cardiomix
