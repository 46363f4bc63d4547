#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xaidet/params.hpp"
#include "xaidet/tensor.hpp"

namespace xaidet {

// Class conventions used across the project.
inline constexpr int kReal = 0;
inline constexpr int kFake = 1;
inline constexpr int kUnattacked = 0;
inline constexpr int kAttacked = 1;

enum class XaiMethod { kSaliency, kInputXGradient, kIntegratedGradients, kGuidedBackprop };

const char* to_string(XaiMethod m);
std::optional<XaiMethod> xai_method_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Layer inventory (fixed): conv2d same-padding stride 1, ReLU, 2x2 max pool,
// global average pool, dense. Loss heads live in LossSpec below.
// ---------------------------------------------------------------------------

struct Conv2d {
  int in_ch = 0, out_ch = 0, ksize = 0;
  Tensor w;  // (out, in, k, k)
  Tensor b;  // (out)
};

struct Relu {};
struct MaxPool2 {};
struct GlobalAvgPool {};

struct Dense {
  int in_dim = 0, out_dim = 0;
  Tensor w;  // (out, in)
  Tensor b;  // (out)
};

using Layer = std::variant<Conv2d, Relu, MaxPool2, GlobalAvgPool, Dense>;

// ---------------------------------------------------------------------------
// Losses on logits. Margin and BCE are binary (two logits); target is the
// class whose score minimization raises.
// ---------------------------------------------------------------------------

struct LossSpec {
  enum class Kind { kMargin, kCrossEntropy, kBce, kXaiDistance };

  Kind kind = Kind::kCrossEntropy;
  int target = kReal;
  float margin_offset = 0.0f;  // added inside max(., 0); 0 is the plain margin
  XaiMethod xai_method = XaiMethod::kSaliency;
  Tensor reference_map;  // unnormalized map the distance is measured against

  /// max(Z_other - Z_target + offset, 0): zero once `target` wins by `offset`.
  static LossSpec margin_toward(int target_class, float offset = 0.0f) {
    LossSpec s;
    s.kind = Kind::kMargin;
    s.target = target_class;
    s.margin_offset = offset;
    return s;
  }
  static LossSpec cross_entropy() {
    LossSpec s;
    s.kind = Kind::kCrossEntropy;
    return s;
  }
  /// Binary cross-entropy on logits toward `target_class`.
  static LossSpec bce_toward(int target_class) {
    LossSpec s;
    s.kind = Kind::kBce;
    s.target = target_class;
    return s;
  }
  /// ||XAI(x) - reference||_2 for a gradient-based attribution of the
  /// target-class logit. Only saliency and input-x-gradient support the
  /// gradient of this term.
  static LossSpec xai_distance(XaiMethod m, int target_class, Tensor reference) {
    LossSpec s;
    s.kind = Kind::kXaiDistance;
    s.xai_method = m;
    s.target = target_class;
    s.reference_map = std::move(reference);
    return s;
  }
};

struct LossOut {
  float value = 0.0f;  // mean over the batch
  Tensor dlogits;      // same shape as logits
};

/// Loss value and d(loss)/d(logits) for the logits-based kinds.
/// labels are per-sample class indices (cross-entropy); margin/BCE use
/// spec.target and ignore labels.
LossOut eval_loss(const LossSpec& spec, const Tensor& logits, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Network: an ordered layer stack with fixed input shape.
// ---------------------------------------------------------------------------

struct ForwardTape;

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<int> input_shape) : input_shape_(std::move(input_shape)) {}

  Network& conv(int in_ch, int out_ch, int ksize);
  Network& relu();
  Network& maxpool();
  Network& gap();
  Network& dense(int in_dim, int out_dim);

  const std::vector<int>& input_shape() const { return input_shape_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  int output_dim() const;

  /// Logits for an NCHW batch; output shape (N, output_dim).
  Tensor forward(const Tensor& batch) const;
  /// Logits for a single CHW image; output shape (output_dim).
  Tensor forward_single(const Tensor& image) const;

  ForwardTape forward_tape(const Tensor& batch) const;

  struct BackwardOptions {
    bool guided_relu = false;
    bool want_input_grad = true;
    bool want_param_grads = false;
  };
  struct BackwardOut {
    Tensor input_grad;  // empty unless requested
    ParamSet param_grads;
  };
  BackwardOut backward(const ForwardTape& tape, const Tensor& dlogits,
                       const BackwardOptions& opt) const;

  ParamSet params() const;
  void load_params(const ParamSet& p);
  std::uint64_t param_checksum() const;
  std::size_t param_count() const;

  /// Every nonlinearity is a ReLU (pooling aside); guided backward requires it.
  bool all_relu() const;

  /// New network made of the first n layers (copied weights).
  Network prefix(std::size_t n) const;
  /// Index of the last Dense layer, or npos.
  std::size_t last_dense_index() const;

  std::string param_name(std::size_t layer_index, const char* field) const;

 private:
  std::vector<int> output_shape_of(std::size_t layer_index, const std::vector<int>& in) const;

  std::vector<int> input_shape_;
  std::vector<Layer> layers_;
};

/// Per-layer activations captured by forward_tape; consumed by backward.
struct ForwardTape {
  struct Entry {
    Tensor input;                // layer input (conv keeps cols instead)
    Tensor output;               // layer output (ReLU mask source)
    std::vector<int> argmax;     // max-pool winners, flat offset per plane cell
    Eigen::MatrixXf cols;        // conv im2col, (C*K*K) x (N*H*W)
    std::vector<int> in_shape;   // shape of the layer input
    std::vector<int> out_shape;  // shape of the layer output
  };
  int batch = 0;
  std::vector<Entry> entries;
  Tensor logits;
};

// ---------------------------------------------------------------------------
// Gradient entry points.
// ---------------------------------------------------------------------------

struct InputGradResult {
  Tensor grad;
  float loss = 0.0f;
};

/// d(loss)/dx for a single CHW image. For Kind::kXaiDistance the result is
/// the exact a.e. gradient of ||map(x) - ref||_2: the layer stack is
/// piecewise affine in x, so the attribution's own Jacobian contributes
/// nothing for saliency and a diagonal term for input-x-gradient; integrated
/// gradients and guided backprop are rejected.
InputGradResult input_gradient(const Network& net, const Tensor& image, const LossSpec& loss);

/// d(Z_target)/dx — the raw signed gradient of one logit.
Tensor logit_input_gradient(const Network& net, const Tensor& image, int target_class,
                            bool guided = false);

/// Guided-backprop variant: ReLU backward also zeroes negative upstream
/// gradients; positions with forward activation <= 0 stay blocked.
Tensor guided_input_gradient(const Network& net, const Tensor& image, int target_class);

struct ParamGradResult {
  ParamSet grads;
  float loss = 0.0f;
};

/// Mean-reduced d(loss)/d(theta) over an NCHW batch.
ParamGradResult param_gradients(const Network& net, const Tensor& batch,
                                const std::vector<int>& labels, const LossSpec& loss);

/// Stacks CHW frames (all, or the subset named by indices) into an NCHW batch.
Tensor make_batch(const std::vector<Tensor>& frames, const std::vector<int>& indices = {});

/// Rank-1 vector viewed as a (1,K) batch row.
Tensor as_row(const Tensor& vec);

}  // namespace xaidet
