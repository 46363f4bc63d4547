#pragma once

#include "xaidet/net.hpp"

namespace xaidet::xai {

/// Attribution map over an input image; same shape as the image, signed.
struct XaiMap {
  Tensor values;
  XaiMethod method = XaiMethod::kSaliency;
  int target = kReal;
};

struct IgConfig {
  Tensor baseline;  // empty means all-zeros
  int steps = 64;
};

/// Raw signed gradient of the target logit.
XaiMap saliency(const Network& net, const Tensor& x, int target);

/// x ⊙ saliency, signed.
XaiMap input_x_gradient(const Network& net, const Tensor& x, int target);

/// Right-Riemann path integral of the target-logit gradient from the
/// baseline to x, times (x - baseline). Satisfies completeness up to the
/// discretization error of `steps`.
XaiMap integrated_gradients(const Network& net, const Tensor& x, int target,
                            const IgConfig& cfg = {});

/// Saliency with the guided ReLU backward rule.
XaiMap guided_backprop_map(const Network& net, const Tensor& x, int target);

/// Dispatch by method tag; the raw (unnormalized) map.
Tensor compute_map(const Network& net, const Tensor& x, XaiMethod method, int target,
                   int ig_steps = 64);

/// Scale by 1/max|v| when the max is positive; idempotent; output in [-1,1].
Tensor normalize_map(const Tensor& map);

/// All-zero map for the blacked-out-attribution ablation.
Tensor black_map(const std::vector<int>& shape);

}  // namespace xaidet::xai
