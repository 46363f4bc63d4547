#include "xaidet/xai.hpp"

#include <stdexcept>

namespace xaidet::xai {

XaiMap saliency(const Network& net, const Tensor& x, int target) {
  XaiMap m;
  m.values = logit_input_gradient(net, x, target);
  m.method = XaiMethod::kSaliency;
  m.target = target;
  return m;
}

XaiMap input_x_gradient(const Network& net, const Tensor& x, int target) {
  XaiMap m;
  m.values = hadamard(x, logit_input_gradient(net, x, target));
  m.method = XaiMethod::kInputXGradient;
  m.target = target;
  return m;
}

XaiMap integrated_gradients(const Network& net, const Tensor& x, int target, const IgConfig& cfg) {
  if (cfg.steps < 1) throw std::invalid_argument("integrated gradients needs steps >= 1");
  Tensor baseline = cfg.baseline.empty() ? Tensor::zeros(x.shape()) : cfg.baseline;
  require_shape(baseline, x.shape(), "integrated-gradients baseline");

  // Gradients at all path points evaluated as one batch: one tape pays for m
  // single-image passes.
  const int m = cfg.steps;
  std::vector<int> bshape = {m};
  bshape.insert(bshape.end(), x.shape().begin(), x.shape().end());
  Tensor batch(bshape);
  const Eigen::Index sz = x.size();
  for (int k = 1; k <= m; ++k) {
    float a = static_cast<float>(k) / static_cast<float>(m);
    Eigen::Map<Eigen::ArrayXf>(batch.data() + static_cast<Eigen::Index>(k - 1) * sz, sz) =
        baseline.array() + a * (x.array() - baseline.array());
  }
  ForwardTape tape = net.forward_tape(batch);
  Tensor seed = Tensor::zeros(tape.logits.shape());
  if (target < 0 || target >= tape.logits.dim(1))
    throw std::invalid_argument("integrated gradients: target class out of range");
  for (int k = 0; k < m; ++k) seed.at({k, target}) = 1.0f;
  Network::BackwardOptions opt;
  opt.want_input_grad = true;
  auto back = net.backward(tape, seed, opt);

  Tensor avg = Tensor::zeros(x.shape());
  for (int k = 0; k < m; ++k)
    avg.array() += Eigen::Map<const Eigen::ArrayXf>(
        back.input_grad.data() + static_cast<Eigen::Index>(k) * sz, sz);
  avg.array() /= static_cast<float>(m);

  XaiMap out;
  out.values = hadamard(x - baseline, avg);
  out.method = XaiMethod::kIntegratedGradients;
  out.target = target;
  return out;
}

XaiMap guided_backprop_map(const Network& net, const Tensor& x, int target) {
  if (!net.all_relu())
    throw std::invalid_argument("guided backprop requires an all-ReLU network");
  XaiMap m;
  m.values = guided_input_gradient(net, x, target);
  m.method = XaiMethod::kGuidedBackprop;
  m.target = target;
  return m;
}

Tensor compute_map(const Network& net, const Tensor& x, XaiMethod method, int target,
                   int ig_steps) {
  switch (method) {
    case XaiMethod::kSaliency: return saliency(net, x, target).values;
    case XaiMethod::kInputXGradient: return input_x_gradient(net, x, target).values;
    case XaiMethod::kIntegratedGradients: {
      IgConfig cfg;
      cfg.steps = ig_steps;
      return integrated_gradients(net, x, target, cfg).values;
    }
    case XaiMethod::kGuidedBackprop: return guided_backprop_map(net, x, target).values;
  }
  throw std::logic_error("unreachable");
}

Tensor normalize_map(const Tensor& map) {
  if (!map.all_finite()) throw std::invalid_argument("normalize_map: non-finite values");
  float m = max_abs(map);
  if (m <= 0.0f) return map;
  Tensor out(map.shape());
  out.array() = map.array() / m;
  return out;
}

Tensor black_map(const std::vector<int>& shape) { return Tensor::zeros(shape); }

}  // namespace xaidet::xai
