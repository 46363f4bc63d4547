#include "xaidet/net.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace xaidet {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowConst = Eigen::Map<const RowMat>;

const char* to_string(XaiMethod m) {
  switch (m) {
    case XaiMethod::kSaliency: return "saliency";
    case XaiMethod::kInputXGradient: return "ixg";
    case XaiMethod::kIntegratedGradients: return "ig";
    case XaiMethod::kGuidedBackprop: return "gbp";
  }
  return "?";
}

std::optional<XaiMethod> xai_method_from_string(std::string_view s) {
  if (s == "saliency") return XaiMethod::kSaliency;
  if (s == "ixg" || s == "input_x_grad") return XaiMethod::kInputXGradient;
  if (s == "ig" || s == "integrated_grad") return XaiMethod::kIntegratedGradients;
  if (s == "gbp" || s == "guided_backprop") return XaiMethod::kGuidedBackprop;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

namespace {

float stable_softplus(float u) {
  // log(1 + e^u) without overflow.
  return std::max(u, 0.0f) + std::log1p(std::exp(-std::abs(u)));
}

float stable_sigmoid(float u) {
  if (u >= 0.0f) {
    float e = std::exp(-u);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(u);
  return e / (1.0f + e);
}

void require_binary(const Tensor& logits, const char* what) {
  if (logits.rank() != 2 || logits.dim(1) != 2)
    throw std::invalid_argument(std::string(what) + " requires (N,2) logits, got " +
                                Tensor::shape_str(logits.shape()));
}

}  // namespace

LossOut eval_loss(const LossSpec& spec, const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw std::invalid_argument("eval_loss expects (N,K) logits, got " +
                                Tensor::shape_str(logits.shape()));
  const int n = logits.dim(0);
  const int k = logits.dim(1);
  LossOut out;
  out.dlogits = Tensor::zeros(logits.shape());
  const float inv_n = 1.0f / static_cast<float>(n);

  switch (spec.kind) {
    case LossSpec::Kind::kMargin: {
      require_binary(logits, "margin loss");
      const int t = spec.target;
      const int o = 1 - t;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        float u = logits.at({i, o}) - logits.at({i, t}) + spec.margin_offset;
        if (u > 0.0f) {
          acc += u;
          out.dlogits.at({i, o}) = inv_n;
          out.dlogits.at({i, t}) = -inv_n;
        }
      }
      out.value = static_cast<float>(acc) * inv_n;
      break;
    }
    case LossSpec::Kind::kCrossEntropy: {
      if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("cross-entropy labels length must equal batch size");
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        float m = logits.at({i, 0});
        for (int c = 1; c < k; ++c) m = std::max(m, logits.at({i, c}));
        double se = 0.0;
        for (int c = 0; c < k; ++c) se += std::exp(static_cast<double>(logits.at({i, c}) - m));
        double lse = m + std::log(se);
        int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= k) throw std::invalid_argument("label out of range");
        acc += lse - logits.at({i, y});
        for (int c = 0; c < k; ++c) {
          float p = static_cast<float>(std::exp(logits.at({i, c}) - lse));
          out.dlogits.at({i, c}) = (p - (c == y ? 1.0f : 0.0f)) * inv_n;
        }
      }
      out.value = static_cast<float>(acc) * inv_n;
      break;
    }
    case LossSpec::Kind::kBce: {
      require_binary(logits, "BCE loss");
      const int t = spec.target;
      const int o = 1 - t;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        float u = logits.at({i, o}) - logits.at({i, t});
        acc += stable_softplus(u);
        float s = stable_sigmoid(u) * inv_n;
        out.dlogits.at({i, o}) = s;
        out.dlogits.at({i, t}) = -s;
      }
      out.value = static_cast<float>(acc) * inv_n;
      break;
    }
    case LossSpec::Kind::kXaiDistance:
      throw std::invalid_argument("xai-distance loss has no logits form; use input_gradient");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network construction and shape inference
// ---------------------------------------------------------------------------

Network& Network::conv(int in_ch, int out_ch, int ksize) {
  Conv2d c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.ksize = ksize;
  c.w = Tensor::zeros({out_ch, in_ch, ksize, ksize});
  c.b = Tensor::zeros({out_ch});
  layers_.emplace_back(std::move(c));
  return *this;
}

Network& Network::relu() {
  layers_.emplace_back(Relu{});
  return *this;
}

Network& Network::maxpool() {
  layers_.emplace_back(MaxPool2{});
  return *this;
}

Network& Network::gap() {
  layers_.emplace_back(GlobalAvgPool{});
  return *this;
}

Network& Network::dense(int in_dim, int out_dim) {
  Dense d;
  d.in_dim = in_dim;
  d.out_dim = out_dim;
  d.w = Tensor::zeros({out_dim, in_dim});
  d.b = Tensor::zeros({out_dim});
  layers_.emplace_back(std::move(d));
  return *this;
}

std::vector<int> Network::output_shape_of(std::size_t li, const std::vector<int>& in) const {
  const Layer& layer = layers_[li];
  if (std::holds_alternative<Conv2d>(layer)) {
    const auto& c = std::get<Conv2d>(layer);
    if (in.size() != 4 || in[1] != c.in_ch)
      throw std::invalid_argument("conv" + std::to_string(li) + ": expected (N," +
                                  std::to_string(c.in_ch) + ",H,W), got " +
                                  Tensor::shape_str(in));
    return {in[0], c.out_ch, in[2], in[3]};
  }
  if (std::holds_alternative<MaxPool2>(layer)) {
    if (in.size() != 4 || in[2] % 2 != 0 || in[3] % 2 != 0)
      throw std::invalid_argument("maxpool" + std::to_string(li) + ": needs even NCHW, got " +
                                  Tensor::shape_str(in));
    return {in[0], in[1], in[2] / 2, in[3] / 2};
  }
  if (std::holds_alternative<GlobalAvgPool>(layer)) {
    if (in.size() != 4)
      throw std::invalid_argument("gap" + std::to_string(li) + ": needs NCHW, got " +
                                  Tensor::shape_str(in));
    return {in[0], in[1]};
  }
  if (std::holds_alternative<Dense>(layer)) {
    const auto& d = std::get<Dense>(layer);
    if (in.size() != 2 || in[1] != d.in_dim)
      throw std::invalid_argument("dense" + std::to_string(li) + ": expected (N," +
                                  std::to_string(d.in_dim) + "), got " +
                                  Tensor::shape_str(in));
    return {in[0], d.out_dim};
  }
  return in;  // ReLU
}

int Network::output_dim() const {
  std::vector<int> s = {1};
  s.insert(s.end(), input_shape_.begin(), input_shape_.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) s = output_shape_of(i, s);
  if (s.size() != 2) throw std::logic_error("network does not end in a vector output");
  return s[1];
}

std::string Network::param_name(std::size_t li, const char* field) const {
  const Layer& layer = layers_[li];
  const char* base = std::holds_alternative<Conv2d>(layer) ? "conv" : "dense";
  return std::string(base) + std::to_string(li) + "." + field;
}

ParamSet Network::params() const {
  ParamSet p;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (const auto* c = std::get_if<Conv2d>(&layers_[i])) {
      p.add(param_name(i, "w"), c->w);
      p.add(param_name(i, "b"), c->b);
    } else if (const auto* d = std::get_if<Dense>(&layers_[i])) {
      p.add(param_name(i, "w"), d->w);
      p.add(param_name(i, "b"), d->b);
    }
  }
  return p;
}

void Network::load_params(const ParamSet& p) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* c = std::get_if<Conv2d>(&layers_[i])) {
      const Tensor& w = p.at(param_name(i, "w"));
      const Tensor& b = p.at(param_name(i, "b"));
      if (w.shape() != c->w.shape() || b.shape() != c->b.shape())
        throw std::invalid_argument("parameter shape mismatch at " + param_name(i, "w"));
      c->w = w;
      c->b = b;
    } else if (auto* d = std::get_if<Dense>(&layers_[i])) {
      const Tensor& w = p.at(param_name(i, "w"));
      const Tensor& b = p.at(param_name(i, "b"));
      if (w.shape() != d->w.shape() || b.shape() != d->b.shape())
        throw std::invalid_argument("parameter shape mismatch at " + param_name(i, "w"));
      d->w = w;
      d->b = b;
    }
  }
}

std::uint64_t Network::param_checksum() const { return params().checksum(); }

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params().entries) n += static_cast<std::size_t>(t.size());
  return n;
}

bool Network::all_relu() const {
  // The fixed inventory has no other activation; kept as a guard for the
  // guided backward contract.
  return true;
}

Network Network::prefix(std::size_t n) const {
  Network out(input_shape_);
  for (std::size_t i = 0; i < n && i < layers_.size(); ++i) out.layers_.push_back(layers_[i]);
  return out;
}

std::size_t Network::last_dense_index() const {
  for (std::size_t i = layers_.size(); i-- > 0;)
    if (std::holds_alternative<Dense>(layers_[i])) return i;
  return static_cast<std::size_t>(-1);
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

// im2col for stride-1 same-padding conv: cols is (C*K*K) x (H*W) for one item.
void fill_cols(const float* x, int C, int H, int W, int K, float* cols) {
  const int pad = K / 2;
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    const float* plane = x + c * HW;
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        float* row = cols + ((c * K + ky) * K + kx) * HW;
        const int dy = ky - pad;
        const int dx = kx - pad;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          float* dst = row + y * W;
          if (sy < 0 || sy >= H) {
            std::memset(dst, 0, sizeof(float) * static_cast<std::size_t>(W));
            continue;
          }
          const float* src = plane + sy * W;
          for (int x0 = 0; x0 < W; ++x0) {
            const int sx = x0 + dx;
            dst[x0] = (sx < 0 || sx >= W) ? 0.0f : src[sx];
          }
        }
      }
    }
  }
}

// Scatter-add of d(cols) back into d(x); adjoint of fill_cols.
void cols_to_input(const float* dcols, int C, int H, int W, int K, float* dx) {
  const int pad = K / 2;
  const int HW = H * W;
  for (int c = 0; c < C; ++c) {
    float* plane = dx + c * HW;
    for (int ky = 0; ky < K; ++ky) {
      for (int kx = 0; kx < K; ++kx) {
        const float* row = dcols + ((c * K + ky) * K + kx) * HW;
        const int dy = ky - pad;
        const int dx0 = kx - pad;
        for (int y = 0; y < H; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          const float* src = row + y * W;
          float* dst = plane + sy * W;
          for (int x0 = 0; x0 < W; ++x0) {
            const int sx = x0 + dx0;
            if (sx >= 0 && sx < W) dst[sx] += src[x0];
          }
        }
      }
    }
  }
}

}  // namespace

ForwardTape Network::forward_tape(const Tensor& batch) const {
  // Image stacks take (N,C,H,W); dense-only stacks (input_shape {D}) take (N,D).
  if (batch.rank() != static_cast<int>(input_shape_.size()) + 1)
    throw std::invalid_argument("forward expects batched input of rank " +
                                std::to_string(input_shape_.size() + 1) + ", got " +
                                Tensor::shape_str(batch.shape()));
  std::vector<int> expect = {batch.dim(0)};
  expect.insert(expect.end(), input_shape_.begin(), input_shape_.end());
  require_shape(batch, expect, "forward input");

  ForwardTape tape;
  tape.batch = batch.dim(0);
  tape.entries.resize(layers_.size());

  Tensor cur = batch;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    auto& entry = tape.entries[li];
    entry.in_shape = cur.shape();
    const Layer& layer = layers_[li];

    if (const auto* cv = std::get_if<Conv2d>(&layer)) {
      const int N = cur.dim(0), C = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
      if (C != cv->in_ch)
        throw std::invalid_argument("conv" + std::to_string(li) + ": channel mismatch (" +
                                    std::to_string(C) + " vs " + std::to_string(cv->in_ch) + ")");
      const int K = cv->ksize, HW = H * W, CKK = C * K * K;
      entry.cols.resize(CKK, static_cast<Eigen::Index>(N) * HW);
      Tensor out({N, cv->out_ch, H, W});
      MapRowConst wmat(cv->w.data(), cv->out_ch, CKK);
      for (int n = 0; n < N; ++n) {
        float* colptr = entry.cols.data() + static_cast<std::ptrdiff_t>(n) * CKK * HW;
        fill_cols(cur.data() + static_cast<std::ptrdiff_t>(n) * C * HW, C, H, W, K, colptr);
        // fill_cols writes HW-contiguous rows, i.e. a row-major (CKK x HW) block
        MapRowConst cols(colptr, CKK, HW);
        MapRow y(out.data() + static_cast<std::ptrdiff_t>(n) * cv->out_ch * HW, cv->out_ch, HW);
        y.noalias() = wmat * cols;
        for (int o = 0; o < cv->out_ch; ++o) y.row(o).array() += cv->b[o];
      }
      entry.out_shape = out.shape();
      cur = std::move(out);
    } else if (std::holds_alternative<Relu>(layer)) {
      Tensor out(cur.shape());
      out.array() = cur.array().max(0.0f);
      entry.out_shape = out.shape();
      entry.output = out;
      cur = std::move(out);
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      const int N = cur.dim(0), C = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
      if (H % 2 || W % 2)
        throw std::invalid_argument("maxpool" + std::to_string(li) + ": odd spatial dims");
      const int Ho = H / 2, Wo = W / 2;
      Tensor out({N, C, Ho, Wo});
      entry.argmax.assign(static_cast<std::size_t>(N) * C * Ho * Wo, 0);
      const float* src = cur.data();
      float* dst = out.data();
      int* am = entry.argmax.data();
      for (int nc = 0; nc < N * C; ++nc) {
        const float* plane = src + static_cast<std::ptrdiff_t>(nc) * H * W;
        for (int y = 0; y < Ho; ++y) {
          for (int x = 0; x < Wo; ++x) {
            int base = (2 * y) * W + 2 * x;
            int best = base;
            float bv = plane[base];
            const int cand[3] = {base + 1, base + W, base + W + 1};
            for (int k = 0; k < 3; ++k)
              if (plane[cand[k]] > bv) {
                bv = plane[cand[k]];
                best = cand[k];
              }
            *dst++ = bv;
            *am++ = best;
          }
        }
      }
      entry.out_shape = out.shape();
      cur = std::move(out);
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      const int N = cur.dim(0), C = cur.dim(1), H = cur.dim(2), W = cur.dim(3);
      Tensor out({N, C});
      const float inv = 1.0f / static_cast<float>(H * W);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const float* plane = cur.data() + (static_cast<std::ptrdiff_t>(n) * C + c) * H * W;
          float acc = 0.0f;
          for (int i = 0; i < H * W; ++i) acc += plane[i];
          out.at({n, c}) = acc * inv;
        }
      entry.out_shape = out.shape();
      cur = std::move(out);
    } else if (const auto* de = std::get_if<Dense>(&layer)) {
      if (cur.rank() != 2 || cur.dim(1) != de->in_dim)
        throw std::invalid_argument("dense" + std::to_string(li) + ": expected (N," +
                                    std::to_string(de->in_dim) + "), got " +
                                    Tensor::shape_str(cur.shape()));
      const int N = cur.dim(0);
      Tensor out({N, de->out_dim});
      MapRowConst x(cur.data(), N, de->in_dim);
      MapRowConst w(de->w.data(), de->out_dim, de->in_dim);
      MapRow y(out.data(), N, de->out_dim);
      y.noalias() = x * w.transpose();
      for (int o = 0; o < de->out_dim; ++o) y.col(o).array() += de->b[o];
      entry.input = cur;
      entry.out_shape = out.shape();
      cur = std::move(out);
    }
  }
  if (cur.rank() != 2) throw std::logic_error("network must end in a (N,K) output");
  tape.logits = std::move(cur);
  if (!tape.logits.all_finite()) throw std::runtime_error("forward produced non-finite logits");
  return tape;
}

Tensor Network::forward(const Tensor& batch) const { return forward_tape(batch).logits; }

Tensor Network::forward_single(const Tensor& image) const {
  require_shape(image, input_shape_, "forward input");
  std::vector<int> bshape = {1};
  bshape.insert(bshape.end(), image.shape().begin(), image.shape().end());
  Tensor b(bshape);
  b.array() = image.array();
  Tensor logits = forward(b);
  Tensor out({logits.dim(1)});
  out.array() = Eigen::Map<const Eigen::ArrayXf>(logits.data(), logits.dim(1));
  return out;
}

Tensor as_row(const Tensor& vec) {
  Tensor out({1, static_cast<int>(vec.size())});
  out.array() = vec.array();
  return out;
}

Tensor make_batch(const std::vector<Tensor>& frames, const std::vector<int>& indices) {
  if (frames.empty()) throw std::invalid_argument("make_batch: no frames");
  const std::vector<int>& fs = frames.front().shape();
  std::vector<int> bshape = {static_cast<int>(indices.empty() ? frames.size() : indices.size())};
  bshape.insert(bshape.end(), fs.begin(), fs.end());
  Tensor out(bshape);
  const Eigen::Index stride = frames.front().size();
  Eigen::Index off = 0;
  auto copy_one = [&](const Tensor& f) {
    require_shape(f, fs, "make_batch frame");
    std::memcpy(out.data() + off, f.data(), sizeof(float) * static_cast<std::size_t>(stride));
    off += stride;
  };
  if (indices.empty())
    for (const Tensor& f : frames) copy_one(f);
  else
    for (int i : indices) copy_one(frames[static_cast<std::size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

Network::BackwardOut Network::backward(const ForwardTape& tape, const Tensor& dlogits,
                                       const BackwardOptions& opt) const {
  if (tape.entries.size() != layers_.size())
    throw std::invalid_argument("tape does not match network");
  Network::BackwardOut out;
  Tensor grad = dlogits;

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const auto& entry = tape.entries[li];

    if (const auto* cv = std::get_if<Conv2d>(&layer)) {
      const int N = entry.in_shape[0], C = entry.in_shape[1];
      const int H = entry.in_shape[2], W = entry.in_shape[3];
      const int K = cv->ksize, HW = H * W, CKK = C * K * K, O = cv->out_ch;

      Tensor dw, db;
      if (opt.want_param_grads) {
        dw = Tensor::zeros(cv->w.shape());
        db = Tensor::zeros(cv->b.shape());
      }
      Tensor dx;
      if (opt.want_input_grad || li > 0) dx = Tensor::zeros(entry.in_shape);

      MapRowConst wmat(cv->w.data(), O, CKK);
      Eigen::MatrixXf dcols(CKK, HW);
      for (int n = 0; n < N; ++n) {
        MapRowConst dy(grad.data() + static_cast<std::ptrdiff_t>(n) * O * HW, O, HW);
        const float* colptr = entry.cols.data() + static_cast<std::ptrdiff_t>(n) * CKK * HW;
        MapRowConst cols(colptr, CKK, HW);
        if (opt.want_param_grads) {
          MapRow dwm(dw.data(), O, CKK);
          dwm.noalias() += dy * cols.transpose();
          for (int o = 0; o < O; ++o) db[o] += dy.row(o).sum();
        }
        if (dx.size()) {
          MapRow dcm(dcols.data(), CKK, HW);
          dcm.noalias() = wmat.transpose() * dy;
          cols_to_input(dcols.data(), C, H, W, K,
                        dx.data() + static_cast<std::ptrdiff_t>(n) * C * HW);
        }
      }
      if (opt.want_param_grads) {
        out.param_grads.add(param_name(li, "w"), std::move(dw));
        out.param_grads.add(param_name(li, "b"), std::move(db));
      }
      grad = std::move(dx);
    } else if (std::holds_alternative<Relu>(layer)) {
      Tensor dx(entry.out_shape);
      if (opt.guided_relu) {
        dx.array() = grad.array() * (entry.output.array() > 0.0f).cast<float>() *
                     (grad.array() > 0.0f).cast<float>();
      } else {
        dx.array() = grad.array() * (entry.output.array() > 0.0f).cast<float>();
      }
      grad = std::move(dx);
    } else if (std::holds_alternative<MaxPool2>(layer)) {
      const int N = entry.in_shape[0], C = entry.in_shape[1];
      const int H = entry.in_shape[2], W = entry.in_shape[3];
      const int Ho = H / 2, Wo = W / 2;
      Tensor dx = Tensor::zeros(entry.in_shape);
      const float* g = grad.data();
      const int* am = entry.argmax.data();
      for (int nc = 0; nc < N * C; ++nc) {
        float* plane = dx.data() + static_cast<std::ptrdiff_t>(nc) * H * W;
        for (int i = 0; i < Ho * Wo; ++i) plane[*am++] += *g++;
      }
      grad = std::move(dx);
    } else if (std::holds_alternative<GlobalAvgPool>(layer)) {
      const int N = entry.in_shape[0], C = entry.in_shape[1];
      const int H = entry.in_shape[2], W = entry.in_shape[3];
      Tensor dx(entry.in_shape);
      const float inv = 1.0f / static_cast<float>(H * W);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          float v = grad.at({n, c}) * inv;
          float* plane = dx.data() + (static_cast<std::ptrdiff_t>(n) * C + c) * H * W;
          for (int i = 0; i < H * W; ++i) plane[i] = v;
        }
      grad = std::move(dx);
    } else if (const auto* de = std::get_if<Dense>(&layer)) {
      const int N = entry.in_shape[0];
      MapRowConst dy(grad.data(), N, de->out_dim);
      MapRowConst x(entry.input.data(), N, de->in_dim);
      if (opt.want_param_grads) {
        Tensor dw = Tensor::zeros(de->w.shape());
        Tensor db = Tensor::zeros(de->b.shape());
        MapRow dwm(dw.data(), de->out_dim, de->in_dim);
        dwm.noalias() = dy.transpose() * x;
        for (int o = 0; o < de->out_dim; ++o) db[o] = dy.col(o).sum();
        out.param_grads.add(param_name(li, "w"), std::move(dw));
        out.param_grads.add(param_name(li, "b"), std::move(db));
      }
      Tensor dx({N, de->in_dim});
      MapRowConst w(de->w.data(), de->out_dim, de->in_dim);
      MapRow dxm(dx.data(), N, de->in_dim);
      dxm.noalias() = dy * w;
      grad = std::move(dx);
    }
  }
  if (opt.want_input_grad) {
    if (!grad.all_finite()) throw std::runtime_error("backward produced non-finite gradient");
    out.input_grad = std::move(grad);
  }
  if (opt.want_param_grads && !out.param_grads.all_finite())
    throw std::runtime_error("backward produced non-finite parameter gradient");
  return out;
}

// ---------------------------------------------------------------------------
// Gradient entry points
// ---------------------------------------------------------------------------

namespace {

Tensor as_batch1(const Tensor& image) {
  std::vector<int> bshape = {1};
  bshape.insert(bshape.end(), image.shape().begin(), image.shape().end());
  Tensor b(bshape);
  b.array() = image.array();
  return b;
}

Tensor squeeze_batch(const Tensor& t, const std::vector<int>& shape) {
  Tensor out(shape);
  out.array() = t.array();
  return out;
}

}  // namespace

Tensor logit_input_gradient(const Network& net, const Tensor& image, int target_class,
                            bool guided) {
  require_shape(image, net.input_shape(), "input");
  if (guided && !net.all_relu())
    throw std::invalid_argument("guided backward is defined only for all-ReLU networks");
  ForwardTape tape = net.forward_tape(as_batch1(image));
  const int k = tape.logits.dim(1);
  if (target_class < 0 || target_class >= k)
    throw std::invalid_argument("target class " + std::to_string(target_class) +
                                " out of range for " + std::to_string(k) + " outputs");
  Tensor seed = Tensor::zeros(tape.logits.shape());
  seed.at({0, target_class}) = 1.0f;
  Network::BackwardOptions opt;
  opt.guided_relu = guided;
  opt.want_input_grad = true;
  auto back = net.backward(tape, seed, opt);
  return squeeze_batch(back.input_grad, image.shape());
}

Tensor guided_input_gradient(const Network& net, const Tensor& image, int target_class) {
  return logit_input_gradient(net, image, target_class, /*guided=*/true);
}

InputGradResult input_gradient(const Network& net, const Tensor& image, const LossSpec& loss) {
  require_shape(image, net.input_shape(), "input");

  if (loss.kind == LossSpec::Kind::kXaiDistance) {
    if (loss.xai_method == XaiMethod::kIntegratedGradients ||
        loss.xai_method == XaiMethod::kGuidedBackprop)
      throw std::invalid_argument(
          std::string("gradient through the attribution is not supported for ") +
          to_string(loss.xai_method) + "; use saliency or ixg");
    require_shape(loss.reference_map, image.shape(), "reference map");

    Tensor g = logit_input_gradient(net, image, loss.target);
    Tensor map = (loss.xai_method == XaiMethod::kSaliency) ? g : hadamard(image, g);
    Tensor diff = map - loss.reference_map;
    double d2 = diff.array().template cast<double>().square().sum();
    float dist = static_cast<float>(std::sqrt(d2));

    InputGradResult out;
    out.loss = dist;
    // The stack is piecewise affine in x, so d(map)/dx is zero a.e. for
    // saliency; for ixg only the explicit x factor survives.
    if (dist <= 0.0f || loss.xai_method == XaiMethod::kSaliency) {
      out.grad = Tensor::zeros(image.shape());
    } else {
      out.grad = Tensor(image.shape());
      out.grad.array() = (diff.array() / dist) * g.array();
    }
    return out;
  }

  ForwardTape tape = net.forward_tape(as_batch1(image));
  std::vector<int> labels = {loss.target};
  LossOut lo = eval_loss(loss, tape.logits, labels);
  Network::BackwardOptions opt;
  opt.want_input_grad = true;
  auto back = net.backward(tape, lo.dlogits, opt);
  return {squeeze_batch(back.input_grad, image.shape()), lo.value};
}

ParamGradResult param_gradients(const Network& net, const Tensor& batch,
                                const std::vector<int>& labels, const LossSpec& loss) {
  if (loss.kind == LossSpec::Kind::kCrossEntropy &&
      static_cast<int>(labels.size()) != batch.dim(0))
    throw std::invalid_argument("labels length " + std::to_string(labels.size()) +
                                " does not match batch size " + std::to_string(batch.dim(0)));
  ForwardTape tape = net.forward_tape(batch);
  LossOut lo = eval_loss(loss, tape.logits, labels);
  Network::BackwardOptions opt;
  opt.want_input_grad = false;
  opt.want_param_grads = true;
  auto back = net.backward(tape, lo.dlogits, opt);
  return {std::move(back.param_grads), lo.value};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamOptions& opt) {
  if (!params.same_shapes(grads) || !params.same_shapes(state.m) || !params.same_shapes(state.v))
    throw std::invalid_argument("adam_step: parameter/gradient/state shapes disagree");
  if (!grads.all_finite()) throw std::invalid_argument("adam_step: non-finite gradient");

  state.t += 1;
  const float bc1 = 1.0f - std::pow(opt.beta1, static_cast<float>(state.t));
  const float bc2 = 1.0f - std::pow(opt.beta2, static_cast<float>(state.t));
  for (auto& [name, p] : params.entries) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    m.array() = opt.beta1 * m.array() + (1.0f - opt.beta1) * g.array();
    v.array() = opt.beta2 * v.array() + (1.0f - opt.beta2) * g.array().square();
    p.array() -= opt.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + opt.eps);
  }
}

}  // namespace xaidet
