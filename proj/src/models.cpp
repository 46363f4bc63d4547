#include "xaidet/models.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "xaidet/rng.hpp"

namespace xaidet::models {

Network make_arch(const std::string& name) {
  if (name == "arch-A") {
    Network n({3, 32, 32});
    n.conv(3, 16, 3).relu().maxpool();
    n.conv(16, 32, 3).relu().maxpool();
    n.conv(32, 64, 3).relu();
    n.gap();
    n.dense(64, 2);
    return n;
  }
  if (name == "arch-B") {
    Network n({3, 32, 32});
    n.conv(3, 12, 5).relu().maxpool();
    n.conv(12, 24, 3).relu().maxpool();
    n.gap();
    n.dense(24, 32).relu();
    n.dense(32, 2);
    return n;
  }
  throw std::invalid_argument("unknown architecture '" + name + "' (expected arch-A or arch-B)");
}

bool is_known_arch(const std::string& name) { return name == "arch-A" || name == "arch-B"; }

namespace {

void he_uniform_init(Network& net, std::uint64_t seed) {
  ParamSet p = net.params();
  // Walk layers in stack order so the draw sequence is architecture-defined.
  std::size_t li = 0;
  Rng rng(seed);
  for (const Layer& layer : net.layers()) {
    if (const auto* c = std::get_if<Conv2d>(&layer)) {
      float limit = std::sqrt(6.0f / static_cast<float>(c->in_ch * c->ksize * c->ksize));
      Tensor& w = p.at(net.param_name(li, "w"));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
    } else if (const auto* d = std::get_if<Dense>(&layer)) {
      float limit = std::sqrt(6.0f / static_cast<float>(d->in_dim));
      Tensor& w = p.at(net.param_name(li, "w"));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
    }
    ++li;
  }
  net.load_params(p);
}

}  // namespace

ModelBundle build(const std::string& arch, std::uint64_t seed) {
  ModelBundle m;
  m.arch = arch;
  m.init_seed = seed;
  m.net = make_arch(arch);
  he_uniform_init(m.net, seed);
  return m;
}

// ---------------------------------------------------------------------------
// Deepfake-detector training
// ---------------------------------------------------------------------------

TrainReport train_deepfake_detector(ModelBundle& model, const LabeledFrames& train,
                                    const LabeledFrames* holdout, const TrainHyper& hyper) {
  if (train.images.empty()) throw std::invalid_argument("training dataset is empty");
  if (train.images.size() != train.labels.size())
    throw std::invalid_argument("images/labels length mismatch");

  TrainReport report;
  Rng rng(fork_seed(hyper.seed, "train-detector"));
  ParamSet params = model.net.params();
  AdamState state = AdamState::zeros_like(params);
  AdamOptions adam{hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps};
  LossSpec ce = LossSpec::cross_entropy();
  const int n = static_cast<int>(train.images.size());

  for (int step = 0; step < hyper.iterations; ++step) {
    std::vector<int> idx(static_cast<std::size_t>(hyper.batch_size));
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = static_cast<int>(rng.below(static_cast<std::uint32_t>(n)));
      labels[i] = train.labels[static_cast<std::size_t>(idx[i])];
    }
    Tensor batch = make_batch(train.images, idx);
    auto pg = param_gradients(model.net, batch, labels, ce);
    adam_step(params, pg.grads, state, adam);
    model.net.load_params(params);
    report.loss_history.push_back(pg.loss);
  }
  report.final_train_loss =
      report.loss_history.empty() ? 0.0f : report.loss_history.back();
  if (holdout) report.holdout_accuracy = classification_accuracy(model.net, *holdout);
  return report;
}

float classification_accuracy(const Network& net, const LabeledFrames& data) {
  if (data.images.empty()) throw std::invalid_argument("accuracy over an empty dataset");
  const int n = static_cast<int>(data.images.size());
  const int chunk = 64;
  int correct = 0;
  for (int lo = 0; lo < n; lo += chunk) {
    int hi = std::min(n, lo + chunk);
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    Tensor logits = net.forward(make_batch(data.images, idx));
    for (int i = 0; i < hi - lo; ++i) {
      int pred = logits.at({i, 1}) > logits.at({i, 0}) ? 1 : 0;
      if (pred == data.labels[static_cast<std::size_t>(lo + i)]) ++correct;
    }
  }
  return static_cast<float>(correct) / static_cast<float>(n);
}

// ---------------------------------------------------------------------------
// Backbone and adversarial detector
// ---------------------------------------------------------------------------

Tensor BackboneEmbedder::embed(const Tensor& image) const { return trunk.forward_single(image); }

BackboneEmbedder make_backbone(const ModelBundle& detector) {
  std::size_t cut = detector.net.last_dense_index();
  if (cut == static_cast<std::size_t>(-1))
    throw std::invalid_argument("detector has no dense layer to strip");
  BackboneEmbedder b;
  b.trunk = detector.net.prefix(cut);
  b.dim = b.trunk.output_dim();
  return b;
}

const char* to_string(Regime r) { return r == Regime::kFullFinetune ? "full" : "head"; }

AdvDetector make_adv_detector(const ModelBundle& detector, std::uint64_t seed) {
  AdvDetector det;
  det.backbone = make_backbone(detector);
  const int d2 = 2 * det.backbone.dim;
  det.head = Network({d2});
  det.head.dense(d2, AdvDetector::kHiddenWidth).relu().dense(AdvDetector::kHiddenWidth, 2);
  he_uniform_init(det.head, fork_seed(seed, "adv-head"));
  return det;
}

float attacked_probability(const Tensor& logits2) {
  float u = logits2[kAttacked] - logits2[kUnattacked];
  if (u >= 0.0f) return 1.0f / (1.0f + std::exp(-u));
  float e = std::exp(u);
  return e / (1.0f + e);
}

int decide_attacked(float score, float tau) { return score > tau ? kAttacked : kUnattacked; }

namespace {

Tensor concat_pair(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0)});
  std::memcpy(out.data(), a.data(), sizeof(float) * static_cast<std::size_t>(a.size()));
  std::memcpy(out.data() + a.size(), b.data(), sizeof(float) * static_cast<std::size_t>(b.size()));
  return out;
}

// (N,Da) + (N,Db) -> (N,Da+Db); image block first.
Tensor concat_rows(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::ptrdiff_t>(i) * (da + db),
                a.data() + static_cast<std::ptrdiff_t>(i) * da,
                sizeof(float) * static_cast<std::size_t>(da));
    std::memcpy(out.data() + static_cast<std::ptrdiff_t>(i) * (da + db) + da,
                b.data() + static_cast<std::ptrdiff_t>(i) * db,
                sizeof(float) * static_cast<std::size_t>(db));
  }
  return out;
}

}  // namespace

AdvVerdict adv_detect(const AdvDetector& det, const Tensor& image, const Tensor& map, float tau) {
  require_shape(map, image.shape(), "attribution map");
  Tensor e_img = det.backbone.embed(image);
  Tensor e_map = det.backbone.embed(map);
  Tensor joint = concat_pair(e_img, e_map);
  AdvVerdict v;
  v.logits = det.head.forward_single(joint);
  v.attacked_score = attacked_probability(v.logits);
  v.label = decide_attacked(v.attacked_score, tau);
  return v;
}

TrainReport train_adv_detector(AdvDetector& det, const PairedBatch& train, Regime regime,
                               const TrainHyper& hyper) {
  if (train.images.empty()) throw std::invalid_argument("paired training set is empty");
  if (train.images.size() != train.maps.size() || train.images.size() != train.labels.size())
    throw std::invalid_argument("paired dataset fields disagree in length");

  TrainReport report;
  det.regime = regime;

  int n_attacked = 0;
  for (int y : train.labels) n_attacked += (y == kAttacked);
  float frac = static_cast<float>(n_attacked) / static_cast<float>(train.labels.size());
  if (frac < 0.4f || frac > 0.6f)
    report.warnings.push_back("class balance outside 60/40: attacked fraction " +
                              std::to_string(frac));

  const bool full = regime == Regime::kFullFinetune;
  ParamSet params;
  for (const auto& [name, t] : det.head.params().entries) params.add("head." + name, t);
  if (full)
    for (const auto& [name, t] : det.backbone.trunk.params().entries)
      params.add("trunk." + name, t);
  AdamState state = AdamState::zeros_like(params);
  AdamOptions adam{hyper.lr, hyper.beta1, hyper.beta2, hyper.adam_eps};
  LossSpec ce = LossSpec::cross_entropy();

  auto unpack = [&](const ParamSet& joint) {
    ParamSet head, trunk;
    for (const auto& [name, t] : joint.entries) {
      if (name.rfind("head.", 0) == 0) head.add(name.substr(5), t);
      else trunk.add(name.substr(6), t);
    }
    det.head.load_params(head);
    if (full) det.backbone.trunk.load_params(trunk);
  };

  Rng rng(fork_seed(hyper.seed, "train-adv"));
  const int n = static_cast<int>(train.images.size());

  for (int step = 0; step < hyper.iterations; ++step) {
    std::vector<int> idx(static_cast<std::size_t>(hyper.batch_size));
    std::vector<int> labels(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      idx[i] = static_cast<int>(rng.below(static_cast<std::uint32_t>(n)));
      labels[i] = train.labels[static_cast<std::size_t>(idx[i])];
    }
    Tensor img_batch = make_batch(train.images, idx);
    Tensor map_batch = make_batch(train.maps, idx);

    ForwardTape tape_img = det.backbone.trunk.forward_tape(img_batch);
    ForwardTape tape_map = det.backbone.trunk.forward_tape(map_batch);
    Tensor joint = concat_rows(tape_img.logits, tape_map.logits);
    ForwardTape tape_head = det.head.forward_tape(joint);

    LossOut lo = eval_loss(ce, tape_head.logits, labels);
    report.loss_history.push_back(lo.value);

    Network::BackwardOptions head_opt;
    head_opt.want_input_grad = true;
    head_opt.want_param_grads = true;
    auto head_back = det.head.backward(tape_head, lo.dlogits, head_opt);

    ParamSet grads;
    for (auto& [name, t] : head_back.param_grads.entries) grads.add("head." + name, std::move(t));

    if (full) {
      const int d = det.backbone.dim;
      const int bsz = img_batch.dim(0);
      Tensor d_img({bsz, d}), d_map({bsz, d});
      for (int i = 0; i < bsz; ++i) {
        std::memcpy(d_img.data() + static_cast<std::ptrdiff_t>(i) * d,
                    head_back.input_grad.data() + static_cast<std::ptrdiff_t>(i) * 2 * d,
                    sizeof(float) * static_cast<std::size_t>(d));
        std::memcpy(d_map.data() + static_cast<std::ptrdiff_t>(i) * d,
                    head_back.input_grad.data() + static_cast<std::ptrdiff_t>(i) * 2 * d + d,
                    sizeof(float) * static_cast<std::size_t>(d));
      }
      Network::BackwardOptions trunk_opt;
      trunk_opt.want_input_grad = false;
      trunk_opt.want_param_grads = true;
      auto g_img = det.backbone.trunk.backward(tape_img, d_img, trunk_opt);
      auto g_map = det.backbone.trunk.backward(tape_map, d_map, trunk_opt);
      for (auto& [name, t] : g_img.param_grads.entries) {
        Tensor g = std::move(t);
        g.array() += g_map.param_grads.at(name).array();
        grads.add("trunk." + name, std::move(g));
      }
    }

    adam_step(params, grads, state, adam);
    unpack(params);
  }
  report.final_train_loss = report.loss_history.empty() ? 0.0f : report.loss_history.back();
  return report;
}

std::vector<float> adv_scores(const AdvDetector& det, const PairedBatch& data) {
  const int n = static_cast<int>(data.images.size());
  std::vector<float> scores(static_cast<std::size_t>(n));
  const int chunk = 64;
  for (int lo = 0; lo < n; lo += chunk) {
    int hi = std::min(n, lo + chunk);
    std::vector<int> idx;
    for (int i = lo; i < hi; ++i) idx.push_back(i);
    Tensor e_img = det.backbone.trunk.forward(make_batch(data.images, idx));
    Tensor e_map = det.backbone.trunk.forward(make_batch(data.maps, idx));
    Tensor logits = det.head.forward(concat_rows(e_img, e_map));
    for (int i = 0; i < hi - lo; ++i) {
      Tensor row({2});
      row[0] = logits.at({i, 0});
      row[1] = logits.at({i, 1});
      scores[static_cast<std::size_t>(lo + i)] = attacked_probability(row);
    }
  }
  return scores;
}

float adv_accuracy(const AdvDetector& det, const PairedBatch& data, float tau) {
  if (data.images.empty()) throw std::invalid_argument("accuracy over an empty paired set");
  std::vector<float> scores = adv_scores(det, data);
  int correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (decide_attacked(scores[i], tau) == data.labels[i]) ++correct;
  return static_cast<float>(correct) / static_cast<float>(data.images.size());
}

}  // namespace xaidet::models
