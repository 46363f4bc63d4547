#include "xaidet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "xaidet/rng.hpp"
#include "xaidet/xai.hpp"

namespace xaidet::attacks {

const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kApgd: return "apgd";
    case AttackKind::kNes: return "nes";
    case AttackKind::kSquare: return "square";
    case AttackKind::kAdaptiveStd: return "adaptive_std";
    case AttackKind::kAdaptiveXai: return "adaptive_xai";
  }
  return "?";
}

std::optional<AttackKind> attack_from_string(std::string_view s) {
  if (s == "fgsm") return AttackKind::kFgsm;
  if (s == "pgd") return AttackKind::kPgd;
  if (s == "apgd") return AttackKind::kApgd;
  if (s == "nes") return AttackKind::kNes;
  if (s == "square") return AttackKind::kSquare;
  if (s == "adaptive_std") return AttackKind::kAdaptiveStd;
  if (s == "adaptive_xai") return AttackKind::kAdaptiveXai;
  return std::nullopt;
}

AttackConfig default_config(AttackKind k) {
  AttackConfig c;
  switch (k) {
    case AttackKind::kFgsm:
      c.max_iters = 1;
      c.restarts = 1;
      break;
    case AttackKind::kPgd:
      c.max_iters = 100;
      c.restarts = 1;
      break;
    case AttackKind::kApgd:
      c.max_iters = 100;
      c.restarts = 5;
      break;
    case AttackKind::kNes:
      c.max_iters = 100;
      c.restarts = 5;
      c.alpha = 1.0f / 255.0f;
      c.query_budget = 20000;
      break;
    case AttackKind::kSquare:
      c.max_iters = 5000;
      c.restarts = 1;
      c.query_budget = 5001;
      break;
    case AttackKind::kAdaptiveStd:
    case AttackKind::kAdaptiveXai:
      c.max_iters = 100;
      c.restarts = 1;
      break;
  }
  return c;
}

namespace {

// Raw margin of the runner-up over the target class; negative once the
// target class wins.
float raw_margin(const Network& net, const Tensor& x, int target) {
  Tensor z = net.forward_single(x);
  return z[1 - target] - z[target];
}

void check_result(const Tensor& x_adv, const Tensor& x, float eps) {
  if (linf_dist(x_adv, x) > eps + 1e-6f)
    throw std::logic_error("attack left the epsilon ball");
  if (x_adv.array().minCoeff() < 0.0f || x_adv.array().maxCoeff() > 1.0f)
    throw std::logic_error("attack left the [0,1] box");
}

AttackResult finish(Tensor x_adv, const Tensor& x, const AttackConfig& cfg, bool success,
                    int iterations, std::uint64_t queries, float final_loss) {
  check_result(x_adv, x, cfg.epsilon);
  AttackResult r;
  r.delta = x_adv - x;
  r.x_adv = std::move(x_adv);
  r.success = success;
  r.iterations = iterations;
  r.queries = queries;
  r.final_loss = final_loss;
  return r;
}

Tensor random_ball_start(const Tensor& x, float eps, Rng& rng) {
  Tensor out(x.shape());
  for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = x[i] + rng.uniform(-eps, eps);
  return clamp01(project_linf(out, x, eps));
}

Objective margin_objective(const Network& net, const AttackConfig& cfg) {
  Objective obj;
  LossSpec spec = LossSpec::margin_toward(cfg.target, cfg.confidence);
  obj.loss_and_grad = [&net, spec](const Tensor& x, Tensor* grad) {
    if (!grad) {
      Tensor z = net.forward_single(x);
      return std::max(z[1 - spec.target] - z[spec.target] + spec.margin_offset, 0.0f);
    }
    auto r = input_gradient(net, x, spec);
    *grad = std::move(r.grad);
    return r.loss;
  };
  int target = cfg.target;
  obj.success = [&net, target](const Tensor& x) { return raw_margin(net, x, target) < 0.0f; };
  return obj;
}

}  // namespace

// ---------------------------------------------------------------------------
// White-box attacks
// ---------------------------------------------------------------------------

AttackResult fgsm(const Network& net, const Tensor& x, const AttackConfig& cfg) {
  Objective obj = margin_objective(net, cfg);
  Tensor grad;
  obj.loss_and_grad(x, &grad);  // the single gradient evaluation
  Tensor x_adv = clamp01(x - cfg.epsilon * sign(grad));
  float m = raw_margin(net, x_adv, cfg.target);
  return finish(std::move(x_adv), x, cfg, m < 0.0f, 1, 0, std::max(m, 0.0f));
}

AttackResult pgd_on(const Objective& obj, const Tensor& x, const AttackConfig& cfg) {
  const float alpha = cfg.alpha > 0.0f ? cfg.alpha : cfg.epsilon / 4.0f;

  if (obj.success && obj.success(x)) {
    float l0 = obj.loss_and_grad(x, nullptr);
    return finish(x, x, cfg, true, 0, 0, l0);
  }

  Tensor cur = x;
  Tensor best;
  float best_loss = std::numeric_limits<float>::infinity();
  int it = 0;
  for (; it < cfg.max_iters; ++it) {
    Tensor grad;
    float loss = obj.loss_and_grad(cur, &grad);
    if (it > 0 && loss < best_loss) {
      best_loss = loss;
      best = cur;
    }
    bool done = obj.exit_early ? obj.exit_early(cur, loss) : loss <= 0.0f;
    if (it > 0 && done) break;
    cur = clamp01(project_linf(cur - alpha * sign(grad), x, cfg.epsilon));
  }
  float loss = obj.loss_and_grad(cur, nullptr);
  if (loss < best_loss || best.empty()) {
    best_loss = loss;
    best = cur;
  }
  bool success = obj.success ? obj.success(best) : best_loss <= 0.0f;
  return finish(std::move(best), x, cfg, success, it, 0, best_loss);
}

AttackResult pgd(const Network& net, const Tensor& x, const AttackConfig& cfg) {
  return pgd_on(margin_objective(net, cfg), x, cfg);
}

// ---------------------------------------------------------------------------
// APGD: momentum steps, checkpointed step halving, restart from best.
// ---------------------------------------------------------------------------

namespace {

std::vector<int> apgd_checkpoints(int n_iters) {
  std::vector<int> w;
  double p_prev = 0.0, p = 0.22;
  while (true) {
    int wj = static_cast<int>(std::ceil(p * n_iters));
    if (wj >= n_iters) break;
    if (w.empty() || wj > w.back()) w.push_back(wj);
    double p_next = p + std::max(p - p_prev - 0.03, 0.06);
    p_prev = p;
    p = p_next;
  }
  return w;
}

}  // namespace

AttackResult apgd_on(const Objective& obj, const Tensor& x, const AttackConfig& cfg) {
  if (cfg.restarts < 1) throw std::invalid_argument("apgd needs restarts >= 1");

  if (obj.success && obj.success(x)) {
    float l0 = obj.loss_and_grad(x, nullptr);
    return finish(x, x, cfg, true, 0, 0, l0);
  }

  const int n_iters = std::max(cfg.max_iters, 1);
  const std::vector<int> checkpoints = apgd_checkpoints(n_iters);
  const float momentum = 0.75f;

  Tensor global_best = x;
  float global_best_loss = obj.loss_and_grad(x, nullptr);
  int total_evals = 0;
  bool stopped = false;

  for (int r = 0; r < cfg.restarts && !stopped; ++r) {
    Rng rng(fork_seed(cfg.seed, "apgd-restart", static_cast<std::uint64_t>(r)));
    Tensor cur = random_ball_start(x, cfg.epsilon, rng);
    float eta = 2.0f * cfg.epsilon;

    Tensor grad;
    float f_cur = obj.loss_and_grad(cur, &grad);
    ++total_evals;
    Tensor best = cur;
    float f_best = f_cur;
    Tensor prev = cur;

    std::size_t next_cp = 0;
    int improving = 0;
    int last_cp = 0;
    float f_best_at_last_cp = f_best;
    float eta_at_last_cp = eta;

    auto exit_now = [&](const Tensor& p, float l) {
      return obj.exit_early ? obj.exit_early(p, l) : l <= 0.0f;
    };
    if (exit_now(cur, f_cur)) {
      global_best = cur;
      global_best_loss = f_cur;
      stopped = true;
      break;
    }

    for (int k = 1; k <= n_iters; ++k) {
      Tensor z = clamp01(project_linf(cur - eta * sign(grad), x, cfg.epsilon));
      Tensor next;
      if (k == 1) {
        next = z;
      } else {
        Tensor step(z.shape());
        step.array() = cur.array() + momentum * (z.array() - cur.array()) +
                       (1.0f - momentum) * (cur.array() - prev.array());
        next = clamp01(project_linf(step, x, cfg.epsilon));
      }
      prev = cur;
      cur = std::move(next);
      float f_next = obj.loss_and_grad(cur, &grad);
      ++total_evals;
      if (f_next < f_cur) ++improving;
      f_cur = f_next;
      if (f_cur < f_best) {
        f_best = f_cur;
        best = cur;
      }
      if (exit_now(cur, f_cur)) {
        stopped = true;
        break;
      }

      if (next_cp < checkpoints.size() && k == checkpoints[next_cp]) {
        const int window = k - last_cp;
        bool cond1 = improving < static_cast<int>(std::ceil(0.75 * window));
        bool cond2 = eta == eta_at_last_cp && f_best == f_best_at_last_cp;
        if (cond1 || cond2) {
          eta *= 0.5f;
          cur = best;
          prev = best;
          f_cur = f_best;
        }
        eta_at_last_cp = eta;
        f_best_at_last_cp = f_best;
        improving = 0;
        last_cp = k;
        ++next_cp;
      }
    }
    if (f_best < global_best_loss) {
      global_best_loss = f_best;
      global_best = best;
    }
  }

  bool success = obj.success ? obj.success(global_best) : global_best_loss <= 0.0f;
  return finish(std::move(global_best), x, cfg, success, total_evals, 0, global_best_loss);
}

AttackResult apgd(const Network& net, const Tensor& x, const AttackConfig& cfg) {
  return apgd_on(margin_objective(net, cfg), x, cfg);
}

// ---------------------------------------------------------------------------
// Black-box attacks
// ---------------------------------------------------------------------------

QueryOracle make_query_oracle(const Network& net, int target_class) {
  QueryOracle o;
  o.loss = [&net, target_class](const Tensor& x) {
    Tensor z = net.forward_single(x);
    return z[1 - target_class] - z[target_class];
  };
  o.loss_batch = [&net, target_class](const std::vector<Tensor>& xs) {
    Tensor logits = net.forward(make_batch(xs));
    std::vector<float> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
      out[i] = logits.at({static_cast<int>(i), 1 - target_class}) -
               logits.at({static_cast<int>(i), target_class});
    return out;
  };
  return o;
}

Tensor nes_gradient(const QueryOracle& oracle, const Tensor& x, int n_samples, float sigma,
                    std::uint64_t seed, std::uint64_t* queries_used) {
  if (n_samples <= 0 || n_samples % 2 != 0)
    throw std::invalid_argument("nes_gradient needs a positive even sample count");
  if (sigma <= 0.0f) throw std::invalid_argument("nes_gradient needs sigma > 0");

  Rng rng(seed);
  const int pairs = n_samples / 2;
  std::vector<Tensor> dirs;
  dirs.reserve(static_cast<std::size_t>(pairs));
  std::vector<Tensor> probes;
  probes.reserve(static_cast<std::size_t>(n_samples));
  for (int k = 0; k < pairs; ++k) {
    Tensor u(x.shape());
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = rng.normal();
    Tensor plus = x;
    plus.array() += sigma * u.array();
    Tensor minus = x;
    minus.array() -= sigma * u.array();
    probes.push_back(std::move(plus));
    probes.push_back(std::move(minus));
    dirs.push_back(std::move(u));
  }

  std::vector<float> losses;
  if (oracle.loss_batch) {
    losses = oracle.loss_batch(probes);
  } else {
    losses.reserve(probes.size());
    for (const Tensor& p : probes) losses.push_back(oracle.loss(p));
  }
  if (queries_used) *queries_used += static_cast<std::uint64_t>(n_samples);

  Tensor g = Tensor::zeros(x.shape());
  for (int k = 0; k < pairs; ++k) {
    float w = losses[static_cast<std::size_t>(2 * k)] - losses[static_cast<std::size_t>(2 * k + 1)];
    g.array() += w * dirs[static_cast<std::size_t>(k)].array();
  }
  g.array() /= (static_cast<float>(n_samples) * sigma);
  return g;
}

AttackResult nes_attack(const QueryOracle& oracle, const Tensor& x, const AttackConfig& cfg) {
  const float alpha = cfg.alpha > 0.0f ? cfg.alpha : 1.0f / 255.0f;
  const std::uint64_t budget = cfg.query_budget;
  std::uint64_t queries = 0;

  Tensor best = x;
  float best_loss = std::numeric_limits<float>::infinity();
  bool evaluated_any = false;
  int iterations = 0;

  if (budget >= 1) {
    best_loss = oracle.loss(x);
    ++queries;
    evaluated_any = true;
  }

  bool done = evaluated_any && best_loss <= -cfg.confidence;
  for (int r = 0; r < cfg.restarts && !done; ++r) {
    Rng rng(fork_seed(cfg.seed, "nes-restart", static_cast<std::uint64_t>(r)));
    Tensor cur = (r == 0) ? x : random_ball_start(x, cfg.epsilon, rng);
    for (int it = 0; it < cfg.max_iters; ++it) {
      if (queries + static_cast<std::uint64_t>(cfg.nes_samples) + 1 > budget) {
        done = true;  // budget exhausted; keep best found
        break;
      }
      Tensor g = nes_gradient(oracle, cur, cfg.nes_samples, cfg.nes_sigma,
                              fork_seed(cfg.seed, "nes-grad", queries), &queries);
      cur = clamp01(project_linf(cur - alpha * sign(g), x, cfg.epsilon));
      float l = oracle.loss(cur);
      ++queries;
      ++iterations;
      if (l < best_loss) {
        best_loss = l;
        best = cur;
      }
      if (l <= -cfg.confidence) {
        done = true;
        break;
      }
    }
  }

  bool success = evaluated_any && best_loss < 0.0f;
  return finish(std::move(best), x, cfg, success, iterations, queries,
                evaluated_any ? std::max(best_loss, 0.0f) : 0.0f);
}

namespace {

// Published square-size schedule, rescaled to the iteration budget.
float square_p_fraction(float p_init, int it, int n_iters) {
  int t = static_cast<int>(static_cast<double>(it) / n_iters * 10000.0);
  if (t > 10 && t <= 50) return p_init / 2;
  if (t > 50 && t <= 200) return p_init / 4;
  if (t > 200 && t <= 500) return p_init / 8;
  if (t > 500 && t <= 1000) return p_init / 16;
  if (t > 1000 && t <= 2000) return p_init / 32;
  if (t > 2000 && t <= 4000) return p_init / 64;
  if (t > 4000 && t <= 6000) return p_init / 128;
  if (t > 6000 && t <= 8000) return p_init / 256;
  if (t > 8000) return p_init / 512;
  return p_init;
}

}  // namespace

AttackResult square_attack(const QueryOracle& oracle, const Tensor& x, const AttackConfig& cfg) {
  if (x.rank() != 3) throw std::invalid_argument("square_attack expects a CHW image");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const float eps = cfg.epsilon;
  Rng rng(fork_seed(cfg.seed, "square"));
  std::uint64_t queries = 0;

  // Vertical-stripe initialization: one random sign per (channel, column).
  Tensor delta({C, H, W});
  for (int c = 0; c < C; ++c)
    for (int w = 0; w < W; ++w) {
      float s = rng.coin() ? eps : -eps;
      for (int h = 0; h < H; ++h) delta.at({c, h, w}) = s;
    }
  Tensor cur = clamp01(x + delta);
  float l_cur = oracle.loss(cur);
  ++queries;
  int iterations = 0;

  if (l_cur > -cfg.confidence) {
    for (int it = 1; it < cfg.max_iters && queries < cfg.query_budget; ++it) {
      float p = square_p_fraction(cfg.p_init, it, cfg.max_iters);
      int side = static_cast<int>(std::lround(std::sqrt(p * H * W)));
      side = std::clamp(side, 1, std::min(H, W));
      int y0 = rng.range(0, H - side);
      int x0 = rng.range(0, W - side);

      Tensor cand_delta = cur - x;
      for (int c = 0; c < C; ++c) {
        float s = rng.coin() ? eps : -eps;
        for (int dy = 0; dy < side; ++dy)
          for (int dx = 0; dx < side; ++dx) cand_delta.at({c, y0 + dy, x0 + dx}) = s;
      }
      Tensor cand = clamp01(x + cand_delta);
      float l_cand = oracle.loss(cand);
      ++queries;
      ++iterations;
      if (l_cand < l_cur) {
        l_cur = l_cand;
        cur = std::move(cand);
      }
      if (l_cur <= -cfg.confidence) break;
    }
  }

  return finish(std::move(cur), x, cfg, l_cur < 0.0f, iterations, queries,
                std::max(l_cur, 0.0f));
}

// ---------------------------------------------------------------------------
// Adaptive attacks
// ---------------------------------------------------------------------------

AttackResult adaptive_standard_attack(const AdaptiveTargets& t, const Tensor& x,
                                      const AttackConfig& cfg) {
  if (!t.deepfake_net || !t.adv_detector)
    throw std::invalid_argument("adaptive attack needs both detectors");
  const Network& f = *t.deepfake_net;
  const models::AdvDetector& d = *t.adv_detector;
  const XaiMethod method = t.xai_method;

  LossSpec bce_real = LossSpec::bce_toward(kReal);

  auto detector_pass = [&](const Tensor& xi, Tensor* grad, float* adv_margin) {
    // BCE(d(x, map(x)), unattacked) with gradient through the image branch;
    // the recomputed attribution enters as data (its dependence on x is
    // piecewise constant for gradient maps).
    Tensor map = xai::normalize_map(xai::compute_map(f, xi, method, kReal));
    Tensor e_img_b({1, xi.dim(0), xi.dim(1), xi.dim(2)});
    e_img_b.array() = xi.array();
    Tensor e_map_b = e_img_b;
    e_map_b.array() = map.array();
    ForwardTape tape_img = d.backbone.trunk.forward_tape(e_img_b);
    ForwardTape tape_map = d.backbone.trunk.forward_tape(e_map_b);
    const int dm = d.backbone.dim;
    Tensor joint({1, 2 * dm});
    std::memcpy(joint.data(), tape_img.logits.data(), sizeof(float) * static_cast<std::size_t>(dm));
    std::memcpy(joint.data() + dm, tape_map.logits.data(),
                sizeof(float) * static_cast<std::size_t>(dm));
    ForwardTape tape_head = d.head.forward_tape(joint);
    if (adv_margin)
      *adv_margin = tape_head.logits.at({0, kAttacked}) - tape_head.logits.at({0, kUnattacked});

    LossSpec bce_unatt = LossSpec::bce_toward(kUnattacked);
    LossOut lo = eval_loss(bce_unatt, tape_head.logits, {});
    if (grad) {
      Network::BackwardOptions head_opt;
      head_opt.want_input_grad = true;
      auto hb = d.head.backward(tape_head, lo.dlogits, head_opt);
      Tensor d_img({1, dm});
      std::memcpy(d_img.data(), hb.input_grad.data(), sizeof(float) * static_cast<std::size_t>(dm));
      Network::BackwardOptions trunk_opt;
      trunk_opt.want_input_grad = true;
      auto tb = d.backbone.trunk.backward(tape_img, d_img, trunk_opt);
      grad->array() += Eigen::Map<const Eigen::ArrayXf>(tb.input_grad.data(), xi.size());
    }
    return lo.value;
  };

  Objective obj;
  obj.loss_and_grad = [&, detector_pass](const Tensor& xi, Tensor* grad) {
    float total;
    if (grad) {
      auto r1 = input_gradient(f, xi, bce_real);
      *grad = std::move(r1.grad);
      total = r1.loss + detector_pass(xi, grad, nullptr);
    } else {
      Tensor z = f.forward_single(xi);
      LossOut lo = eval_loss(bce_real, as_row(z), {});
      total = lo.value + detector_pass(xi, nullptr, nullptr);
    }
    return total;
  };
  obj.success = [&](const Tensor& xi) {
    if (raw_margin(f, xi, kReal) >= 0.0f) return false;
    float adv_margin;
    detector_pass(xi, nullptr, &adv_margin);
    return adv_margin < 0.0f;  // d says unattacked
  };
  obj.exit_early = [&, detector_pass](const Tensor& xi, float) {
    if (raw_margin(f, xi, kReal) >= -cfg.confidence) return false;
    float adv_margin;
    detector_pass(xi, nullptr, &adv_margin);
    return adv_margin <= -cfg.confidence;
  };
  return pgd_on(obj, x, cfg);
}

AttackResult adaptive_xai_attack(const Network& net, XaiMethod method, const Tensor& x,
                                 const AttackConfig& cfg) {
  if (method == XaiMethod::kIntegratedGradients || method == XaiMethod::kGuidedBackprop)
    throw std::invalid_argument(
        std::string("adaptive_xai_attack cannot differentiate through ") + to_string(method) +
        " maps; use saliency or ixg");

  // Reference map at the clean input, held fixed across iterations.
  Tensor ref = xai::compute_map(net, x, method, kReal);
  LossSpec bce_real = LossSpec::bce_toward(kReal);
  LossSpec dist = LossSpec::xai_distance(method, kReal, ref);

  Objective obj;
  obj.loss_and_grad = [&net, bce_real, dist](const Tensor& xi, Tensor* grad) {
    auto r_dist = input_gradient(net, xi, dist);
    if (grad) {
      auto r_bce = input_gradient(net, xi, bce_real);
      *grad = r_bce.grad + r_dist.grad;
      return r_bce.loss + r_dist.loss;
    }
    Tensor z = net.forward_single(xi);
    LossOut lo = eval_loss(bce_real, as_row(z), {});
    return lo.value + r_dist.loss;
  };
  obj.success = [&net](const Tensor& xi) { return raw_margin(net, xi, kReal) < 0.0f; };
  obj.exit_early = [&net, &cfg](const Tensor& xi, float) {
    return raw_margin(net, xi, kReal) <= -cfg.confidence;
  };
  return pgd_on(obj, x, cfg);
}

std::string attack_records_csv(const std::vector<AttackRecord>& records) {
  std::string out = "attack,seed,epsilon,iterations,queries,success,final_loss\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%llu,%.9g,%d,%llu,%d,%.9g\n", r.attack.c_str(),
                  static_cast<unsigned long long>(r.seed), static_cast<double>(r.epsilon),
                  r.iterations, static_cast<unsigned long long>(r.queries), r.success ? 1 : 0,
                  static_cast<double>(r.final_loss));
    out += buf;
  }
  return out;
}

}  // namespace xaidet::attacks
