#include "xaidet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xaidet/xai.hpp"

namespace xaidet::pipeline {

using nlohmann::json;

FrameVerdict classify_frame(const Cascade& cascade, const Tensor& frame) {
  if (!cascade.deepfake) throw std::invalid_argument("cascade has no deepfake detector");
  FrameVerdict v;
  Tensor crop = data::face_crop(frame);
  Tensor z = cascade.deepfake->forward_single(crop);
  v.deepfake_label = z[kFake] > z[kReal] ? kFake : kReal;
  if (v.deepfake_label == kFake) return v;  // fake verdicts stop here

  if (!cascade.adv) return v;
  Tensor map = cascade.black_maps
                   ? xai::black_map(crop.shape())
                   : xai::normalize_map(xai::compute_map(*cascade.deepfake, crop, cascade.method,
                                                          v.deepfake_label, cascade.ig_steps));
  if (cascade.adv_calls) ++*cascade.adv_calls;
  models::AdvVerdict av = models::adv_detect(*cascade.adv, crop, map, cascade.tau);
  v.has_attack_label = true;
  v.attack_label = av.label;
  v.attacked_score = av.attacked_score;
  return v;
}

double vid_metric(const std::vector<std::vector<int>>& per_video_labels,
                  const std::vector<int>& truth) {
  if (per_video_labels.empty() || per_video_labels.size() != truth.size())
    throw std::invalid_argument("vid_metric: empty input or length mismatch");
  int correct = 0;
  for (std::size_t v = 0; v < per_video_labels.size(); ++v) {
    const auto& labels = per_video_labels[v];
    if (labels.empty()) throw std::invalid_argument("vid_metric: empty clip");
    int fakes = 0;
    for (int l : labels) fakes += (l == kFake);
    int video_label = (2 * fakes > static_cast<int>(labels.size())) ? kFake : kReal;
    if (video_label == truth[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double f2f_metric(const std::vector<int>& labels, const std::vector<int>& truth) {
  if (labels.empty() || labels.size() != truth.size())
    throw std::invalid_argument("f2f_metric: empty input or length mismatch");
  int correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += (labels[i] == truth[i]);
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

// ---------------------------------------------------------------------------
// ROC
// ---------------------------------------------------------------------------

RocCurve roc_curve(const std::vector<float>& scores, const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw std::invalid_argument("roc_curve: empty input or length mismatch");
  int pos = 0, neg = 0;
  for (int l : labels) (l == kAttacked ? pos : neg) += 1;

  std::set<double, std::greater<double>> thresholds;
  thresholds.insert(2.0);  // above every score: predicts nothing attacked
  thresholds.insert(0.5);  // the headline operating point
  thresholds.insert(-1.0); // below every score: predicts everything attacked
  for (float s : scores) thresholds.insert(static_cast<double>(s));

  RocCurve out;
  for (double thr : thresholds) {
    int tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      bool predicted = static_cast<double>(scores[i]) > thr;
      if (predicted) (labels[i] == kAttacked ? tp : fp) += 1;
    }
    RocPoint p;
    p.threshold = thr;
    p.tpr = pos ? static_cast<double>(tp) / pos : 0.0;
    p.fpr = neg ? static_cast<double>(fp) / neg : 0.0;
    out.points.push_back(p);
  }

  out.auc_defined = pos > 0 && neg > 0;
  if (out.auc_defined) {
    double auc = 0.0;
    for (std::size_t i = 1; i < out.points.size(); ++i) {
      const auto& a = out.points[i - 1];
      const auto& b = out.points[i];
      auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    out.auc = auc;
  }
  return out;
}

double roc_accuracy_at(const std::vector<float>& scores, const std::vector<int>& labels,
                       float tau) {
  if (scores.empty() || scores.size() != labels.size())
    throw std::invalid_argument("roc_accuracy_at: empty input or length mismatch");
  int correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (models::decide_attacked(scores[i], tau) == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : curve.points) {
    std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g\n", p.threshold, p.fpr, p.tpr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adversarial-detector evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate_adv_detector(const models::AdvDetector& det,
                                 const std::map<std::string, data::PairedSet>& sets_per_attack,
                                 float tau, bool black_maps) {
  if (sets_per_attack.empty()) throw std::invalid_argument("no paired test sets supplied");
  EvalReport report;
  report.tau = tau;
  report.regime = models::to_string(det.regime);

  double acc_sum = 0.0;
  for (const auto& [attack, set] : sets_per_attack) {
    if (set.batch.images.empty())
      throw std::invalid_argument("paired test set for '" + attack + "' is empty");

    models::PairedBatch batch = set.batch;
    if (black_maps)
      for (auto& m : batch.maps) m = xai::black_map(m.shape());

    std::vector<float> scores = models::adv_scores(det, batch);
    AttackEval ev;
    ev.attack = attack;
    ev.n_pairs = static_cast<int>(batch.images.size());
    for (int l : batch.labels) ev.n_attacked += (l == kAttacked);
    ev.accuracy = roc_accuracy_at(scores, batch.labels, tau);
    ev.roc = roc_curve(scores, batch.labels);
    ev.auc = ev.roc.auc;
    ev.auc_defined = ev.roc.auc_defined;
    acc_sum += ev.accuracy;
    report.attacks.push_back(std::move(ev));
  }
  report.mean_accuracy = acc_sum / static_cast<double>(report.attacks.size());
  return report;
}

void merge_black_ablation(EvalReport& with_xai, const EvalReport& black) {
  for (auto& ev : with_xai.attacks) {
    for (const auto& bev : black.attacks) {
      if (bev.attack == ev.attack) {
        ev.black_accuracy = bev.accuracy;
        ev.delta_vs_black = ev.accuracy - bev.accuracy;
        break;
      }
    }
  }
}

EvalReport transfer_eval(const models::AdvDetector& det_trained_on_src,
                         const std::map<std::string, data::PairedSet>& sets_from_target,
                         const std::string& tag, float tau) {
  EvalReport report = evaluate_adv_detector(det_trained_on_src, sets_from_target, tau, false);
  report.tag = tag;
  return report;
}

// ---------------------------------------------------------------------------
// Overhead benchmark
// ---------------------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double timer_resolution_ms() {
  double best = 1e9;
  for (int i = 0; i < 64; ++i) {
    auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    double d = std::chrono::duration<double, std::milli>(b - a).count();
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

BenchReport overhead_benchmark(const Cascade& cascade, const std::vector<Tensor>& frames,
                               int n_frames, int repeats) {
  if (n_frames < 50) throw std::invalid_argument("overhead benchmark needs n_frames >= 50");
  if (repeats < 3) throw std::invalid_argument("overhead benchmark needs repeats >= 3");
  if (frames.empty()) throw std::invalid_argument("overhead benchmark needs frames");
  if (!cascade.deepfake || !cascade.adv)
    throw std::invalid_argument("overhead benchmark needs both detectors");

  BenchReport report;
  report.n_frames = n_frames;
  report.repeats = repeats;
  report.timer_coarse = timer_resolution_ms() > 1.0;

  struct Variant {
    std::string name;
    bool black;
    XaiMethod method;
  };
  std::vector<Variant> variants = {
      {"baseline", true, XaiMethod::kSaliency},
      {"saliency", false, XaiMethod::kSaliency},
      {"ixg", false, XaiMethod::kInputXGradient},
      {"ig", false, XaiMethod::kIntegratedGradients},
      {"gbp", false, XaiMethod::kGuidedBackprop},
  };

  // The measured unit is the real-branch cost: crop, deepfake forward,
  // map (or zero map), adversarial detector.
  auto run_once = [&](const Variant& v, const Tensor& frame) {
    Tensor crop = data::face_crop(frame);
    Tensor z = cascade.deepfake->forward_single(crop);
    Tensor map = v.black ? xai::black_map(crop.shape())
                         : xai::normalize_map(xai::compute_map(*cascade.deepfake, crop, v.method,
                                                               kReal, cascade.ig_steps));
    models::AdvVerdict av = models::adv_detect(*cascade.adv, crop, map, cascade.tau);
    return z[0] + av.logits[0];  // consumed so the work cannot be elided
  };

  double baseline_mean = 0.0;
  volatile float sink = 0.0f;
  for (const auto& v : variants) {
    // warm-up pass
    sink = sink + run_once(v, frames[0]);

    std::vector<double> per_frame_ms;
    for (int r = 0; r < repeats; ++r) {
      auto t0 = Clock::now();
      for (int i = 0; i < n_frames; ++i)
        sink = sink + run_once(v, frames[static_cast<std::size_t>(i) % frames.size()]);
      auto t1 = Clock::now();
      per_frame_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                             n_frames);
    }
    std::sort(per_frame_ms.begin(), per_frame_ms.end());
    BenchRow row;
    row.variant = v.name;
    row.min_ms = per_frame_ms.front();
    row.median_ms = per_frame_ms[per_frame_ms.size() / 2];
    row.mean_ms = std::accumulate(per_frame_ms.begin(), per_frame_ms.end(), 0.0) /
                  static_cast<double>(per_frame_ms.size());
    if (v.name == "baseline") {
      baseline_mean = row.mean_ms;
      row.overhead_pct = 0.0;
    } else {
      row.overhead_pct = 100.0 * (row.mean_ms - baseline_mean) / baseline_mean;
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

namespace {

json to_json(const EvalReport& r) {
  json j;
  j["arch"] = r.arch;
  j["xai_method"] = r.xai_method;
  j["regime"] = r.regime;
  j["tag"] = r.tag;
  j["tau"] = r.tau;
  j["mean_accuracy"] = r.mean_accuracy;
  j["corpus_checksum"] = r.corpus_checksum;
  j["model_checksum"] = r.model_checksum;
  j["config_hash"] = r.config_hash;
  j["attacks"] = json::array();
  for (const auto& ev : r.attacks) {
    json e;
    e["attack"] = ev.attack;
    e["n_pairs"] = ev.n_pairs;
    e["n_attacked"] = ev.n_attacked;
    e["accuracy"] = ev.accuracy;
    if (ev.auc_defined) e["auc"] = ev.auc;
    if (ev.black_accuracy >= 0.0) {
      e["black_accuracy"] = ev.black_accuracy;
      e["delta_vs_black"] = ev.delta_vs_black;
    }
    j["attacks"].push_back(e);
  }
  return j;
}

}  // namespace

std::string eval_report_json(const EvalReport& report) { return to_json(report).dump(2) + "\n"; }

std::string eval_report_csv(const EvalReport& report) {
  std::string out =
      "arch,xai_method,regime,tag,attack,n_pairs,accuracy,auc,black_accuracy,delta_vs_black\n";
  char buf[256];
  for (const auto& ev : report.attacks) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%d,%.9g,%.9g,%.9g,%.9g\n", report.arch.c_str(),
                  report.xai_method.c_str(), report.regime.c_str(), report.tag.c_str(),
                  ev.attack.c_str(), ev.n_pairs, ev.accuracy, ev.auc_defined ? ev.auc : -1.0,
                  ev.black_accuracy, ev.black_accuracy >= 0.0 ? ev.delta_vs_black : 0.0);
    out += buf;
  }
  return out;
}

std::string bench_csv(const BenchReport& report) {
  std::string out = "variant,mean_ms,median_ms,min_ms,overhead_pct\n";
  char buf[160];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.1f\n", row.variant.c_str(), row.mean_ms,
                  row.median_ms, row.min_ms, row.overhead_pct);
    out += buf;
  }
  return out;
}

}  // namespace xaidet::pipeline
