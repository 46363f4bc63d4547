#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xaidet/data.hpp"
#include "xaidet/models.hpp"
#include "xaidet/net.hpp"

namespace xaidet::pipeline {

/// The staged classifier: crop, deepfake verdict, and (only for frames the
/// deepfake detector calls real) an attribution map plus the adversarial
/// detector. The deepfake stage is never affected by the adversarial stage.
struct Cascade {
  const Network* deepfake = nullptr;
  const models::AdvDetector* adv = nullptr;
  XaiMethod method = XaiMethod::kSaliency;
  int ig_steps = 64;
  float tau = 0.5f;
  bool black_maps = false;            // ablation: feed all-zero maps
  std::uint64_t* adv_calls = nullptr; // optional invocation counter
};

struct FrameVerdict {
  int deepfake_label = kReal;
  bool has_attack_label = false;
  int attack_label = kUnattacked;
  float attacked_score = 0.0f;
};

FrameVerdict classify_frame(const Cascade& cascade, const Tensor& frame);

/// Majority vote per video: fake iff strictly more than half the frames are
/// fake; ties go to real.
double vid_metric(const std::vector<std::vector<int>>& per_video_labels,
                  const std::vector<int>& truth);

/// Frame-level accuracy.
double f2f_metric(const std::vector<int>& labels, const std::vector<int>& truth);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // sorted by descending threshold
  double auc = 0.0;
  bool auc_defined = false;
};

/// Threshold sweep over the distinct scores plus sentinels (and always 0.5);
/// positive = attacked, predicted positive iff score > threshold.
RocCurve roc_curve(const std::vector<float>& scores, const std::vector<int>& labels);

/// Accuracy at a threshold from scores alone, with the same decision rule as
/// the adversarial-detector evaluation.
double roc_accuracy_at(const std::vector<float>& scores, const std::vector<int>& labels,
                       float tau);

std::string roc_csv(const RocCurve& curve);

struct AttackEval {
  std::string attack;
  int n_pairs = 0;
  int n_attacked = 0;
  double accuracy = 0.0;
  double auc = 0.0;
  bool auc_defined = false;
  RocCurve roc;
  double black_accuracy = -1.0;  // filled when the ablation was evaluated
  double delta_vs_black = 0.0;
};

struct EvalReport {
  std::string arch;
  std::string xai_method;
  std::string regime;
  std::string tag;  // e.g. "A->B" for transfer runs
  float tau = 0.5f;
  std::vector<AttackEval> attacks;
  double mean_accuracy = 0.0;  // over attacks, matching the tables' averages
  std::uint64_t corpus_checksum = 0;
  std::uint64_t model_checksum = 0;
  std::string config_hash;
};

/// Per-attack accuracy/ROC of the adversarial detector at threshold tau.
/// black_maps swaps every map for a zero tensor at evaluation time only.
EvalReport evaluate_adv_detector(const models::AdvDetector& det,
                                 const std::map<std::string, data::PairedSet>& sets_per_attack,
                                 float tau = 0.5f, bool black_maps = false);

/// Copies the black-run accuracies into `with_xai` and fills the deltas.
void merge_black_ablation(EvalReport& with_xai, const EvalReport& black);

/// Same evaluation, tagged source->target (pairs built against the other
/// backbone).
EvalReport transfer_eval(const models::AdvDetector& det_trained_on_src,
                         const std::map<std::string, data::PairedSet>& sets_from_target,
                         const std::string& tag, float tau = 0.5f);

struct BenchRow {
  std::string variant;  // "baseline", "saliency", "ixg", "ig", "gbp"
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double overhead_pct = 0.0;  // vs baseline mean
};

struct BenchReport {
  std::vector<BenchRow> rows;
  int n_frames = 0;
  int repeats = 0;
  bool timer_coarse = false;  // timer resolution worse than 1 ms
};

/// Wall-clock cost of the real-branch cascade (crop, deepfake forward, map,
/// adversarial detector) per frame, for the baseline (zero map, no
/// attribution computed) and each XAI method. Runs sequentially.
BenchReport overhead_benchmark(const Cascade& cascade, const std::vector<Tensor>& frames,
                               int n_frames, int repeats);

std::string eval_report_json(const EvalReport& report);
std::string eval_report_csv(const EvalReport& report);
std::string bench_csv(const BenchReport& report);

}  // namespace xaidet::pipeline
