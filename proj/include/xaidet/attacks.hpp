#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xaidet/models.hpp"
#include "xaidet/net.hpp"

namespace xaidet::attacks {

/// Eq-style margin of the real logit over the fake logit, floored at zero.
/// Pure and wait-free; zero iff Z_real <= Z_fake.
inline float margin_loss(const Tensor& logits2) {
  return std::max(logits2[kReal] - logits2[kFake], 0.0f);
}

enum class AttackKind { kFgsm, kPgd, kApgd, kNes, kSquare, kAdaptiveStd, kAdaptiveXai };

const char* to_string(AttackKind k);
std::optional<AttackKind> attack_from_string(std::string_view s);

struct AttackConfig;

/// Per-attack hyperparameter defaults (iteration counts, restarts, step
/// sizes, query budgets) on top of the shared epsilon.
AttackConfig default_config(AttackKind k);

struct AttackConfig {
  float epsilon = 16.0f / 255.0f;  // L-inf radius
  float alpha = 0.0f;              // step size; 0 picks the per-attack default
  int max_iters = 100;
  int restarts = 5;
  std::uint64_t query_budget = 20000;  // black-box attacks
  int nes_samples = 32;                // antithetic population size (even)
  float nes_sigma = 1.0f / 255.0f;
  float p_init = 0.8f;      // square attack: initial square-area fraction
  float confidence = 0.05f;  // extra logit margin required before early exit
  std::uint64_t seed = 0;
  int target = kReal;  // attacks push the detector toward this class
};

struct AttackResult {
  Tensor x_adv;
  Tensor delta;      // x_adv - x
  bool success = false;
  int iterations = 0;
  std::uint64_t queries = 0;  // black-box only; 0 for white-box attacks
  float final_loss = 0.0f;    // attack objective at x_adv
};

// White-box attacks against a deepfake detector.
AttackResult fgsm(const Network& net, const Tensor& x, const AttackConfig& cfg);
AttackResult pgd(const Network& net, const Tensor& x, const AttackConfig& cfg);
AttackResult apgd(const Network& net, const Tensor& x, const AttackConfig& cfg);

// Generic objective-driven cores, reused by the adaptive attacks and by the
// synthetic-objective tests. The objective returns a loss and writes its
// gradient; lower is better and <= 0 means "done".
struct Objective {
  std::function<float(const Tensor& x, Tensor* grad)> loss_and_grad;
  std::function<bool(const Tensor& x)> success;  // may be empty
  // Early-exit predicate evaluated at each iterate; defaults to loss <= 0.
  std::function<bool(const Tensor& x, float loss)> exit_early;
};

AttackResult pgd_on(const Objective& obj, const Tensor& x, const AttackConfig& cfg);
AttackResult apgd_on(const Objective& obj, const Tensor& x, const AttackConfig& cfg);

// Black-box surface: attacks see only a scalar query function. The loss is
// the unfloored margin toward the target (negative once the label flipped),
// so success is readable from the query value itself.
using QueryFn = std::function<float(const Tensor&)>;
using BatchQueryFn = std::function<std::vector<float>(const std::vector<Tensor>&)>;

struct QueryOracle {
  QueryFn loss;
  BatchQueryFn loss_batch;  // optional; falls back to loss when empty
};

QueryOracle make_query_oracle(const Network& net, int target_class);

/// Antithetic NES gradient estimate of the query loss at x.
Tensor nes_gradient(const QueryOracle& oracle, const Tensor& x, int n_samples, float sigma,
                    std::uint64_t seed, std::uint64_t* queries_used = nullptr);

AttackResult nes_attack(const QueryOracle& oracle, const Tensor& x, const AttackConfig& cfg);
AttackResult square_attack(const QueryOracle& oracle, const Tensor& x, const AttackConfig& cfg);

// Adaptive attacks (aware of the adversarial detector).
struct AdaptiveTargets {
  const Network* deepfake_net = nullptr;
  const models::AdvDetector* adv_detector = nullptr;
  XaiMethod xai_method = XaiMethod::kSaliency;  // map fed to the detector
};

AttackResult adaptive_standard_attack(const AdaptiveTargets& t, const Tensor& x,
                                      const AttackConfig& cfg);
AttackResult adaptive_xai_attack(const Network& net, XaiMethod method, const Tensor& x,
                                 const AttackConfig& cfg);

/// One CSV/JSON record per attacked image.
struct AttackRecord {
  std::string attack;
  std::uint64_t seed = 0;
  float epsilon = 0.0f;
  int iterations = 0;
  std::uint64_t queries = 0;
  bool success = false;
  float final_loss = 0.0f;
};

std::string attack_records_csv(const std::vector<AttackRecord>& records);

}  // namespace xaidet::attacks
