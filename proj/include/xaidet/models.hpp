#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xaidet/net.hpp"

namespace xaidet::models {

/// Architecture + parameters + provenance for one trained model.
struct ModelBundle {
  std::string arch;  // "arch-A" or "arch-B"
  std::uint64_t init_seed = 0;
  Network net;
};

/// Toy deepfake-detector architectures. They differ in depth, width and
/// kernel size; both map (3,32,32) to two logits {real, fake}.
Network make_arch(const std::string& name);
bool is_known_arch(const std::string& name);

/// Deterministic He-uniform initialization of a fresh architecture.
ModelBundle build(const std::string& arch, std::uint64_t seed);

struct TrainHyper {
  float lr = 1e-3f;
  int batch_size = 16;
  int iterations = 100;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float adam_eps = 1e-8f;
  std::uint64_t seed = 0;
};

struct LabeledFrames {
  std::vector<Tensor> images;  // CHW, values in [0,1]
  std::vector<int> labels;     // kReal / kFake or kUnattacked / kAttacked
};

struct TrainReport {
  std::vector<float> loss_history;  // one entry per step
  float final_train_loss = 0.0f;
  float holdout_accuracy = -1.0f;  // -1 when no holdout was supplied
  std::vector<std::string> warnings;
};

/// Cross-entropy training with Adam; mutates model.net in place.
TrainReport train_deepfake_detector(ModelBundle& model, const LabeledFrames& train,
                                    const LabeledFrames* holdout, const TrainHyper& hyper);

float classification_accuracy(const Network& net, const LabeledFrames& data);

// ---------------------------------------------------------------------------
// Backbone embedder and the adversarial-detector head.
// ---------------------------------------------------------------------------

struct BackboneEmbedder {
  Network trunk;  // the detector minus its final dense layer
  int dim = 0;

  Tensor embed(const Tensor& image) const;
};

/// The trained detector's trunk, reused as the feature extractor for both
/// the image and its attribution map.
BackboneEmbedder make_backbone(const ModelBundle& detector);

enum class Regime { kFullFinetune, kHeadOnly };

const char* to_string(Regime r);

struct AdvDetector {
  BackboneEmbedder backbone;
  Network head;  // dense(2D -> H) relu dense(H -> 2)
  Regime regime = Regime::kFullFinetune;
  static constexpr int kHiddenWidth = 32;
};

AdvDetector make_adv_detector(const ModelBundle& detector, std::uint64_t seed);

struct AdvVerdict {
  Tensor logits;            // (2): {unattacked, attacked}
  int label = kUnattacked;  // thresholded decision
  float attacked_score = 0.0f;
};

/// Threshold rule: attacked iff P(attacked) strictly exceeds tau; an exact
/// logit tie resolves to unattacked.
AdvVerdict adv_detect(const AdvDetector& det, const Tensor& image, const Tensor& map,
                      float tau = 0.5f);

float attacked_probability(const Tensor& logits2);
int decide_attacked(float score, float tau);

struct PairedBatch {
  std::vector<Tensor> images;
  std::vector<Tensor> maps;
  std::vector<int> labels;  // kUnattacked / kAttacked
};

TrainReport train_adv_detector(AdvDetector& det, const PairedBatch& train, Regime regime,
                               const TrainHyper& hyper);

/// P(attacked) per pair, computed in evaluation-sized chunks.
std::vector<float> adv_scores(const AdvDetector& det, const PairedBatch& data);

float adv_accuracy(const AdvDetector& det, const PairedBatch& data, float tau = 0.5f);

}  // namespace xaidet::models
