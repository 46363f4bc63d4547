#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xaidet/attacks.hpp"
#include "xaidet/models.hpp"
#include "xaidet/net.hpp"

namespace xaidet::data {

enum class AttackTag { kNone, kPgd, kFgsm, kApgd, kNes, kSquare, kAdaptiveStd, kAdaptiveXai };

const char* to_string(AttackTag t);
std::optional<AttackTag> attack_tag_from_string(std::string_view s);
AttackTag tag_of(attacks::AttackKind k);

struct VideoClip {
  std::string id;
  int label = kReal;  // deepfake axis
  AttackTag attack = AttackTag::kNone;
  std::string source_id;       // attacked twins: the clip they were built from
  std::vector<Tensor> frames;  // CHW in [0,1], 8-bit quantized
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  int n_videos = 0;
  int frames_per_video = 0;
  std::string attack = "none";
  std::string attacked_arch;  // model the attack ran against, if any
  std::uint64_t pixel_checksum = 0;
  std::string config_hash;
};

struct Corpus {
  std::vector<VideoClip> clips;
  CorpusManifest manifest;
};

/// Procedural real/fake clips: smooth seeded blob fields with per-frame
/// jitter; fake clips add a composited patch with a boundary seam and a
/// color shift. Frames are quantized to the 8-bit grid at generation time.
Corpus generate_corpus(std::uint64_t seed, int n_videos, int frames_per_video);

/// Deterministic center crop to the detector input size; identity at 32x32.
Tensor face_crop(const Tensor& frame, int out_h = 32, int out_w = 32);

/// Video-granular stratified split; no id appears in both halves.
std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_frac, std::uint64_t seed);

std::uint64_t corpus_pixel_checksum(const Corpus& corpus);

struct AttackedBuild {
  Corpus corpus;  // originals plus one attacked twin per fake clip
  std::vector<attacks::AttackRecord> records;
};

/// Attacks every fake clip frame-by-frame and appends the attacked twins.
/// Adaptive attacks additionally need the adversarial detector.
AttackedBuild build_attacked_corpus(const Corpus& corpus, const Network& net,
                                    attacks::AttackKind kind, const attacks::AttackConfig& cfg,
                                    const models::AdvDetector* adv_for_adaptive = nullptr,
                                    XaiMethod adaptive_method = XaiMethod::kSaliency);

struct PairedSet {
  models::PairedBatch batch;
  std::vector<std::string> video_ids;
  XaiMethod method = XaiMethod::kSaliency;
  bool black_maps = false;
};

/// One (crop, normalized map, attacked-or-not) sample per frame the deepfake
/// detector classifies as real; include_black substitutes all-zero maps.
PairedSet pair_with_xai(const Corpus& corpus, const Network& net, XaiMethod method,
                        bool include_black = false, int ig_steps = 64);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace xaidet::data
