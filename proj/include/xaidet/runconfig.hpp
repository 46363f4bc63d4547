#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xaidet/net.hpp"

namespace xaidet::run {

/// One experiment configuration. Every randomized stage derives its seed
/// from `seed`; the config hash is embedded in every artifact so stale
/// mixtures are caught at load time.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "runs/default";

  // corpus
  int videos = 60;
  int frames = 16;
  double train_frac = 5.0 / 6.0;

  // models
  std::string arch = "A";  // "A" or "B"; several stages use both
  float lr = 1e-3f;
  int batch_size = 16;
  int detector_iters = 100;
  int adv_iters = 100;

  // attacks
  std::string attack = "pgd";
  float epsilon = 16.0f / 255.0f;
  int attack_iters = 0;  // 0 = per-attack default
  int restarts = 0;      // 0 = per-attack default
  std::uint64_t query_budget = 0;
  float p_init = 0.8f;

  // xai / adversarial detector
  std::string xai = "saliency";
  std::string regime = "full";  // "full" or "head"
  bool black_xai = false;
  int ig_steps = 64;
  float tau = 0.5f;

  // bench
  int bench_frames = 50;
  int bench_repeats = 3;

  // repro scope
  std::vector<std::string> repro_xai = {"gbp", "ixg", "ig", "saliency"};
  std::vector<std::string> repro_attacks = {"pgd", "fgsm", "apgd", "square", "nes"};
  int adaptive_frames = 32;

  bool force = false;  // skip artifact hash validation
};

RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& cfg, const std::filesystem::path& path);
std::string config_json(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

std::string arch_name(const RunConfig& cfg);  // "A" -> "arch-A"
std::string arch_name(const std::string& short_name);

// Stage entry points; each validates inputs, writes its artifacts under
// cfg.out_dir, and throws with a diagnostic on bad configuration.
void cmd_gen_data(const RunConfig& cfg);
void cmd_train_detector(const RunConfig& cfg);
void cmd_attack(const RunConfig& cfg);
void cmd_train_adv(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_transfer(const RunConfig& cfg);
void cmd_roc(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);
void cmd_repro(const RunConfig& cfg);

}  // namespace xaidet::run
