#include "xaidet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "xaidet/image_io.hpp"
#include "xaidet/rng.hpp"
#include "xaidet/xai.hpp"

namespace xaidet::data {

using nlohmann::json;

const char* to_string(AttackTag t) {
  switch (t) {
    case AttackTag::kNone: return "none";
    case AttackTag::kPgd: return "pgd";
    case AttackTag::kFgsm: return "fgsm";
    case AttackTag::kApgd: return "apgd";
    case AttackTag::kNes: return "nes";
    case AttackTag::kSquare: return "square";
    case AttackTag::kAdaptiveStd: return "adaptive_std";
    case AttackTag::kAdaptiveXai: return "adaptive_xai";
  }
  return "?";
}

std::optional<AttackTag> attack_tag_from_string(std::string_view s) {
  for (AttackTag t : {AttackTag::kNone, AttackTag::kPgd, AttackTag::kFgsm, AttackTag::kApgd,
                      AttackTag::kNes, AttackTag::kSquare, AttackTag::kAdaptiveStd,
                      AttackTag::kAdaptiveXai})
    if (s == to_string(t)) return t;
  return std::nullopt;
}

AttackTag tag_of(attacks::AttackKind k) {
  switch (k) {
    case attacks::AttackKind::kPgd: return AttackTag::kPgd;
    case attacks::AttackKind::kFgsm: return AttackTag::kFgsm;
    case attacks::AttackKind::kApgd: return AttackTag::kApgd;
    case attacks::AttackKind::kNes: return AttackTag::kNes;
    case attacks::AttackKind::kSquare: return AttackTag::kSquare;
    case attacks::AttackKind::kAdaptiveStd: return AttackTag::kAdaptiveStd;
    case attacks::AttackKind::kAdaptiveXai: return AttackTag::kAdaptiveXai;
  }
  return AttackTag::kNone;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

namespace {

constexpr int kH = 32;
constexpr int kW = 32;
constexpr int kBlobs = 5;

struct Blob {
  float cx, cy, sigma;
  float amp[3];
};

struct ClipRecipe {
  std::vector<Blob> blobs;
  float bias[3];
  // fake artifact
  int patch_x = 0, patch_y = 0, patch_w = 0, patch_h = 0;
  float patch_shift[3] = {0, 0, 0};
  float seam = 0.0f;
};

ClipRecipe make_recipe(Rng& rng, bool fake) {
  ClipRecipe r;
  for (int c = 0; c < 3; ++c) r.bias[c] = rng.uniform(0.35f, 0.6f);
  for (int j = 0; j < kBlobs; ++j) {
    Blob b;
    b.cx = rng.uniform(4.0f, 28.0f);
    b.cy = rng.uniform(4.0f, 28.0f);
    b.sigma = rng.uniform(4.0f, 9.0f);
    for (int c = 0; c < 3; ++c) b.amp[c] = rng.uniform(-0.28f, 0.28f);
    r.blobs.push_back(b);
  }
  if (fake) {
    r.patch_w = rng.range(10, 14);
    r.patch_h = rng.range(10, 14);
    r.patch_x = rng.range(6, kW - 6 - r.patch_w);
    r.patch_y = rng.range(6, kH - 6 - r.patch_h);
    for (int c = 0; c < 3; ++c)
      r.patch_shift[c] = (rng.coin() ? 1.0f : -1.0f) * rng.uniform(0.06f, 0.11f);
    r.seam = (rng.coin() ? 1.0f : -1.0f) * rng.uniform(0.10f, 0.16f);
  }
  return r;
}

Tensor render_frame(const ClipRecipe& r, bool fake, Rng& frame_rng) {
  Tensor img({3, kH, kW});
  // per-frame jitter of blob centers keeps the clip coherent but not static
  std::vector<std::pair<float, float>> jitter(r.blobs.size());
  for (auto& j : jitter) {
    j.first = frame_rng.uniform(-1.4f, 1.4f);
    j.second = frame_rng.uniform(-1.4f, 1.4f);
  }
  for (int y = 0; y < kH; ++y) {
    for (int x = 0; x < kW; ++x) {
      float acc[3] = {r.bias[0], r.bias[1], r.bias[2]};
      for (std::size_t j = 0; j < r.blobs.size(); ++j) {
        const Blob& b = r.blobs[j];
        float dx = static_cast<float>(x) - (b.cx + jitter[j].first);
        float dy = static_cast<float>(y) - (b.cy + jitter[j].second);
        float g = std::exp(-(dx * dx + dy * dy) / (2.0f * b.sigma * b.sigma));
        for (int c = 0; c < 3; ++c) acc[c] += b.amp[c] * g;
      }
      for (int c = 0; c < 3; ++c)
        img.at({c, y, x}) = std::clamp(acc[c] + frame_rng.uniform(-0.015f, 0.015f), 0.0f, 1.0f);
    }
  }
  if (fake) {
    const int x0 = r.patch_x, y0 = r.patch_y, x1 = r.patch_x + r.patch_w, y1 = r.patch_y + r.patch_h;
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        bool edge = (y == y0 || y == y1 - 1 || x == x0 || x == x1 - 1);
        for (int c = 0; c < 3; ++c) {
          float v = img.at({c, y, x}) + r.patch_shift[c] + (edge ? r.seam : 0.0f);
          img.at({c, y, x}) = std::clamp(v, 0.0f, 1.0f);
        }
      }
  }
  return quantize8(img);
}

std::string clip_name(bool fake, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", fake ? "fake" : "real", index);
  return buf;
}

}  // namespace

Corpus generate_corpus(std::uint64_t seed, int n_videos, int frames_per_video) {
  if (n_videos <= 0 || n_videos % 2 != 0)
    throw std::invalid_argument("n_videos must be positive and even for balanced classes");
  if (frames_per_video < 1) throw std::invalid_argument("frames_per_video must be >= 1");

  Corpus corpus;
  corpus.manifest.seed = seed;
  corpus.manifest.n_videos = n_videos;
  corpus.manifest.frames_per_video = frames_per_video;

  const int per_class = n_videos / 2;
  for (int v = 0; v < n_videos; ++v) {
    const bool fake = v >= per_class;
    const int index = fake ? v - per_class : v;
    VideoClip clip;
    clip.id = clip_name(fake, index);
    clip.label = fake ? kFake : kReal;
    Rng rng(fork_seed(seed, "clip", static_cast<std::uint64_t>(v)));
    ClipRecipe recipe = make_recipe(rng, fake);
    for (int f = 0; f < frames_per_video; ++f) {
      Rng frame_rng(fork_seed(seed, ("frame:" + clip.id).c_str(), static_cast<std::uint64_t>(f)));
      clip.frames.push_back(render_frame(recipe, fake, frame_rng));
    }
    corpus.clips.push_back(std::move(clip));
  }
  corpus.manifest.pixel_checksum = corpus_pixel_checksum(corpus);
  return corpus;
}

Tensor face_crop(const Tensor& frame, int out_h, int out_w) {
  if (frame.rank() != 3)
    throw std::invalid_argument("face_crop expects a CHW frame, got " +
                                Tensor::shape_str(frame.shape()));
  const int c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (h < out_h || w < out_w)
    throw std::invalid_argument("face_crop: frame " + Tensor::shape_str(frame.shape()) +
                                " smaller than crop (" + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + ")");
  if (h == out_h && w == out_w) return frame;
  const int y0 = (h - out_h) / 2;
  const int x0 = (w - out_w) / 2;
  Tensor out({c, out_h, out_w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) out.at({ch, y, x}) = frame.at({ch, y0 + y, x0 + x});
  return out;
}

std::pair<Corpus, Corpus> split(const Corpus& corpus, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw std::invalid_argument("train_frac must lie strictly between 0 and 1");

  std::vector<int> real_idx, fake_idx;
  for (std::size_t i = 0; i < corpus.clips.size(); ++i)
    (corpus.clips[i].label == kReal ? real_idx : fake_idx).push_back(static_cast<int>(i));

  Rng rng(fork_seed(seed, "split"));
  rng.shuffle(real_idx);
  rng.shuffle(fake_idx);

  auto take = [&](const std::vector<int>& idx) {
    auto n_train = static_cast<std::size_t>(
        std::llround(train_frac * static_cast<double>(idx.size())));
    return n_train;
  };
  std::size_t n_real_train = take(real_idx);
  std::size_t n_fake_train = take(fake_idx);
  if (n_real_train == 0 || n_fake_train == 0 || n_real_train == real_idx.size() ||
      n_fake_train == fake_idx.size())
    throw std::invalid_argument("degenerate split: a side would have an empty class");

  Corpus train, test;
  train.manifest = corpus.manifest;
  test.manifest = corpus.manifest;
  auto dispatch = [&](const std::vector<int>& idx, std::size_t n_train) {
    std::vector<int> sorted_train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<int> sorted_test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(sorted_train.begin(), sorted_train.end());
    std::sort(sorted_test.begin(), sorted_test.end());
    for (int i : sorted_train) train.clips.push_back(corpus.clips[static_cast<std::size_t>(i)]);
    for (int i : sorted_test) test.clips.push_back(corpus.clips[static_cast<std::size_t>(i)]);
  };
  dispatch(real_idx, n_real_train);
  dispatch(fake_idx, n_fake_train);
  train.manifest.n_videos = static_cast<int>(train.clips.size());
  test.manifest.n_videos = static_cast<int>(test.clips.size());
  train.manifest.pixel_checksum = corpus_pixel_checksum(train);
  test.manifest.pixel_checksum = corpus_pixel_checksum(test);
  return {std::move(train), std::move(test)};
}

std::uint64_t corpus_pixel_checksum(const Corpus& corpus) {
  Fnv64 f;
  for (const auto& clip : corpus.clips) {
    f.update(clip.id);
    for (const Tensor& frame : clip.frames) {
      auto bytes = quantize_rgb8(frame);
      f.update(bytes.data(), bytes.size());
    }
  }
  return f.digest();
}

// ---------------------------------------------------------------------------
// Attacked-corpus construction
// ---------------------------------------------------------------------------

AttackedBuild build_attacked_corpus(const Corpus& corpus, const Network& net,
                                    attacks::AttackKind kind, const attacks::AttackConfig& cfg,
                                    const models::AdvDetector* adv_for_adaptive,
                                    XaiMethod adaptive_method) {
  using attacks::AttackKind;
  AttackedBuild out;
  out.corpus.manifest = corpus.manifest;
  out.corpus.manifest.attack = attacks::to_string(kind);
  out.corpus.clips = corpus.clips;

  const int max_steps = static_cast<int>(std::floor(cfg.epsilon * 255.0f + 1e-4f));

  for (const auto& clip : corpus.clips) {
    if (clip.label != kFake || clip.attack != AttackTag::kNone) continue;
    VideoClip twin;
    twin.id = clip.id + "_" + attacks::to_string(kind);
    twin.label = kFake;
    twin.attack = tag_of(kind);
    twin.source_id = clip.id;

    for (std::size_t fi = 0; fi < clip.frames.size(); ++fi) {
      const Tensor& x = clip.frames[fi];
      attacks::AttackConfig fcfg = cfg;
      fcfg.seed = fork_seed(cfg.seed, ("attack:" + twin.id).c_str(), fi);

      attacks::AttackResult res;
      switch (kind) {
        case AttackKind::kFgsm: res = attacks::fgsm(net, x, fcfg); break;
        case AttackKind::kPgd: res = attacks::pgd(net, x, fcfg); break;
        case AttackKind::kApgd: res = attacks::apgd(net, x, fcfg); break;
        case AttackKind::kNes: {
          auto oracle = attacks::make_query_oracle(net, fcfg.target);
          res = attacks::nes_attack(oracle, x, fcfg);
          break;
        }
        case AttackKind::kSquare: {
          auto oracle = attacks::make_query_oracle(net, fcfg.target);
          res = attacks::square_attack(oracle, x, fcfg);
          break;
        }
        case AttackKind::kAdaptiveStd: {
          if (!adv_for_adaptive)
            throw std::invalid_argument("adaptive_std needs the adversarial detector");
          attacks::AdaptiveTargets t;
          t.deepfake_net = &net;
          t.adv_detector = adv_for_adaptive;
          t.xai_method = adaptive_method;
          res = attacks::adaptive_standard_attack(t, x, fcfg);
          break;
        }
        case AttackKind::kAdaptiveXai:
          res = attacks::adaptive_xai_attack(net, adaptive_method, x, fcfg);
          break;
      }

      // Snap to the on-disk grid; success is re-read from the stored frame.
      Tensor stored = quantize_attacked(res.x_adv, x, max_steps);
      Tensor z = net.forward_single(stored);
      bool stored_success = z[kReal] > z[kFake];

      attacks::AttackRecord rec;
      rec.attack = attacks::to_string(kind);
      rec.seed = fcfg.seed;
      rec.epsilon = fcfg.epsilon;
      rec.iterations = res.iterations;
      rec.queries = res.queries;
      rec.success = stored_success;
      rec.final_loss = std::max(z[kFake] - z[kReal], 0.0f);
      out.records.push_back(rec);

      twin.frames.push_back(std::move(stored));
    }
    out.corpus.clips.push_back(std::move(twin));
  }
  out.corpus.manifest.pixel_checksum = corpus_pixel_checksum(out.corpus);
  return out;
}

// ---------------------------------------------------------------------------
// XAI pairing
// ---------------------------------------------------------------------------

PairedSet pair_with_xai(const Corpus& corpus, const Network& net, XaiMethod method,
                        bool include_black, int ig_steps) {
  PairedSet out;
  out.method = method;
  out.black_maps = include_black;
  for (const auto& clip : corpus.clips) {
    const int attack_label = clip.attack == AttackTag::kNone ? kUnattacked : kAttacked;
    for (const Tensor& frame : clip.frames) {
      Tensor crop = face_crop(frame);
      Tensor z = net.forward_single(crop);
      int pred = z[kFake] > z[kReal] ? kFake : kReal;
      if (pred != kReal) continue;  // the cascade only builds maps for real verdicts
      Tensor map = include_black
                       ? xai::black_map(crop.shape())
                       : xai::normalize_map(xai::compute_map(net, crop, method, pred, ig_steps));
      out.batch.images.push_back(std::move(crop));
      out.batch.maps.push_back(std::move(map));
      out.batch.labels.push_back(attack_label);
      out.video_ids.push_back(clip.id);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Disk layout: <dir>/manifest.json plus one directory of PNG frames per clip.
// ---------------------------------------------------------------------------

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta;
  meta["seed"] = corpus.manifest.seed;
  meta["n_videos"] = corpus.manifest.n_videos;
  meta["frames_per_video"] = corpus.manifest.frames_per_video;
  meta["attack"] = corpus.manifest.attack;
  meta["attacked_arch"] = corpus.manifest.attacked_arch;
  meta["pixel_checksum"] = corpus.manifest.pixel_checksum;
  meta["config_hash"] = corpus.manifest.config_hash;
  meta["clips"] = json::array();
  for (const auto& clip : corpus.clips) {
    json c;
    c["id"] = clip.id;
    c["label"] = clip.label == kFake ? "fake" : "real";
    c["attack"] = to_string(clip.attack);
    c["source_id"] = clip.source_id;
    c["frames"] = clip.frames.size();
    meta["clips"].push_back(c);

    auto clip_dir = dir / clip.id;
    std::filesystem::create_directories(clip_dir);
    for (std::size_t f = 0; f < clip.frames.size(); ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.png", f);
      write_png(clip_dir / name, clip.frames[f]);
    }
  }
  std::ofstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot write corpus manifest in " + dir.string());
  mf << meta.dump(2) << "\n";
}

Corpus load_corpus(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("no corpus manifest in " + dir.string());
  json meta = json::parse(mf);

  Corpus corpus;
  corpus.manifest.seed = meta.at("seed").get<std::uint64_t>();
  corpus.manifest.n_videos = meta.at("n_videos").get<int>();
  corpus.manifest.frames_per_video = meta.at("frames_per_video").get<int>();
  corpus.manifest.attack = meta.at("attack").get<std::string>();
  corpus.manifest.attacked_arch = meta.value("attacked_arch", "");
  corpus.manifest.pixel_checksum = meta.at("pixel_checksum").get<std::uint64_t>();
  corpus.manifest.config_hash = meta.value("config_hash", "");

  for (const auto& c : meta.at("clips")) {
    VideoClip clip;
    clip.id = c.at("id").get<std::string>();
    clip.label = c.at("label").get<std::string>() == "fake" ? kFake : kReal;
    auto tag = attack_tag_from_string(c.at("attack").get<std::string>());
    if (!tag) throw std::runtime_error("unknown attack tag in manifest for clip " + clip.id);
    clip.attack = *tag;
    clip.source_id = c.value("source_id", "");
    auto n = c.at("frames").get<std::size_t>();
    for (std::size_t f = 0; f < n; ++f) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.png", f);
      clip.frames.push_back(read_png(dir / clip.id / name));
    }
    corpus.clips.push_back(std::move(clip));
  }
  std::uint64_t check = corpus_pixel_checksum(corpus);
  if (check != corpus.manifest.pixel_checksum)
    throw std::runtime_error("corpus pixel checksum mismatch in " + dir.string());
  return corpus;
}

}  // namespace xaidet::data
