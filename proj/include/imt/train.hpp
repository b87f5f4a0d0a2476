#pragma once

// Adversarial end-to-end training on procedurally generated clips.
// One generator update then one discriminator update per batch.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "imt/adam.hpp"
#include "imt/checkpoint.hpp"
#include "imt/loss.hpp"
#include "imt/metrics.hpp"
#include "imt/quantize.hpp"
#include "imt/synth.hpp"

namespace imt {

struct TrainConfig {
  ModelConfig model = reference_config(64);
  std::size_t steps = 3000;
  std::size_t batch = 8;
  AdamConfig adam;
  LossWeights weights;
  std::uint64_t seed = 1;
  SynthClipConfig synth;
  std::size_t eval_clips = 8;
  std::uint64_t eval_seed = 20240601;
  std::size_t eval_every = 500;   // 0: only before and after
  std::size_t log_every = 10;
  std::size_t checkpoint_every = 500;
  bool straight_through_quant = false;
  double qscale = kDefaultQscale;
  std::filesystem::path out_dir;  // empty: nothing written
};

struct StepStats {
  std::size_t step = 0;
  double l_total = 0, l_per = 0, l_adv = 0, l_tex = 0, d_loss = 0;
  bool generator_skipped = false, discriminator_skipped = false;
};

namespace detail {

template <class P>
std::vector<Var<float>> gather(P& params) {
  std::vector<Var<float>> out;
  params.visit("", [&](const std::string&, Var<float>& v) { out.push_back(v); });
  return out;
}

template <class P>
std::vector<std::string> gather_names(P& params) {
  std::vector<std::string> out;
  params.visit("", [&](const std::string& n, Var<float>&) { out.push_back(n); });
  return out;
}

struct GeneratorView {
  Model<float>* m;
  template <class F>
  void visit(const std::string& prefix, F&& f) {
    m->extractor.visit(prefix, f);
    m->decoder.visit(prefix, f);
  }
};

inline std::string rng_text(const Rng& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

}  // namespace detail

/// round(x * qscale) / qscale forward, identity backward.
template <class T>
Var<T> straight_through_quantize(const Var<T>& x, double qscale) {
  Tensor<T> delta(x.shape());
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double q = std::clamp(std::round(x.value()[i] * qscale), double(-kQuantMax), double(kQuantMax));
    delta[i] = static_cast<T>(q / qscale - x.value()[i]);
  }
  return add(x, Var<T>::constant(std::move(delta)));
}

/// Mean per-frame PSNR of every non-key frame reconstructed from frame 0 (no quantization).
inline double evaluate_psnr(Model<float>& model, const std::vector<std::vector<Tensor<float>>>& clips) {
  InferenceScope scope(model);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& clip : clips) {
    if (clip.size() < 2) continue;
    const std::size_t B = clip.size() - 1;
    const Shape& s = clip[0].shape();
    const std::size_t plane = shape_numel(s);
    Tensor<float> keys({B, s[0], s[1], s[2]}), targets({B, s[0], s[1], s[2]});
    for (std::size_t b = 0; b < B; ++b) {
      std::copy(clip[0].data(), clip[0].data() + plane, keys.data() + b * plane);
      std::copy(clip[b + 1].data(), clip[b + 1].data() + plane, targets.data() + b * plane);
    }
    const Var<float> kv = Var<float>::constant(keys);
    const Var<float> codes_k = extract_batch(kv, model.extractor);
    const Var<float> codes_t = extract_batch(Var<float>::constant(targets), model.extractor);
    const auto frames = synthesize(kv, codes_k, codes_t, model.decoder).frame.value();
    for (std::size_t b = 0; b < B; ++b) {
      Tensor<float> gen(s), gt(s);
      std::copy(frames.data() + b * plane, frames.data() + (b + 1) * plane, gen.data());
      std::copy(targets.data() + b * plane, targets.data() + (b + 1) * plane, gt.data());
      sum += psnr(gen, gt);
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)), model_(make_model<float>(cfg_.model, cfg_.seed)), data_rng_(cfg_.seed ^ kDataSalt) {
    setup();
  }

  /// Continue from a checkpoint written by save(); architecture must match.
  Trainer(TrainConfig cfg, ModelCheckpoint ck) : cfg_(std::move(cfg)), model_(std::move(ck.model)) {
    const ModelConfig& c = model_.config;
    if (c.input_size != cfg_.model.input_size || c.unet_width != cfg_.model.unet_width ||
        c.feature_channels != cfg_.model.feature_channels || c.attention_scale != cfg_.model.attention_scale)
      throw ConfigError("resume checkpoint architecture differs from the training configuration");
    setup();
    auto need = [&](const char* key) -> const std::string& {
      auto it = ck.echo.find(key);
      if (it == ck.echo.end()) throw DataError(std::string("checkpoint lacks ") + key + "; cannot resume");
      return it->second;
    };
    step_ = std::stoull(need("train.step"));
    skipped_ = std::stoull(need("train.skipped"));
    std::istringstream(need("train.data_rng")) >> data_rng_;
    g_state_.step = std::stoull(need("train.adam_g_step"));
    d_state_.step = std::stoull(need("train.adam_d_step"));
    restore_moments(ck.aux, "adam.g.", gen_names_, g_state_);
    restore_moments(ck.aux, "adam.d.", disc_names_, d_state_);
  }

  enum Phase : unsigned { kGenerator = 1, kDiscriminator = 2, kBoth = 3 };

  /// One batch. Restricting `phases` is for tests of update isolation.
  StepStats step(unsigned phases = kBoth) {
    const std::size_t B = cfg_.batch;
    const std::size_t R = cfg_.model.input_size;
    if (cfg_.synth.resolution != R) throw ConfigError("synthetic resolution must match the model input size");
    Tensor<float> keys({B, 3, R, R}), targets({B, 3, R, R});
    const std::size_t plane = 3 * R * R;
    for (std::size_t b = 0; b < B; ++b) {
      const MotionParams mp = sample_motion(cfg_.synth, data_rng_());
      const std::size_t t = 1 + data_rng_() % std::max<std::size_t>(cfg_.synth.frames_per_clip - 1, 1);
      const auto k = render_frame(cfg_.synth, mp, 0), g = render_frame(cfg_.synth, mp, t);
      std::copy(k.data(), k.data() + plane, keys.data() + b * plane);
      std::copy(g.data(), g.data() + plane, targets.data() + b * plane);
    }
    const Var<float> kv = Var<float>::constant(std::move(keys)), tv = Var<float>::constant(std::move(targets));

    // Generator update.
    Var<float> ck = extract_batch(kv, model_.extractor), ct = extract_batch(tv, model_.extractor);
    if (cfg_.straight_through_quant) {
      ck = straight_through_quantize(ck, cfg_.qscale);
      ct = straight_through_quantize(ct, cfg_.qscale);
    }
    const Var<float> gen = synthesize(kv, ck, ct, model_.decoder).frame;
    const auto real = discriminate(tv, model_.discriminator);
    const auto fake = discriminate(gen, model_.discriminator);
    const auto loss = total_loss(gen, tv, real, fake, cfg_.weights);
    zero_grads(model_);
    backward(loss.total);
    StepStats s;
    if (phases & kGenerator) s.generator_skipped = !adam_step(gen_params_, g_state_, cfg_.adam);

    // Discriminator update on the same batch.
    zero_grads(model_);
    const auto fake_d = discriminate(detach(gen), model_.discriminator);
    const Var<float> d_loss = discriminator_loss(real, fake_d);
    backward(d_loss);
    if (phases & kDiscriminator) s.discriminator_skipped = !adam_step(disc_params_, d_state_, cfg_.adam);
    zero_grads(model_);

    skipped_ += std::size_t(s.generator_skipped) + std::size_t(s.discriminator_skipped);
    s.step = ++step_;
    s.l_total = loss.total.value()[0];
    s.l_per = loss.per.value()[0];
    s.l_adv = loss.adv.value()[0];
    s.l_tex = loss.tex.value()[0];
    s.d_loss = d_loss.value()[0];
    return s;
  }

  double evaluate() {
    if (eval_set_.empty()) eval_set_ = synth_dataset(cfg_.synth, std::max<std::size_t>(cfg_.eval_clips, 1), cfg_.eval_seed);
    return evaluate_psnr(model_, eval_set_);
  }

  std::vector<std::uint8_t> checkpoint_bytes() {
    ConfigEcho echo;
    echo["train.step"] = std::to_string(step_);
    echo["train.skipped"] = std::to_string(skipped_);
    echo["train.seed"] = std::to_string(cfg_.seed);
    echo["train.batch"] = std::to_string(cfg_.batch);
    echo["train.data_rng"] = detail::rng_text(data_rng_);
    echo["train.adam_g_step"] = std::to_string(g_state_.step);
    echo["train.adam_d_step"] = std::to_string(d_state_.step);
    echo["train.lr"] = format_double(cfg_.adam.lr);
    echo["train.beta1"] = format_double(cfg_.adam.beta1);
    echo["train.beta2"] = format_double(cfg_.adam.beta2);
    echo["train.weights"] = format_double(cfg_.weights.per) + "," + format_double(cfg_.weights.adv) + "," +
                            format_double(cfg_.weights.tex);
    echo["train.l_per"] = "discriminator-feature-matching";
    echo["train.straight_through_quant"] = cfg_.straight_through_quant ? "1" : "0";
    NamedTensors aux;
    append_moments(aux, "adam.g.", gen_names_, g_state_);
    append_moments(aux, "adam.d.", disc_names_, d_state_);
    return serialize_checkpoint(model_, echo, aux);
  }

  void save(const std::filesystem::path& path) {
    const auto bytes = checkpoint_bytes();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      out.flush();
      if (!out) throw DataError("failed writing checkpoint " + tmp + " (disk full?)");
    }
    std::filesystem::rename(tmp, path);
  }

  Model<float>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t step_count() const { return step_; }
  std::size_t skipped_updates() const { return skipped_; }

  static std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  }

 private:
  static constexpr std::uint64_t kDataSalt = 0xda7a5eedull;

  void setup() {
    cfg_.weights.validate();
    if (cfg_.batch == 0) throw ConfigError("batch must be at least 1");
    detail::GeneratorView gv{&model_};
    gen_params_ = detail::gather(gv);
    gen_names_ = detail::gather_names(gv);
    disc_params_ = detail::gather(model_.discriminator);
    disc_names_ = detail::gather_names(model_.discriminator);
    g_state_.init(gen_params_);
    d_state_.init(disc_params_);
  }

  static void append_moments(NamedTensors& aux, const std::string& prefix, const std::vector<std::string>& names,
                             const AdamState<float>& st) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      aux.emplace_back(prefix + "m." + names[i], st.m[i]);
      aux.emplace_back(prefix + "v." + names[i], st.v[i]);
    }
  }

  static void restore_moments(const NamedTensors& aux, const std::string& prefix,
                              const std::vector<std::string>& names, AdamState<float>& st) {
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [n, t] : aux) by_name[n] = &t;
    for (std::size_t i = 0; i < names.size(); ++i) {
      for (int which = 0; which < 2; ++which) {
        const std::string key = prefix + (which ? "v." : "m.") + names[i];
        auto it = by_name.find(key);
        if (it == by_name.end()) throw DataError("checkpoint lacks optimizer state " + key);
        auto& dst = which ? st.v[i] : st.m[i];
        if (it->second->shape() != dst.shape()) throw DataError("optimizer state shape mismatch for " + key);
        dst = *it->second;
      }
    }
  }

  TrainConfig cfg_;
  Model<float> model_;
  Rng data_rng_;
  std::vector<Var<float>> gen_params_, disc_params_;
  std::vector<std::string> gen_names_, disc_names_;
  AdamState<float> g_state_, d_state_;
  std::size_t step_ = 0, skipped_ = 0;
  std::vector<std::vector<Tensor<float>>> eval_set_;
};

struct TrainSummary {
  std::size_t steps = 0;
  double initial_psnr = 0, final_psnr = 0;
  std::size_t skipped_updates = 0;
  double seconds = 0;
};

inline constexpr const char* kMetricsHeader = "step\tl_total\tl_per\tl_adv\tl_tex\td_loss\teval_psnr\tskipped";

/// Run `trainer` up to cfg.steps, logging and checkpointing into cfg.out_dir.
inline TrainSummary run_training(Trainer& trainer, std::ostream* progress = nullptr) {
  const TrainConfig& cfg = trainer.config();
  const auto start = std::chrono::steady_clock::now();
  std::ofstream log;
  std::filesystem::path ckpt;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto log_path = cfg.out_dir / "metrics.tsv";
    const bool fresh = trainer.step_count() == 0 || !std::filesystem::exists(log_path);
    log.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw DataError("cannot write " + log_path.string());
    log << std::setprecision(9);  // round-trips float
    if (fresh) {
      log << "# l_per is discriminator feature matching (stand-in for a pretrained perceptual loss)\n";
      log << kMetricsHeader << "\n";
    }
    ckpt = cfg.out_dir / "checkpoint.imtw";
  }
  auto write_row = [&](const StepStats& s, double eval) {
    if (!log.is_open()) return;
    log << s.step << '\t' << s.l_total << '\t' << s.l_per << '\t' << s.l_adv << '\t' << s.l_tex << '\t' << s.d_loss
        << '\t';
    if (std::isnan(eval)) log << '-';
    else log << eval;
    log << '\t' << trainer.skipped_updates() << '\n';
    log.flush();
    if (!log) throw DataError("metrics log write failed (disk full?)");
  };

  TrainSummary sum;
  bool final_done = false;
  sum.initial_psnr = trainer.evaluate();
  if (progress) *progress << "step " << trainer.step_count() << " eval_psnr " << sum.initial_psnr << "\n";
  while (trainer.step_count() < cfg.steps) {
    const StepStats s = trainer.step();
    if (s.generator_skipped || s.discriminator_skipped) {
      if (progress) *progress << "step " << s.step << ": non-finite gradient, update skipped\n";
    }
    const bool last = s.step == cfg.steps;
    double eval = std::numeric_limits<double>::quiet_NaN();
    if (last || (cfg.eval_every && s.step % cfg.eval_every == 0)) eval = trainer.evaluate();
    if (last || !std::isnan(eval) || (cfg.log_every && s.step % cfg.log_every == 0)) write_row(s, eval);
    if (progress && !std::isnan(eval))
      *progress << "step " << s.step << " l_total " << s.l_total << " l_tex " << s.l_tex << " d_loss " << s.d_loss
                << " eval_psnr " << eval << "\n";
    if (!ckpt.empty() && (last || (cfg.checkpoint_every && s.step % cfg.checkpoint_every == 0))) trainer.save(ckpt);
    if (last) {
      sum.final_psnr = eval;
      final_done = true;
    }
  }
  if (!final_done) {
    sum.final_psnr = trainer.evaluate();
    if (!ckpt.empty()) trainer.save(ckpt);
  }
  sum.steps = trainer.step_count();
  sum.skipped_updates = trainer.skipped_updates();
  sum.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sum;
}

}  // namespace imt
