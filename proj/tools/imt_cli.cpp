// imt: command-line driver for the codec, trainer and evaluation harness.
//
// Exit codes: 0 success, 1 usage/configuration, 2 data or format error,
// 3 codec error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "imt/imt.hpp"

namespace fs = std::filesystem;
using namespace imt;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kCodec = 3 };

struct IntraFlags {
  int qp = 22;
  std::string kind = "builtin";
  std::string extern_cmd, extern_decode_cmd;

  IntraCodecConfig config() const {
    IntraCodecConfig c;
    c.kind = parse_intra_kind(kind);
    c.qp = qp;
    c.external_command = extern_cmd;
    c.external_decode_command = extern_decode_cmd;
    c.validate();
    return c;
  }
};

struct Options {
  std::string input, checkpoint, out, scores_anchor, scores_test, metric, title, format = "dir";
  std::vector<std::string> inputs;
  IntraFlags intra;
  double qscale = kDefaultQscale;
  std::vector<int> qps = default_sweep_qps();
  std::vector<double> qscales{kDefaultQscale};
  std::uint64_t seed = 1;
  bool deterministic = false, ignore_hash = false, one_minus = false, straight_through = false, no_ssim = false;
  std::size_t clips = 8, frames = 150, resolution = 64, steps = 3000, batch = 8, eval_every = 500, eval_clips = 8;
  double lr = 2e-4, beta1 = 0.5, beta2 = 0.999, fps = 25;
};

void add_intra(CLI::App* c, Options& o) {
  c->add_option("--qp", o.intra.qp, "intra QP of the key frame")->capture_default_str();
  c->add_option("--intra", o.intra.kind, "key-frame codec")
      ->check(CLI::IsMember({"builtin", "external"}))
      ->capture_default_str();
  c->add_option("--extern-cmd", o.intra.extern_cmd, "external intra encode command ({input} {output} {qp})");
  c->add_option("--extern-decode-cmd", o.intra.extern_decode_cmd, "external intra decode command");
}

void add_common(CLI::App* c, Options& o) {
  c->add_flag("--deterministic", o.deterministic, "single-threaded, reproducible execution (always the case here)");
}

std::uint16_t fps_value(double fps) {
  if (!(fps > 0) || fps > 65535 || fps != static_cast<std::uint16_t>(fps))
    throw ConfigError("--fps must be an integer in 1..65535");
  return static_cast<std::uint16_t>(fps);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + p.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out.flush()) throw DataError("write failed: " + p.string());
}

void require(const std::string& v, const char* flag) {
  if (v.empty()) throw ConfigError(std::string(flag) + " is required");
}

Model<float> load_model(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  return load_checkpoint(o.checkpoint).model;
}

// ---------------------------------------------------------------------------

int cmd_synth(const Options& o) {
  require(o.out, "--out");
  if (o.format != "dir" && o.format != "raw") throw ConfigError("--format must be dir or raw");
  SynthClipConfig cfg;
  cfg.resolution = o.resolution;
  cfg.frames_per_clip = o.frames;
  const auto clips = synth_dataset(cfg, o.clips, o.seed);
  fs::create_directories(o.out);
  char name[32];
  for (std::size_t i = 0; i < clips.size(); ++i) {
    std::snprintf(name, sizeof name, "clip_%03zu", i);
    const fs::path p = fs::path(o.out) / (o.format == "raw" ? std::string(name) + ".rgb" : std::string(name));
    write_video(p, clips[i]);
  }
  std::cout << "wrote " << clips.size() << " clips of " << o.frames << " frames to " << o.out << "\n";
  return kOk;
}

int cmd_train(const Options& o) {
  require(o.out, "--out");
  TrainConfig cfg;
  cfg.model = reference_config(o.resolution);
  cfg.synth.resolution = o.resolution;
  cfg.steps = o.steps;
  cfg.batch = o.batch;
  if (cfg.batch < 1) throw ConfigError("--batch must be at least 1");
  cfg.seed = o.seed;
  cfg.adam.lr = o.lr;
  cfg.adam.beta1 = o.beta1;
  cfg.adam.beta2 = o.beta2;
  cfg.eval_every = o.eval_every;
  cfg.eval_clips = o.eval_clips;
  cfg.straight_through_quant = o.straight_through;
  cfg.qscale = o.qscale;
  cfg.out_dir = o.out;
  auto t = o.checkpoint.empty() ? std::make_unique<Trainer>(cfg)
                                 : std::make_unique<Trainer>(cfg, load_checkpoint(o.checkpoint));
  const auto s = run_training(*t, &std::cout);
  std::cout << "steps " << s.steps << " initial_psnr " << s.initial_psnr << " final_psnr " << s.final_psnr
            << " gain_db " << s.final_psnr - s.initial_psnr << " skipped " << s.skipped_updates << " seconds "
            << s.seconds << "\n";
  return kOk;
}

int cmd_encode(const Options& o) {
  require(o.input, "input");
  require(o.out, "--out");
  EncodeOptions eo;
  eo.intra = o.intra.config();
  eo.qscale = o.qscale;
  eo.fps_num = fps_value(o.fps);
  Model<float> model = load_model(o);
  const auto frames = read_video(o.input);
  const Bitstream bs = encode_sequence(frames, model, eo);
  const auto bytes = write_bitstream(bs);
  write_bytes(o.out, bytes);
  std::cout << "frames " << frames.size() << " bytes " << bytes.size() << " key_bytes " << bs.key_payload.size()
            << " residual_bytes " << bs.residual_payload.size() << " kbps "
            << bitrate_kbps(bytes.size(), bs.meta.fps(), frames.size()) << "\n";
  return kOk;
}

int cmd_decode(const Options& o) {
  require(o.input, "input");
  require(o.out, "--out");
  Model<float> model = load_model(o);
  const auto bs = read_bitstream(read_bytes(o.input));
  DecodeOptions d;
  d.intra.external_decode_command = o.intra.extern_decode_cmd;
  d.ignore_model_hash = o.ignore_hash;
  const auto frames = decode_sequence(bs, model, d);
  write_video(o.out, frames);
  std::cout << "decoded " << frames.size() << " frames to " << o.out << "\n";
  return kOk;
}

int cmd_eval(const Options& o) {
  require(o.input, "input");
  EncodeOptions eo;
  eo.intra = o.intra.config();
  eo.qscale = o.qscale;
  eo.fps_num = fps_value(o.fps);
  Model<float> model = load_model(o);
  const auto frames = read_video(o.input);
  const Bitstream bs = encode_sequence(frames, model, eo);
  const auto bytes = write_bitstream(bs);
  DecodeOptions d;
  d.intra = eo.intra;
  const auto decoded = decode_sequence(read_bitstream(bytes), model, d);
  if (!o.out.empty()) write_video(o.out, decoded);
  const auto [p, s] = sequence_quality(frames, decoded, !o.no_ssim);
  const std::size_t inter = frames.size() > 1 ? frames.size() - 1 : 1;
  std::cout << "frames " << frames.size() << "\nbytes " << bytes.size() << "\nkey_bytes " << bs.key_payload.size()
            << "\nresidual_bytes " << bs.residual_payload.size() << "\ninter_bytes_per_frame "
            << double(bs.residual_payload.size()) / inter << "\nkbps "
            << bitrate_kbps(bytes.size(), bs.meta.fps(), frames.size()) << "\npsnr " << p << "\n";
  if (!o.no_ssim) std::cout << "ssim " << s << "\n";
  return kOk;
}

int cmd_rdsweep(const Options& o) {
  require(o.input, "input");
  SweepOptions so;
  so.intra = o.intra.config();
  so.fps_num = fps_value(o.fps);
  so.with_ssim = !o.no_ssim;
  so.label = fs::path(o.input).filename().string();
  if (so.label.empty()) so.label = "imt";
  Model<float> model = load_model(o);
  const auto frames = read_video(o.input);
  const auto r = rd_sweep(frames, model, o.qps, o.qscales, so);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "qp\tqscale\tbytes\tkbps\tpsnr\tssim\tstatus\n";
  bool any = false;
  for (const auto& p : r.points) {
    std::cout << p.qp << '\t' << p.qscale << '\t' << p.total_bytes << '\t' << p.kbps << '\t' << p.psnr << '\t'
              << p.ssim << '\t' << (p.ok ? "ok" : "failed") << "\n";
    any = any || p.ok;
  }
  if (!any) {
    std::cerr << "error: every sweep point failed\n";
    return kCodec;
  }
  if (!o.out.empty()) {
    const auto files = emit_plot(r.curves, o.out);
    std::cout << "wrote " << files.data.string() << " and " << files.svg.string() << "\n";
  }
  return kOk;
}

int cmd_bdrate(const Options& o) {
  require(o.scores_anchor, "--anchor");
  require(o.scores_test, "--test");
  const auto a = ingest_external_metrics(fs::path(o.scores_anchor));
  const auto t = ingest_external_metrics(fs::path(o.scores_test));
  for (const auto* r : {&a, &t})
    for (const auto& w : r->warnings) std::cerr << "warning: " << w << "\n";
  std::size_t printed = 0;
  for (const auto& tc : t.curves) {
    if (!o.metric.empty() && tc.metric_name != lowercase(o.metric)) continue;
    const RDCurve* match = nullptr;
    std::size_t same_metric = 0;
    for (const auto& ac : a.curves) {
      if (ac.metric_name != tc.metric_name) continue;
      ++same_metric;
      if (ac.label == tc.label) match = &ac;
    }
    if (!match && same_metric == 1)
      for (const auto& ac : a.curves)
        if (ac.metric_name == tc.metric_name) match = &ac;
    if (!match) {
      std::cerr << "warning: no anchor curve for '" << tc.label << "' (" << tc.metric_name << ")\n";
      continue;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", bd_rate(*match, tc));
    std::cout << match->label << "\t" << tc.label << "\t" << tc.metric_name << "\t" << buf << "%\n";
    ++printed;
  }
  if (!printed) throw DataError("no comparable curve pairs");
  return kOk;
}

int cmd_plot(const Options& o) {
  require(o.out, "--out");
  if (o.inputs.empty()) throw ConfigError("plot needs at least one scores file");
  std::vector<RDCurve> curves;
  for (const auto& in : o.inputs) {
    auto r = ingest_external_metrics(fs::path(in));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    for (auto& c : r.curves) curves.push_back(std::move(c));
  }
  if (curves.empty()) {
    std::cerr << "warning: no curves; nothing plotted\n";
    return kOk;
  }
  PlotOptions po;
  po.one_minus_lower_is_better = o.one_minus;
  if (!o.title.empty()) po.title = o.title;
  const auto files = emit_plot(curves, o.out, po);
  std::cout << "wrote " << files.data.string() << " and " << files.svg.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// Config file: flat key=value; keys are long option names without dashes.
// Values apply only to options the command line left unset.

std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return argv[i + 1];
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return "";
}

void apply_config(CLI::App& app, CLI::App* sub, const ConfigMap& cfg, const std::string& source) {
  for (const auto& [raw_key, value] : cfg) {
    std::string key = raw_key;
    for (auto& ch : key)
      if (ch == '_') ch = '-';
    const std::string flag = "--" + key;
    if (key == "config") throw ConfigError(source + ": config files cannot nest");
    CLI::Option* opt = sub->get_option_no_throw(flag);
    if (!opt) {
      bool elsewhere = false;
      for (auto* other : app.get_subcommands({}))
        elsewhere = elsewhere || other->get_option_no_throw(flag) != nullptr;
      if (!elsewhere) throw ConfigError(source + ": unknown key '" + raw_key + "'");
      continue;
    }
    if (opt->count() > 0) continue;
    try {
      opt->add_result(value);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ConfigError(source + ": " + raw_key + "=" + value + ": " + e.what());
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imt: generative human-video codec with compact features"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_file;
  app.add_option("--config", config_file, "flat key=value file; command-line flags win");
  Options o;

  auto* synth = app.add_subcommand("synth", "write procedural training/evaluation clips");
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--clips", o.clips)->capture_default_str();
  synth->add_option("--frames", o.frames)->capture_default_str();
  synth->add_option("--resolution", o.resolution)->capture_default_str();
  synth->add_option("--seed", o.seed)->capture_default_str();
  synth->add_option("--format", o.format, "dir (PPM frames) or raw (.rgb + .dims)")->capture_default_str();
  add_common(synth, o);

  auto* train = app.add_subcommand("train", "train extractor, decoder and discriminator on synthetic clips");
  train->add_option("--out", o.out, "run directory (metrics.tsv, checkpoint.imtw)");
  train->add_option("--checkpoint", o.checkpoint, "resume from this checkpoint");
  train->add_option("--steps", o.steps)->capture_default_str();
  train->add_option("--batch", o.batch)->capture_default_str();
  train->add_option("--seed", o.seed)->capture_default_str();
  train->add_option("--lr", o.lr)->capture_default_str();
  train->add_option("--beta1", o.beta1)->capture_default_str();
  train->add_option("--beta2", o.beta2)->capture_default_str();
  train->add_option("--resolution", o.resolution)->capture_default_str();
  train->add_option("--eval-every", o.eval_every)->capture_default_str();
  train->add_option("--eval-clips", o.eval_clips)->capture_default_str();
  train->add_option("--qscale", o.qscale, "quantizer scale for straight-through training")->capture_default_str();
  train->add_flag("--straight-through", o.straight_through, "quantize codes during training");
  add_common(train, o);

  auto* encode = app.add_subcommand("encode", "video -> bitstream");
  encode->add_option("input", o.input, "frame directory or .rgb file");
  encode->add_option("--checkpoint", o.checkpoint);
  encode->add_option("--out", o.out, "bitstream path");
  encode->add_option("--qscale", o.qscale)->capture_default_str();
  encode->add_option("--fps", o.fps)->capture_default_str();
  add_intra(encode, o);
  add_common(encode, o);

  auto* decode = app.add_subcommand("decode", "bitstream -> video");
  decode->add_option("input", o.input, "bitstream path");
  decode->add_option("--checkpoint", o.checkpoint);
  decode->add_option("--out", o.out, "frame directory or .rgb file");
  decode->add_option("--extern-decode-cmd", o.intra.extern_decode_cmd, "external intra decode command");
  decode->add_flag("--ignore-model-hash", o.ignore_hash, "decode even if the stream names another checkpoint");
  add_common(decode, o);

  auto* eval = app.add_subcommand("eval", "encode, decode and report rate and quality");
  eval->add_option("input", o.input, "frame directory or .rgb file");
  eval->add_option("--checkpoint", o.checkpoint);
  eval->add_option("--out", o.out, "optional decoded video output");
  eval->add_option("--qscale", o.qscale)->capture_default_str();
  eval->add_option("--fps", o.fps)->capture_default_str();
  eval->add_flag("--no-ssim", o.no_ssim);
  add_intra(eval, o);
  add_common(eval, o);

  auto* sweep = app.add_subcommand("rdsweep", "rate-distortion sweep over qp x qscale");
  sweep->add_option("input", o.input, "frame directory or .rgb file");
  sweep->add_option("--checkpoint", o.checkpoint);
  sweep->add_option("--out", o.out, "output stem for .csv and .svg");
  sweep->add_option("--qps", o.qps)->delimiter(',')->capture_default_str();
  sweep->add_option("--qscales", o.qscales)->delimiter(',')->capture_default_str();
  sweep->add_option("--fps", o.fps)->capture_default_str();
  sweep->add_flag("--no-ssim", o.no_ssim);
  add_intra(sweep, o);
  sweep->get_option("--qp")->description("unused here; see --qps");
  add_common(sweep, o);

  auto* bd = app.add_subcommand("bdrate", "BD-rate of test curves against anchor curves");
  bd->add_option("--anchor", o.scores_anchor, "scores file: sequence_id,bitrate_kbps,metric,value");
  bd->add_option("--test", o.scores_test, "scores file in the same format");
  bd->add_option("--metric", o.metric, "restrict to one metric");
  add_common(bd, o);

  auto* plot = app.add_subcommand("plot", "CSV + SVG rate-distortion plot from scores files");
  plot->add_option("inputs", o.inputs, "scores files");
  plot->add_option("--out", o.out, "output stem");
  plot->add_option("--title", o.title);
  plot->add_flag("--one-minus", o.one_minus, "plot 1-v for lower-is-better metrics");
  add_common(plot, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const std::string cfg_path = config_path_from_argv(argc, argv);
    if (!cfg_path.empty()) apply_config(app, sub, load_config(cfg_path), cfg_path);
    const std::string name = sub->get_name();
    if (name == "synth") return cmd_synth(o);
    if (name == "train") return cmd_train(o);
    if (name == "encode") return cmd_encode(o);
    if (name == "decode") return cmd_decode(o);
    if (name == "eval") return cmd_eval(o);
    if (name == "rdsweep") return cmd_rdsweep(o);
    if (name == "bdrate") return cmd_bdrate(o);
    if (name == "plot") return cmd_plot(o);
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const TruncatedPayloadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const ExternalCodecError& e) {
    std::cerr << "error: " << e.what() << " (status " << e.status() << ")\n" << e.diagnostics();
    return kCodec;
  } catch (const CodecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCodec;
  } catch (const BitstreamError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCodec;
  }
}
