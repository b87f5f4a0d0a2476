#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "bd_oracle.hpp"
#include "imt/imt.hpp"

using namespace imt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("imt_harness_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

Tensor<float> level_frame(std::size_t h, std::size_t w, unsigned seed) {
  std::mt19937 rng(seed);
  Tensor<float> f({3, h, w});
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = float(rng() % 256) / 255.0f;
  return f;
}

RDCurve curve(const std::string& label, const std::string& metric, std::vector<std::pair<double, double>> rq) {
  std::vector<RDPoint> pts;
  for (auto [r, q] : rq) pts.push_back({r, metric, q});
  return make_curve(label, pts);
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, IdenticalFramesHitThePsnrCapAndUnitSsim) {
  const auto a = level_frame(32, 32, 1);
  EXPECT_EQ(psnr(a, a), 99.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Metrics, OneLevelEverywhereGivesKnownPsnr) {
  Tensor<float> a({3, 16, 16}, 100 / 255.0f), b({3, 16, 16}, 101 / 255.0f);
  // MSE = 1 -> 10 log10(65025)
  EXPECT_NEAR(psnr(a, b), 48.1308036, 1e-6);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Metrics, SsimOfFlatImagesMatchesLuminanceTerm) {
  Tensor<float> a({3, 20, 20}, 80 / 255.0f), b({3, 20, 20}, 120 / 255.0f);
  const double c1 = std::pow(0.01 * 255, 2);
  const double expect = (2 * 80.0 * 120.0 + c1) / (80.0 * 80.0 + 120.0 * 120.0 + c1);
  EXPECT_NEAR(ssim(a, b), expect, 1e-9);
}

TEST(Metrics, DimensionMismatchThrows) {
  EXPECT_THROW(psnr(level_frame(16, 16, 1), level_frame(16, 17, 1)), DimensionError);
  EXPECT_THROW(ssim(level_frame(16, 16, 1), level_frame(17, 16, 1)), DimensionError);
  EXPECT_THROW(ssim(level_frame(8, 8, 1), level_frame(8, 8, 2)), DimensionError);
}

TEST(Metrics, BitrateAccounting) {
  EXPECT_NEAR(bitrate_kbps(1000, 25, 150), 1000 * 8.0 * 25 / 150 / 1000, 1e-12);
  EXPECT_NEAR(bitrate_kbps(1000, 25, 150), 1.333333333, 1e-9);
  EXPECT_DOUBLE_EQ(bitrate_kbps(2000, 25, 150), 2 * bitrate_kbps(1000, 25, 150));
  EXPECT_THROW(bitrate_kbps(10, 25, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// BD-rate

TEST(BdRate, IdenticalCurvesGiveZero) {
  const auto c = curve("a", "psnr", {{100, 30}, {200, 33}, {400, 35.5}, {800, 37}});
  EXPECT_EQ(bd_rate(c, c), 0.0);
}

TEST(BdRate, ConstantRateRatio) {
  const std::vector<std::pair<double, double>> base{{100, 30}, {180, 32.5}, {420, 35}, {900, 38}};
  const auto anchor = curve("a", "psnr", base);
  for (double k : {0.5, 0.3, 1.7, 2.0}) {
    auto scaled = base;
    for (auto& p : scaled) p.first *= k;
    EXPECT_NEAR(bd_rate(anchor, curve("t", "psnr", scaled)), (k - 1) * 100, 0.01) << "k " << k;
  }
}

TEST(BdRate, LowerIsBetterMetricIsNegated) {
  const std::vector<std::pair<double, double>> base{{100, 0.30}, {200, 0.22}, {400, 0.15}, {800, 0.10}};
  auto half = base;
  for (auto& p : half) p.first /= 2;
  const auto a = curve("a", "lpips", base), t = curve("t", "lpips", half);
  EXPECT_TRUE(a.lower_is_better);
  EXPECT_NEAR(bd_rate(a, t), -50.0, 0.01);
}

TEST(BdRate, MatchesDenseIntegrationOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto make = [&](const char* label, double offset) {
      std::array<double, 4> r, q;
      double rate = 50 + 100 * u(rng), qual = 28 + offset + 2 * u(rng);
      for (int i = 0; i < 4; ++i) {
        r[i] = rate;
        q[i] = qual;
        rate *= 1.3 + 1.5 * u(rng);
        qual += 0.5 + 3 * u(rng);
      }
      std::vector<std::pair<double, double>> rq;
      for (int i = 0; i < 4; ++i) rq.emplace_back(r[i], q[i]);
      return curve(label, "psnr", rq);
    };
    const auto a = make("a", 0), t = make("t", 1.0);
    double got;
    try {
      got = bd_rate(a, t);
    } catch (const DataError&) {
      continue;  // disjoint ranges are legitimate here
    }
    EXPECT_NEAR(got, imt::testing::trapezoid_bd_rate(a, t), 0.1) << "trial " << trial;
    ++compared;
  }
  EXPECT_GE(compared, 90);
}

TEST(BdRate, PchipInterpolatesAndStaysMonotone) {
  const Pchip p({0, 1, 2, 4}, {0, 1, 1.5, 4});
  EXPECT_DOUBLE_EQ(p(0), 0);
  EXPECT_DOUBLE_EQ(p(2), 1.5);
  EXPECT_DOUBLE_EQ(p(4), 4);
  double prev = -1;
  for (double x = 0; x <= 4; x += 0.01) {
    EXPECT_GE(p(x), prev - 1e-12);
    prev = p(x);
  }
  const Pchip line({0, 1, 3, 6}, {1, 3, 7, 13});
  EXPECT_NEAR(line.integrate(0, 6), 6 + 36.0, 1e-12);
  EXPECT_NEAR(line.integrate(0.5, 2.5), (2.5 * 2.5 + 2.5) - (0.25 + 0.5), 1e-12);
}

TEST(BdRate, PreconditionsAreExplicitErrors) {
  const auto a = curve("a", "psnr", {{100, 30}, {200, 31}, {300, 32}, {400, 33}});
  const auto far = curve("b", "psnr", {{100, 40}, {200, 41}, {300, 42}, {400, 43}});
  const auto three = curve("c", "psnr", {{100, 30}, {200, 31}, {300, 32}});
  EXPECT_THROW(bd_rate(a, far), DataError);
  EXPECT_THROW(bd_rate(a, three), DataError);
  EXPECT_THROW(bd_rate(a, curve("d", "ssim", {{1, .1}, {2, .2}, {3, .3}, {4, .4}})), DataError);
}

// ---------------------------------------------------------------------------
// RD curves, ingestion, plots

TEST(RdCurve, SortsAndRejectsDuplicates) {
  const auto c = curve("x", "psnr", {{300, 33}, {100, 30}, {200, 31}});
  EXPECT_EQ(c.points.front().bitrate_kbps, 100);
  EXPECT_EQ(c.points.back().bitrate_kbps, 300);
  EXPECT_TRUE(c.insufficient());
  EXPECT_THROW(curve("x", "psnr", {{100, 30}, {100, 31}}), DataError);
  EXPECT_THROW(curve("x", "psnr", {{0, 30}}), DataError);
}

TEST(Ingest, EmptyFileWarns) {
  std::istringstream in("# nothing\n\n");
  const auto r = ingest_external_metrics(in);
  EXPECT_TRUE(r.curves.empty());
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(Ingest, FourRowsBecomeOneSortedCurve) {
  std::istringstream in("sequence_id,bitrate_kbps,metric_name,value\n"
                        "s1,40,DISTS,0.2\ns1,10,DISTS,0.4\ns1,20,DISTS,0.3\ns1,80,DISTS,0.1\n");
  const auto r = ingest_external_metrics(in);
  ASSERT_EQ(r.curves.size(), 1u);
  const auto& c = r.curves[0];
  EXPECT_EQ(c.label, "s1");
  EXPECT_EQ(c.metric_name, "dists");
  EXPECT_TRUE(c.lower_is_better);
  ASSERT_EQ(c.points.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LT(c.points[i - 1].bitrate_kbps, c.points[i].bitrate_kbps);
}

TEST(Ingest, TabAndWhitespaceDelimitersAndGrouping) {
  std::istringstream tabs("a\t1\tpsnr\t30\na\t2\tpsnr\t31\nb\t1\tpsnr\t29\na\t1\tssim\t0.9\n");
  const auto r = ingest_external_metrics(tabs);
  EXPECT_EQ(r.curves.size(), 3u);
  std::istringstream spaces("a 1 psnr 30\na 2 psnr 31\n");
  EXPECT_EQ(ingest_external_metrics(spaces).curves.at(0).points.size(), 2u);
}

TEST(Ingest, DuplicateBitrateNamesBothLines) {
  std::istringstream in("s,10,psnr,30\ns,20,psnr,31\ns,10,psnr,32\n");
  try {
    ingest_external_metrics(in, "f.csv");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string w = e.what();
    EXPECT_NE(w.find("duplicate bitrate 10"), std::string::npos) << w;
    EXPECT_NE(w.find("lines 1 and 3"), std::string::npos) << w;
  }
}

TEST(Ingest, MalformedRowsReportLineNumbers) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"s,10,psnr,30\ns,abc,psnr,31\n", "f.csv:2"},
      {"s,10,psnr,30\n\ns,20,psnr\n", "f.csv:3"},
      {"s,10,psnr,30\ns,20,psnr,x\n", "f.csv:2"},
      {"s,-1,psnr,30\n", "f.csv:1"},
      {"s,10,psnr,nan\n", "f.csv:1"}};
  for (const auto& [text, where] : cases) {
    std::istringstream in(text);
    try {
      ingest_external_metrics(in, "f.csv");
      ADD_FAILURE() << "accepted: " << text;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(where), std::string::npos) << e.what();
    }
  }
}

TEST(Plot, TwoPointCurveWritesHeaderAndTwoRows) {
  const auto dir = scratch("plot2");
  const auto f = emit_plot({curve("c", "psnr", {{10, 30}, {20, 32}})}, dir / "rd");
  std::istringstream csv(slurp(f.data));
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "label,bitrate_kbps,metric,value");
  EXPECT_NE(slurp(f.svg).find("<svg"), std::string::npos);
}

TEST(Plot, DeterministicBytesAndCsvReingests) {
  const auto dir = scratch("plotdet");
  const std::vector<RDCurve> cs{curve("a", "psnr", {{10, 30}, {20, 32}, {40, 34}}),
                                curve("b", "psnr", {{12, 29}, {25, 31}})};
  const auto f1 = emit_plot(cs, dir / "one");
  const auto f2 = emit_plot(cs, dir / "two");
  EXPECT_EQ(slurp(f1.data), slurp(f2.data));
  EXPECT_EQ(slurp(f1.svg), slurp(f2.svg));
  const auto back = ingest_external_metrics(f1.data);
  ASSERT_EQ(back.curves.size(), 2u);
  EXPECT_EQ(back.curves[0].points.size(), 3u);
  EXPECT_DOUBLE_EQ(back.curves[0].points[2].metric_value, 34);
}

TEST(Plot, SevenCurvesGiveSevenLegendEntries) {
  std::vector<RDCurve> cs;
  for (int i = 0; i < 7; ++i)
    cs.push_back(curve("codec" + std::to_string(i), "dists", {{10.0 + i, 0.3 - 0.01 * i}, {30.0 + i, 0.2}}));
  const auto dir = scratch("plot7");
  PlotOptions o;
  o.one_minus_lower_is_better = true;
  const std::string svg = slurp(emit_plot(cs, dir / "rd", o).svg);
  std::size_t n = 0;
  for (std::size_t pos = 0; (pos = svg.find("class=\"legend-entry\"", pos)) != std::string::npos; ++pos) ++n;
  EXPECT_EQ(n, 7u);
  EXPECT_NE(svg.find("1-dists"), std::string::npos);
}

TEST(Plot, ErrorsAreTyped) {
  EXPECT_THROW(emit_plot({}, scratch("plote") / "x"), DataError);
  EXPECT_THROW(emit_plot({curve("c", "psnr", {{1, 2}})}, "/nonexistent/dir/rd"), DataError);
}

// ---------------------------------------------------------------------------
// Video files and config text

TEST(VideoIo, PpmDirectoryRoundtripIsExactAndNumericallyOrdered) {
  const auto dir = scratch("ppm");
  std::vector<Tensor<float>> frames;
  for (unsigned i = 0; i < 12; ++i) frames.push_back(level_frame(8, 10, i));
  for (std::size_t i = 0; i < frames.size(); ++i) write_ppm(dir / ("f" + std::to_string(i) + ".ppm"), frames[i]);
  const auto back = read_video(dir);
  ASSERT_EQ(back.size(), frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_EQ(back[i].vec(), frames[i].vec()) << i;
}

TEST(VideoIo, RawPlanarRoundtripAndSidecarChecks) {
  const auto dir = scratch("raw");
  std::vector<Tensor<float>> frames{level_frame(6, 4, 1), level_frame(6, 4, 2), level_frame(6, 4, 3)};
  write_video(dir / "v.rgb", frames);
  EXPECT_EQ(slurp(dir / "v.rgb.dims"), "width=4\nheight=6\nframes=3\n");
  const auto back = read_video(dir / "v.rgb");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].vec(), frames[2].vec());
  // planar: first bytes are the R plane of frame 0
  EXPECT_EQ(static_cast<unsigned char>(slurp(dir / "v.rgb")[1]), std::lround(frames[0][1] * 255));

  spit(dir / "v.rgb.dims", "width=4\nheight=6\nframes=2\n");
  EXPECT_THROW(read_video(dir / "v.rgb"), DataError);
  spit(dir / "v.rgb.dims", "width=5\nheight=6\n");
  EXPECT_THROW(read_video(dir / "v.rgb"), DataError);
  spit(dir / "v.rgb.dims", "width 4\n");
  EXPECT_THROW(read_video(dir / "v.rgb"), DataError);
  fs::remove(dir / "v.rgb.dims");
  EXPECT_THROW(read_video(dir / "v.rgb"), DataError);
}

TEST(VideoIo, BadInputsAreDataErrors) {
  const auto dir = scratch("badppm");
  spit(dir / "frame_0.ppm", "P6\n4 4\n255\nabc");
  EXPECT_THROW(read_video(dir), DataError);
  spit(dir / "frame_0.ppm", "P3\n1 1\n255\n0 0 0\n");
  EXPECT_THROW(read_video(dir), DataError);
  EXPECT_THROW(read_video(dir / "missing"), DataError);
  EXPECT_THROW(read_video(scratch("emptydir")), DataError);
}

TEST(ConfigText, ParsesCommentsQuotesAndRejectsJunk) {
  std::istringstream ok("# run\nqp = 32\n  qscale=16  \ncmd=\"a b\"\n\n");
  const auto m = parse_config(ok);
  EXPECT_EQ(m.at("qp"), "32");
  EXPECT_EQ(m.at("qscale"), "16");
  EXPECT_EQ(m.at("cmd"), "a b");
  std::istringstream bad("qp=1\nnoequals\n");
  try {
    parse_config(bad, "c.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("c.cfg:2"), std::string::npos);
  }
  std::istringstream dup("qp=1\nqp=2\n");
  EXPECT_THROW(parse_config(dup), ConfigError);
}

// ---------------------------------------------------------------------------
// Sweeps

class Sweep : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new Model<float>(make_model<float>(reference_config(64), 3));
    SynthClipConfig cfg;
    cfg.frames_per_clip = 6;
    clip_ = new std::vector<Tensor<float>>(synth_dataset(cfg, 1, 5)[0]);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete clip_;
  }
  static Model<float>* model_;
  static std::vector<Tensor<float>>* clip_;
};
Model<float>* Sweep::model_ = nullptr;
std::vector<Tensor<float>>* Sweep::clip_ = nullptr;

TEST_F(Sweep, DefaultQpsAndMonotoneBitrate) {
  EXPECT_EQ(default_sweep_qps(), (std::vector<int>{22, 32, 42, 52}));
  const auto r = rd_sweep(*clip_, *model_, default_sweep_qps(), {64.0});
  ASSERT_EQ(r.points.size(), 4u);
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LE(r.points[i].kbps, r.points[i - 1].kbps);
  ASSERT_EQ(r.curves.size(), 2u);  // psnr, ssim
  EXPECT_EQ(r.curves[0].metric_name, "psnr");
  EXPECT_EQ(r.curves[1].metric_name, "ssim");
}

TEST_F(Sweep, SinglePairIsFlaggedInsufficient) {
  const auto r = rd_sweep(*clip_, *model_, {32}, {64.0});
  ASSERT_EQ(r.curves.size(), 2u);
  EXPECT_EQ(r.curves[0].points.size(), 1u);
  EXPECT_TRUE(r.curves[0].insufficient());
  bool flagged = false;
  for (const auto& w : r.warnings) flagged = flagged || w.find("insufficient") != std::string::npos;
  EXPECT_TRUE(flagged);
}

TEST_F(Sweep, FailingPointWarnsAndOthersContinue) {
  SweepOptions o;
  o.with_ssim = false;
  const auto r = rd_sweep(*clip_, *model_, {22, 99, 42}, {64.0}, o);
  ASSERT_EQ(r.points.size(), 3u);
  EXPECT_TRUE(r.points[0].ok);
  EXPECT_FALSE(r.points[1].ok);
  EXPECT_FALSE(r.points[1].error.empty());
  EXPECT_TRUE(r.points[2].ok);
  EXPECT_EQ(r.curves.at(0).points.size(), 2u);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(SmokeMatrix, EncodeDecodePsnrOnEverySupportedSize) {
  for (std::size_t size : supported_input_sizes()) {
    Model<float> m = make_model<float>(reference_config(size), 1);
    SynthClipConfig cfg;
    cfg.resolution = size;
    cfg.frames_per_clip = 2;
    const auto clip = synth_dataset(cfg, 1, 11)[0];
    const auto bytes = write_bitstream(encode_sequence(clip, m));
    const auto out = decode_sequence(read_bitstream(bytes), m);
    ASSERT_EQ(out.size(), 2u);
    const double p = sequence_quality(clip, out).first;
    EXPECT_TRUE(std::isfinite(p)) << size;
    EXPECT_GT(p, 0) << size;
  }
}

// ---------------------------------------------------------------------------
// Command line: exit-code contract per command

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("cli"));
    Model<float> m = make_model<float>(reference_config(64), 1);
    save_checkpoint(*dir_ / "model.imtw", m);
    ASSERT_EQ(run("synth --out " + q(*dir_ / "clips") + " --clips 1 --frames 4 --seed 3"), 0);
    ASSERT_EQ(run("synth --out " + q(*dir_ / "raw") + " --clips 1 --frames 3 --format raw"), 0);
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
  }

  static std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

  static int run(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string("'") + IMT_CLI_PATH + "' " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return -1;
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
    const int status = pclose(pipe);
    if (output) *output = out;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  static std::string ck() { return " --checkpoint " + q(*dir_ / "model.imtw"); }
  static std::string clip() { return q(*dir_ / "clips" / "clip_000"); }

  static fs::path* dir_;
};
fs::path* Cli::dir_ = nullptr;

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("encode --no-such-flag"), 1);
  EXPECT_EQ(run("encode " + clip() + ck()), 1);  // --out missing
  EXPECT_EQ(run("encode " + clip() + ck() + " --out x --intra other"), 1);
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run("rdsweep --help"), 0);
}

TEST_F(Cli, SynthAndTrain) {
  EXPECT_EQ(run("synth --out " + q(*dir_ / "s0") + " --clips 0"), 1);
  EXPECT_EQ(run("synth --out " + q(*dir_ / "s1") + " --clips 1 --resolution 50"), 0);
  std::string out;
  EXPECT_EQ(run("train --out " + q(*dir_ / "run") + " --steps 1 --batch 1 --eval-clips 1 --eval-every 0", &out), 0)
      << out;
  EXPECT_TRUE(fs::exists(*dir_ / "run" / "checkpoint.imtw"));
  EXPECT_TRUE(fs::exists(*dir_ / "run" / "metrics.tsv"));
  EXPECT_EQ(run("train --out " + q(*dir_ / "run") + " --steps 2 --batch 1 --eval-clips 1 --eval-every 0 --checkpoint " +
                q(*dir_ / "run" / "checkpoint.imtw")),
            0);
  EXPECT_EQ(run("train --out " + q(*dir_ / "r2") + " --resolution 50"), 1);
}

TEST_F(Cli, EncodeDecodeRoundtrip) {
  const auto s = *dir_ / "s.imtc";
  EXPECT_EQ(run("encode " + clip() + ck() + " --out " + q(s) + " --qp 32 --qscale 32"), 0);
  EXPECT_EQ(run("decode " + q(s) + ck() + " --out " + q(*dir_ / "dec")), 0);
  EXPECT_EQ(read_video(*dir_ / "dec").size(), 4u);
  EXPECT_EQ(run("decode " + q(s) + ck() + " --out " + q(*dir_ / "dec.rgb")), 0);
  EXPECT_EQ(read_video(*dir_ / "dec.rgb").size(), 4u);
  EXPECT_EQ(run("encode " + q(*dir_ / "raw" / "clip_000.rgb") + ck() + " --out " + q(*dir_ / "r.imtc")), 0);
}

TEST_F(Cli, DataErrorsExitTwo) {
  EXPECT_EQ(run("encode " + q(*dir_ / "nothing") + ck() + " --out x"), 2);
  spit(*dir_ / "junk.imtw", "not a checkpoint");
  EXPECT_EQ(run("encode " + clip() + " --checkpoint " + q(*dir_ / "junk.imtw") + " --out x"), 2);
  const auto s = *dir_ / "d.imtc";
  ASSERT_EQ(run("encode " + clip() + ck() + " --out " + q(s)), 0);
  std::string bytes = slurp(s);
  spit(*dir_ / "short.imtc", bytes.substr(0, 20));
  EXPECT_EQ(run("decode " + q(*dir_ / "short.imtc") + ck() + " --out " + q(*dir_ / "o")), 2);
  bytes[1] ^= 0x40;
  spit(*dir_ / "magic.imtc", bytes);
  EXPECT_EQ(run("decode " + q(*dir_ / "magic.imtc") + ck() + " --out " + q(*dir_ / "o")), 2);
  // stream bound to another checkpoint
  Model<float> other = make_model<float>(reference_config(64), 2);
  save_checkpoint(*dir_ / "other.imtw", other);
  EXPECT_EQ(run("decode " + q(s) + " --checkpoint " + q(*dir_ / "other.imtw") + " --out " + q(*dir_ / "o")), 2);
  EXPECT_EQ(run("decode " + q(s) + " --checkpoint " + q(*dir_ / "other.imtw") + " --out " + q(*dir_ / "o") +
                " --ignore-model-hash"),
            0);
}

TEST_F(Cli, CodecErrorsExitThree) {
  EXPECT_EQ(run("encode " + clip() + ck() + " --out " + q(*dir_ / "e.imtc") + " --intra external --extern-cmd false"),
            3);
  std::string out;
  EXPECT_EQ(run("eval " + clip() + ck() + " --intra external --extern-cmd 'echo oops; exit 7'", &out), 3);
  EXPECT_NE(out.find("oops"), std::string::npos) << out;
}

TEST_F(Cli, ExternalIntraRoundtripThroughCopy) {
  const std::string copy = " --intra external --extern-cmd 'cp {input} {output}' --extern-decode-cmd 'cp {input} {output}'";
  EXPECT_EQ(run("encode " + clip() + ck() + " --out " + q(*dir_ / "x.imtc") + copy), 0);
  EXPECT_EQ(run("decode " + q(*dir_ / "x.imtc") + ck() + " --out " + q(*dir_ / "xd") +
                " --extern-decode-cmd 'cp {input} {output}'"),
            0);
}

TEST_F(Cli, EvalReportsRateAndQuality) {
  std::string out;
  ASSERT_EQ(run("eval " + clip() + ck(), &out), 0) << out;
  for (const char* key : {"kbps ", "psnr ", "ssim ", "inter_bytes_per_frame "})
    EXPECT_NE(out.find(key), std::string::npos) << key;
}

TEST_F(Cli, ConfigFileIsOverriddenByFlags) {
  spit(*dir_ / "bad_qp.cfg", "# shared settings\nqp=99\nsteps=12\n");
  EXPECT_EQ(run("eval " + clip() + ck() + " --no-ssim --config " + q(*dir_ / "bad_qp.cfg")), 1);
  EXPECT_EQ(run("eval " + clip() + ck() + " --no-ssim --qp 30 --config " + q(*dir_ / "bad_qp.cfg")), 0);
  spit(*dir_ / "typo.cfg", "qpp=30\n");
  EXPECT_EQ(run("eval " + clip() + ck() + " --config " + q(*dir_ / "typo.cfg")), 1);
  spit(*dir_ / "garbled.cfg", "qp 30\n");
  EXPECT_EQ(run("eval " + clip() + ck() + " --config " + q(*dir_ / "garbled.cfg")), 1);
  EXPECT_EQ(run("eval " + clip() + ck() + " --config " + q(*dir_ / "absent.cfg")), 1);
  spit(*dir_ / "ck.cfg", "checkpoint=" + (*dir_ / "model.imtw").string() + "\nno_ssim=true\n");
  EXPECT_EQ(run("eval " + clip() + " --config " + q(*dir_ / "ck.cfg")), 0);
}

TEST_F(Cli, RdsweepBdrateAndPlot) {
  std::string out;
  ASSERT_EQ(run("rdsweep " + clip() + ck() + " --qps 22,42 --no-ssim --out " + q(*dir_ / "rd"), &out), 0) << out;
  EXPECT_NE(out.find("insufficient"), std::string::npos) << out;
  EXPECT_TRUE(fs::exists(*dir_ / "rd.csv"));
  EXPECT_TRUE(fs::exists(*dir_ / "rd.svg"));
  EXPECT_EQ(run("rdsweep " + clip() + ck() + " --qps 0 --no-ssim"), 3);

  spit(*dir_ / "anchor.csv", "s,100,psnr,30\ns,200,psnr,32\ns,400,psnr,34\ns,800,psnr,36\n");
  spit(*dir_ / "test.csv", "s,50,psnr,30\ns,100,psnr,32\ns,200,psnr,34\ns,400,psnr,36\n");
  ASSERT_EQ(run("bdrate --anchor " + q(*dir_ / "anchor.csv") + " --test " + q(*dir_ / "test.csv"), &out), 0) << out;
  EXPECT_NE(out.find("-50.000%"), std::string::npos) << out;
  spit(*dir_ / "far.csv", "s,50,psnr,50\ns,100,psnr,52\ns,200,psnr,54\ns,400,psnr,56\n");
  EXPECT_EQ(run("bdrate --anchor " + q(*dir_ / "anchor.csv") + " --test " + q(*dir_ / "far.csv")), 2);
  EXPECT_EQ(run("bdrate --anchor " + q(*dir_ / "anchor.csv")), 1);

  EXPECT_EQ(run("plot " + q(*dir_ / "anchor.csv") + " " + q(*dir_ / "test.csv") + " --out " + q(*dir_ / "p")), 0);
  EXPECT_TRUE(fs::exists(*dir_ / "p.svg"));
  spit(*dir_ / "empty.csv", "");
  ASSERT_EQ(run("plot " + q(*dir_ / "empty.csv") + " --out " + q(*dir_ / "p2"), &out), 0);
  EXPECT_NE(out.find("warning"), std::string::npos);
  spit(*dir_ / "broken.csv", "s,100,psnr,30\ns,xx,psnr,31\n");
  ASSERT_EQ(run("plot " + q(*dir_ / "broken.csv") + " --out " + q(*dir_ / "p3"), &out), 2);
  EXPECT_NE(out.find(":2"), std::string::npos) << out;
}
