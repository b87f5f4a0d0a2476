#pragma once

// Encode/decode a sequence at every (qp, qscale) pair and collect RD points.

#include <algorithm>
#include <string>
#include <vector>

#include "imt/codec.hpp"
#include "imt/metrics.hpp"
#include "imt/rd.hpp"

namespace imt {

inline const std::vector<int>& default_sweep_qps() {
  static const std::vector<int> q{22, 32, 42, 52};
  return q;
}

struct SweepPoint {
  int qp = 0;
  double qscale = 0;
  bool ok = false;
  std::string error;
  std::size_t total_bytes = 0, key_bytes = 0, residual_bytes = 0;
  double kbps = 0, psnr = 0, ssim = 0;
};

struct SweepResult {
  std::vector<SweepPoint> points;   // ordered by (qscale, qp) as given
  std::vector<RDCurve> curves;      // one per (qscale, metric) with at least one good point
  std::vector<std::string> warnings;
};

struct SweepOptions {
  IntraCodecConfig intra;  // kind and commands; qp is overridden per point
  std::uint16_t fps_num = 25, fps_den = 1;
  bool with_ssim = true;
  std::string label = "imt";
};

/// Mean PSNR and SSIM over all frames.
inline std::pair<double, double> sequence_quality(const std::vector<Tensor<float>>& a,
                                                  const std::vector<Tensor<float>>& b, bool with_ssim = true) {
  if (a.size() != b.size())
    throw DimensionError("quality: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " frames");
  double p = 0, s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    p += psnr(a[i], b[i]);
    if (with_ssim) s += ssim(a[i], b[i]);
  }
  return {p / a.size(), with_ssim ? s / a.size() : 0.0};
}

/// Points that fail are kept with their error text and skipped in the curves.
inline SweepResult rd_sweep(const std::vector<Tensor<float>>& frames, Model<float>& model,
                            const std::vector<int>& qps, const std::vector<double>& qscales,
                            const SweepOptions& opt = {}) {
  if (qps.empty() || qscales.empty()) throw ConfigError("rd_sweep needs at least one qp and one qscale");
  SweepResult r;
  const double fps = static_cast<double>(opt.fps_num) / opt.fps_den;
  for (double qs : qscales) {
    std::vector<RDPoint> pp, ps;
    for (int qp : qps) {
      SweepPoint pt;
      pt.qp = qp;
      pt.qscale = qs;
      try {
        EncodeOptions eo;
        eo.qscale = qs;
        eo.intra = opt.intra;
        eo.intra.qp = qp;
        eo.intra.validate();
        eo.fps_num = opt.fps_num;
        eo.fps_den = opt.fps_den;
        const Bitstream bs = encode_sequence(frames, model, eo);
        const auto bytes = write_bitstream(bs);
        DecodeOptions d;
        d.intra = opt.intra;
        const auto decoded = decode_sequence(read_bitstream(bytes), model, d);
        pt.total_bytes = bytes.size();
        pt.key_bytes = bs.key_payload.size();
        pt.residual_bytes = bs.residual_payload.size();
        pt.kbps = bitrate_kbps(bytes.size(), fps, frames.size());
        std::tie(pt.psnr, pt.ssim) = sequence_quality(frames, decoded, opt.with_ssim);
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.error = e.what();
        r.warnings.push_back("qp " + std::to_string(qp) + " qscale " + format_number(qs) + ": " + e.what());
      }
      if (pt.ok) {
        const bool dup = std::any_of(pp.begin(), pp.end(), [&](const RDPoint& x) { return x.bitrate_kbps == pt.kbps; });
        if (dup) {
          r.warnings.push_back("qp " + std::to_string(qp) + " qscale " + format_number(qs) +
                               " repeats bitrate " + format_number(pt.kbps) + " kbps; left out of the curve");
        } else {
          pp.push_back({pt.kbps, "psnr", pt.psnr});
          if (opt.with_ssim) ps.push_back({pt.kbps, "ssim", pt.ssim});
        }
      }
      r.points.push_back(pt);
    }
    const std::string label = opt.label + " qscale=" + format_number(qs);
    for (auto* pts : {&pp, &ps}) {
      if (pts->empty()) continue;
      RDCurve c = make_curve(label, *pts);
      if (c.insufficient())
        r.warnings.push_back("curve '" + label + "' (" + c.metric_name + ") has " + std::to_string(c.points.size()) +
                             " point(s): insufficient for BD-rate");
      r.curves.push_back(std::move(c));
    }
  }
  return r;
}

}  // namespace imt
