#include "gafnet/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "gafnet/error.hpp"

namespace gafnet::dsp {

namespace {

using cplx = std::complex<double>;

void run_cascade(const std::vector<Biquad>& sections, std::vector<double>& x) {
  for (const Biquad& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace

void validate(const Signal& sig) {
  if (sig.samples.empty()) throw Error(ErrorKind::kInvalidArgument, "signal has no samples");
  if (!(sig.fs > 0.0) || !std::isfinite(sig.fs))
    throw Error(ErrorKind::kInvalidArgument, "sampling frequency must be positive");
  for (double v : sig.samples)
    if (!std::isfinite(v)) throw Error(ErrorKind::kInvalidArgument, "signal has non-finite sample");
}

FilterCoefficients design_butterworth(int order, double f_low, double f_high, double fs) {
  if (order < 1 || order > 8)
    throw Error(ErrorKind::kInvalidArgument, "filter order must be in [1, 8]");
  if (!(fs > 0.0) || !(f_low > 0.0) || !(f_low < f_high) || !(f_high < fs / 2.0))
    throw Error(ErrorKind::kInvalidCutoffs, "require 0 < f_low < f_high < fs/2");

  const double pi = std::numbers::pi;
  const double two_fs = 2.0 * fs;
  const double w_low = two_fs * std::tan(pi * f_low / fs);
  const double w_high = two_fs * std::tan(pi * f_high / fs);
  const double bandwidth = w_high - w_low;
  const double w0_sq = w_low * w_high;

  FilterCoefficients out;
  out.f_low = f_low;
  out.f_high = f_high;
  out.fs = fs;
  out.order = order;

  auto add_section = [&](cplx q1, cplx q2) {
    const cplx z1 = (two_fs + q1) / (two_fs - q1);
    const cplx z2 = (two_fs + q2) / (two_fs - q2);
    if (std::abs(z1) >= 1.0 || std::abs(z2) >= 1.0)
      throw Error(ErrorKind::kUnstableDesign, "designed pole on or outside the unit circle");
    const double gain = (bandwidth * two_fs / ((two_fs - q1) * (two_fs - q2))).real();
    Biquad s;
    s.b0 = gain;
    s.b1 = 0.0;
    s.b2 = -gain;
    s.a1 = -(z1 + z2).real();
    s.a2 = (z1 * z2).real();
    out.sections.push_back(s);
  };

  // Analog lowpass prototype poles in the upper half plane (plus the real
  // pole for odd orders); each maps to two bandpass poles.
  for (int k = 0; k < order; ++k) {
    const double theta = pi * (2.0 * k + order + 1) / (2.0 * order);
    const cplx p = std::polar(1.0, theta);
    if (p.imag() < -1e-12) continue;
    const cplx pb = p * bandwidth;
    const cplx disc = std::sqrt(pb * pb - 4.0 * w0_sq);
    const cplx q1 = (pb + disc) / 2.0;
    const cplx q2 = (pb - disc) / 2.0;
    if (std::abs(p.imag()) <= 1e-12) {
      add_section(q1, q2);  // real prototype pole: q1, q2 real or conjugate
    } else {
      add_section(q1, std::conj(q1));
      add_section(q2, std::conj(q2));
    }
  }
  return out;
}

Signal apply_filter(const FilterCoefficients& coeffs, const Signal& sig, FilterMode mode) {
  validate(sig);
  Signal out = sig;
  run_cascade(coeffs.sections, out.samples);
  if (mode == FilterMode::kForwardBackward) {
    std::reverse(out.samples.begin(), out.samples.end());
    run_cascade(coeffs.sections, out.samples);
    std::reverse(out.samples.begin(), out.samples.end());
  }
  return out;
}

std::vector<double> normalize(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorKind::kTooShort, "normalize needs at least 2 samples");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  std::vector<double> out(values.begin(), values.end());
  double ss = 0.0;
  for (double& v : out) {
    v -= mean;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / n);
  if (sd < 1e-12) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  for (double& v : out) v /= sd;
  // One corrective pass removes the rounding residue left in the mean.
  double residue = 0.0;
  for (double v : out) residue += v;
  residue /= n;
  for (double& v : out) v -= residue;
  return out;
}

Signal normalize(const Signal& sig) {
  validate(sig);
  return Signal{normalize(std::span<const double>(sig.samples)), sig.fs};
}

std::size_t segment_count(std::size_t length, std::size_t window, std::size_t overlap) {
  if (window < 1 || overlap >= window)
    throw Error(ErrorKind::kInvalidArgument, "require 0 <= overlap < window");
  if (window > length) throw Error(ErrorKind::kWindowTooLong, "window longer than signal");
  return (length - window) / (window - overlap) + 1;
}

std::vector<Segment> segment(const Signal& sig, std::size_t window, std::size_t overlap) {
  const std::size_t count = segment_count(sig.size(), window, overlap);
  const std::size_t stride = window - overlap;
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto first = sig.samples.begin() + static_cast<std::ptrdiff_t>(i * stride);
    out.push_back(Segment{std::vector<double>(first, first + static_cast<std::ptrdiff_t>(window)), i,
                          std::nullopt});
  }
  return out;
}

std::vector<Segment> preprocess(const Signal& raw, const PreprocessConfig& cfg) {
  validate(raw);
  const std::size_t window = cfg.window == 0 ? raw.size() : cfg.window;
  if (window < 2) throw Error(ErrorKind::kInvalidArgument, "window must be at least 2");
  Signal filtered = raw;
  if (cfg.enable_filter) {
    const auto coeffs = design_butterworth(cfg.order, cfg.f_low, cfg.f_high, raw.fs);
    filtered = apply_filter(coeffs, raw, cfg.filter_mode);
  }
  return segment(normalize(filtered), window, cfg.overlap);
}

}  // namespace gafnet::dsp
