#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace gafnet::dsp {

// A sampled waveform. Samples are finite, nonempty; fs > 0.
struct Signal {
  std::vector<double> samples;
  double fs = 1.0;

  std::size_t size() const noexcept { return samples.size(); }
};

// Throws Error(kInvalidArgument) when the Signal invariants do not hold.
void validate(const Signal& sig);

struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;  // a0 == 1
};

struct FilterCoefficients {
  std::vector<Biquad> sections;
  double f_low = 0;
  double f_high = 0;
  double fs = 0;
  int order = 0;
};

enum class FilterMode { kSinglePass, kForwardBackward };

struct Segment {
  std::vector<double> values;
  std::size_t source_index = 0;
  std::optional<int> label;
};

struct PreprocessConfig {
  double f_low = 0.5;
  double f_high = 40.0;
  int order = 4;
  std::size_t window = 0;   // 0 means "whole signal"
  std::size_t overlap = 0;
  FilterMode filter_mode = FilterMode::kSinglePass;
  bool enable_filter = false;

  bool operator==(const PreprocessConfig&) const = default;
};

// Butterworth bandpass of prototype order `order` (1..8) as a cascade of
// `order` second-order sections, via bilinear transform with pre-warping.
FilterCoefficients design_butterworth(int order, double f_low, double f_high, double fs);

// Runs the biquad cascade (transposed direct form II, zero initial state).
Signal apply_filter(const FilterCoefficients& coeffs, const Signal& sig,
                    FilterMode mode = FilterMode::kSinglePass);

// Zero mean, unit population standard deviation. A signal whose standard
// deviation is below 1e-12 is returned mean-subtracted without scaling.
Signal normalize(const Signal& sig);
std::vector<double> normalize(std::span<const double> values);

// Fixed-length windows with stride window - overlap; a trailing partial
// window is dropped.
std::vector<Segment> segment(const Signal& sig, std::size_t window, std::size_t overlap);

std::size_t segment_count(std::size_t length, std::size_t window, std::size_t overlap);

// filter (optional) -> normalize -> segment.
std::vector<Segment> preprocess(const Signal& raw, const PreprocessConfig& cfg);

}  // namespace gafnet::dsp
