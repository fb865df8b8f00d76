#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "gafnet/dsp.hpp"

namespace gafnet::gaf {

// Values in [-1, 1]; min -> -1 and max -> +1 unless the source was constant.
struct RescaledSegment {
  std::vector<double> values;
};

// Angles in [0, pi].
struct PhaseVector {
  std::vector<double> phases;
};

// Symmetric w x w summation field, row-major.
class GafImage {
 public:
  GafImage() = default;
  explicit GafImage(std::size_t side) : side_(side), data_(side * side, 0.0) {}

  std::size_t side() const noexcept { return side_; }
  double operator()(std::size_t j, std::size_t k) const { return data_[j * side_ + k]; }
  double& operator()(std::size_t j, std::size_t k) { return data_[j * side_ + k]; }
  std::span<const double> data() const noexcept { return data_; }

 private:
  std::size_t side_ = 0;
  std::vector<double> data_;
};

inline constexpr double kClampTolerance = 1e-9;

RescaledSegment rescale(std::span<const double> values);
inline RescaledSegment rescale(const dsp::Segment& seg) { return rescale(seg.values); }

PhaseVector angular_encode(const RescaledSegment& r);
GafImage gaf_matrix(const PhaseVector& p);

GafImage gaf_transform(std::span<const double> values);
inline GafImage gaf_transform(const dsp::Segment& seg) { return gaf_transform(seg.values); }

// Binary PGM ("P5", maxval 255); v in [-1, 1] maps to round((v + 1) / 2 * 255).
void export_image(const GafImage& img, const std::filesystem::path& path);

// Reads a P5 file written by export_image, returning raw pixel bytes.
struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

unsigned char quantize(double v);

}  // namespace gafnet::gaf
