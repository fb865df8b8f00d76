#include "gafnet/gaf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "gafnet/error.hpp"

namespace gafnet::gaf {

RescaledSegment rescale(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::kInvalidArgument, "empty segment");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  RescaledSegment out;
  out.values.resize(values.size());
  if (!(hi > lo)) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t j = 0; j < values.size(); ++j) {
    out.values[j] = (values[j] - lo) * 2.0 / range - 1.0;
  }
  // Pin the extremes so they land exactly on the interval bounds.
  out.values[static_cast<std::size_t>(lo_it - values.begin())] = -1.0;
  out.values[static_cast<std::size_t>(hi_it - values.begin())] = 1.0;
  return out;
}

PhaseVector angular_encode(const RescaledSegment& r) {
  PhaseVector out;
  out.phases.reserve(r.values.size());
  for (double v : r.values) {
    if (!(v >= -1.0 - kClampTolerance && v <= 1.0 + kClampTolerance))
      throw Error(ErrorKind::kOutOfDomain, "rescaled value outside [-1, 1]: " + std::to_string(v));
    out.phases.push_back(std::acos(std::clamp(v, -1.0, 1.0)));
  }
  return out;
}

GafImage gaf_matrix(const PhaseVector& p) {
  const std::size_t w = p.phases.size();
  GafImage img(w);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t k = j; k < w; ++k) {
      const double v = std::cos(p.phases[j] + p.phases[k]);
      img(j, k) = v;
      img(k, j) = v;
    }
  }
  return img;
}

GafImage gaf_transform(std::span<const double> values) {
  return gaf_matrix(angular_encode(rescale(values)));
}

unsigned char quantize(double v) {
  const double clamped = std::clamp(v, -1.0, 1.0);
  return static_cast<unsigned char>(std::lround((clamped + 1.0) / 2.0 * 255.0));
}

void export_image(const GafImage& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  out << "P5\n" << img.side() << ' ' << img.side() << "\n255\n";
  std::string payload;
  payload.reserve(img.side() * img.side());
  for (double v : img.data()) payload.push_back(static_cast<char>(quantize(v)));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed for " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  PgmImage img;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in)
    throw Error(ErrorKind::kMalformedHeader, "not an 8-bit P5 file: " + path.string());
  in.get();  // single whitespace after maxval
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error(ErrorKind::kTruncatedPayload, "short PGM payload: " + path.string());
  return img;
}

}  // namespace gafnet::gaf
