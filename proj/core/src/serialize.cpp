// Model file layout (all integers little-endian):
//   "GAFN"  u16 version
//   u32 input_length
//   u8 n_conv1d, then per layer: u32 channels, u32 kernel
//   u32 lstm_hidden
//   u8 n_conv2d, then per layer: u32 channels, u32 kernel, u32 stride
//   u32 groups, u32 attn_dim, u32 mlp_hidden, u32 num_classes, u8 variant
//   u32 tensor count, then per tensor in ModelParams::tensors() order:
//     u8 rank, u32 dims[rank], f64 payload[product(dims)]
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gafnet/error.hpp"
#include "gafnet/model.hpp"

namespace gafnet::model {

namespace {

constexpr unsigned char kMagic[4] = {'G', 'A', 'F', 'N'};

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::size_t v) {
    if (v > UINT32_MAX) throw Error(ErrorKind::kInvalidArgument, "value does not fit in u32");
    put(v, 4);
  }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(const unsigned char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<unsigned char> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::size_t u32() { return static_cast<std::size_t>(get(4)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  void expect(const unsigned char* p, std::size_t n) {
    need(n);
    if (std::memcmp(bytes_.data() + pos_, p, n) != 0) throw Error(ErrorKind::kBadMagic, "not a GAFN model file");
    pos_ += n;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::kTruncatedPayload, "model file is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_model(const ModelConfig& cfg, const ModelParams& params) {
  Writer w;
  w.raw(kMagic, 4);
  w.u16(kFormatVersion);
  w.u32(cfg.input_length);
  w.u8(static_cast<std::uint8_t>(cfg.cnn1d_layers.size()));
  for (const auto& l : cfg.cnn1d_layers) {
    w.u32(l.channels);
    w.u32(l.kernel);
  }
  w.u32(cfg.lstm_hidden);
  w.u8(static_cast<std::uint8_t>(cfg.cnn2d_layers.size()));
  for (const auto& l : cfg.cnn2d_layers) {
    w.u32(l.channels);
    w.u32(l.kernel);
    w.u32(l.stride);
  }
  w.u32(cfg.groups);
  w.u32(cfg.attn_dim);
  w.u32(cfg.mlp_hidden);
  w.u32(cfg.num_classes);
  w.u8(static_cast<std::uint8_t>(cfg.variant));
  const auto tensors = params.tensors();
  w.u32(tensors.size());
  for (const ParamTensor* t : tensors) {
    w.u8(static_cast<std::uint8_t>(t->value.rank()));
    for (std::size_t d : t->value.shape()) w.u32(d);
    for (double v : t->value.data()) w.f64(v);
  }
  return w.take();
}

void save_model(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  const auto bytes = serialize_model(cfg, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIoFailure, "write failed for " + path.string());
}

LoadedModel deserialize_model(std::span<const unsigned char> bytes) {
  Reader r(bytes);
  r.expect(kMagic, 4);
  const std::uint16_t version = r.u16();
  if (version != kFormatVersion)
    throw Error(ErrorKind::kVersionMismatch, "model format version " + std::to_string(version) +
                                                 ", expected " + std::to_string(kFormatVersion));
  ModelConfig cfg;
  cfg.input_length = r.u32();
  cfg.cnn1d_layers.resize(r.u8());
  for (auto& l : cfg.cnn1d_layers) {
    l.channels = r.u32();
    l.kernel = r.u32();
  }
  cfg.lstm_hidden = r.u32();
  cfg.cnn2d_layers.resize(r.u8());
  for (auto& l : cfg.cnn2d_layers) {
    l.channels = r.u32();
    l.kernel = r.u32();
    l.stride = r.u32();
  }
  cfg.groups = r.u32();
  cfg.attn_dim = r.u32();
  cfg.mlp_hidden = r.u32();
  cfg.num_classes = r.u32();
  const std::uint8_t variant = r.u8();
  if (variant > static_cast<std::uint8_t>(Variant::kGafOnly))
    throw Error(ErrorKind::kUnknownVariant, "unknown variant code " + std::to_string(variant));
  cfg.variant = static_cast<Variant>(variant);

  LoadedModel out{cfg, zero_params(cfg)};
  auto tensors = out.params.tensors();
  if (r.u32() != tensors.size()) throw Error(ErrorKind::kShapeMismatch, "tensor count does not match config");
  for (ParamTensor* t : tensors) {
    Shape shape(r.u8());
    for (std::size_t& d : shape) d = r.u32();
    if (shape != t->value.shape())
      throw Error(ErrorKind::kShapeMismatch, "stored tensor " + shape_string(shape) + " but config implies " +
                                                 shape_string(t->value.shape()));
    for (double& v : t->value.data()) v = r.f64();
  }
  if (!r.done()) throw Error(ErrorKind::kShapeMismatch, "trailing bytes after the last tensor");
  return out;
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_model(bytes);
}

}  // namespace gafnet::model
