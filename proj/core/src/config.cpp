#include "gafnet/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "gafnet/error.hpp"

namespace gafnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorKind::kConfig, "invalid value '" + std::string(value) + "' for " + std::string(key));
}

std::size_t to_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) bad_value(key, v);
  return out;
}

std::size_t auto_or_size(std::string_view key, std::string_view v) { return v == "auto" ? 0 : to_size(key, v); }

std::vector<std::vector<std::size_t>> layer_list(std::string_view key, std::string_view v, std::size_t fields) {
  std::vector<std::vector<std::size_t>> layers;
  if (v == "none") return layers;
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto end = std::min(v.find(',', start), v.size());
    const auto item = trim(v.substr(start, end - start));
    std::vector<std::size_t> parts;
    std::size_t p = 0;
    while (p <= item.size()) {
      const auto q = std::min(item.find(':', p), item.size());
      parts.push_back(to_size(key, trim(item.substr(p, q - p))));
      p = q + 1;
    }
    if (parts.size() != fields) bad_value(key, v);
    layers.push_back(std::move(parts));
    start = end + 1;
  }
  return layers;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string_view filter_mode_name(dsp::FilterMode m) {
  return m == dsp::FilterMode::kSinglePass ? "single_pass" : "forward_backward";
}

std::string_view filter_switch_name(FilterSwitch f) {
  switch (f) {
    case FilterSwitch::kAuto: return "auto";
    case FilterSwitch::kOn: return "true";
    case FilterSwitch::kOff: return "false";
  }
  return "auto";
}

}  // namespace

RunConfig::RunConfig() {
  model.input_length = 0;
  model.num_classes = 0;
}

void RunConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(ErrorKind::kConfig, msg); };
  if (!(preprocess.f_low > 0) || !(preprocess.f_high > preprocess.f_low)) fail("need 0 < preprocess.f_low < preprocess.f_high");
  if (preprocess.order < 1 || preprocess.order > 8) fail("preprocess.order must be in 1..8");
  if (preprocess.window != 0 && preprocess.overlap >= preprocess.window)
    fail("preprocess.overlap must be smaller than preprocess.window");
  if (train.epochs < 1) fail("train.epochs must be at least 1");
  if (train.batch_size < 1) fail("train.batch_size must be at least 1");
  if (!(train.schedule.initial_lr > 0)) fail("schedule.initial_lr must be positive");
  if (!(train.schedule.decay >= 0)) fail("schedule.decay must be non-negative");
  if (!(validation_fraction > 0 && validation_fraction < 1)) fail("train.validation_fraction must be in (0,1)");
  if (!(test_fraction > 0 && test_fraction < 1)) fail("data.test_fraction must be in (0,1)");
  if (beat_window < 2 || beat_window % 2 != 0) fail("data.beat_window must be even and at least 2");
  model::ModelConfig probe = model;
  if (probe.input_length == 0) probe.input_length = 96;
  if (probe.num_classes == 0) probe.num_classes = 2;
  try {
    probe.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
}

void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  auto& p = cfg.preprocess;
  auto& m = cfg.model;
  auto& t = cfg.train;
  auto& s = cfg.train.schedule;
  if (key == "preprocess.f_low") p.f_low = to_double(key, value);
  else if (key == "preprocess.f_high") p.f_high = to_double(key, value);
  else if (key == "preprocess.order") p.order = static_cast<int>(to_size(key, value));
  else if (key == "preprocess.window") p.window = auto_or_size(key, value);
  else if (key == "preprocess.overlap") p.overlap = to_size(key, value);
  else if (key == "preprocess.filter_mode") {
    if (value == "single_pass") p.filter_mode = dsp::FilterMode::kSinglePass;
    else if (value == "forward_backward") p.filter_mode = dsp::FilterMode::kForwardBackward;
    else bad_value(key, value);
  } else if (key == "preprocess.enable_filter") {
    if (value == "auto") cfg.filter = FilterSwitch::kAuto;
    else if (value == "true") cfg.filter = FilterSwitch::kOn;
    else if (value == "false") cfg.filter = FilterSwitch::kOff;
    else bad_value(key, value);
  } else if (key == "model.input_length") m.input_length = auto_or_size(key, value);
  else if (key == "model.num_classes") m.num_classes = auto_or_size(key, value);
  else if (key == "model.cnn1d") {
    m.cnn1d_layers.clear();
    for (const auto& l : layer_list(key, value, 2)) m.cnn1d_layers.push_back({l[0], l[1]});
  } else if (key == "model.lstm_hidden") m.lstm_hidden = to_size(key, value);
  else if (key == "model.cnn2d") {
    m.cnn2d_layers.clear();
    for (const auto& l : layer_list(key, value, 3)) m.cnn2d_layers.push_back({l[0], l[1], l[2]});
  } else if (key == "model.groups") m.groups = to_size(key, value);
  else if (key == "model.attn_dim") m.attn_dim = to_size(key, value);
  else if (key == "model.mlp_hidden") m.mlp_hidden = to_size(key, value);
  else if (key == "model.variant") {
    try {
      m.variant = model::parse_variant(value);
    } catch (const Error&) {
      bad_value(key, value);
    }
  } else if (key == "train.epochs") t.epochs = to_size(key, value);
  else if (key == "train.batch_size") t.batch_size = to_size(key, value);
  else if (key == "train.seed") t.seed = to_u64(key, value);
  else if (key == "train.checkpoint") {
    if (value == "best_validation") t.checkpoint = optim::CheckpointPolicy::kBestValidation;
    else if (value == "last") t.checkpoint = optim::CheckpointPolicy::kLast;
    else bad_value(key, value);
  } else if (key == "train.validation_fraction") cfg.validation_fraction = to_double(key, value);
  else if (key == "schedule.kind") {
    if (value == "inverse_sqrt") s.kind = optim::ScheduleKind::kInverseSqrt;
    else if (value == "cosine") s.kind = optim::ScheduleKind::kCosine;
    else bad_value(key, value);
  } else if (key == "schedule.initial_lr") s.initial_lr = to_double(key, value);
  else if (key == "schedule.decay") s.decay = to_double(key, value);
  else if (key == "schedule.total_steps") s.total_steps = auto_or_size(key, value);
  else if (key == "data.test_fraction") cfg.test_fraction = to_double(key, value);
  else if (key == "data.beat_window") cfg.beat_window = to_size(key, value);
  else throw Error(ErrorKind::kConfig, "unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": expected key = value");
    try {
      set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorKind::kConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  const auto size_or_auto = [](std::size_t v) { return v == 0 ? std::string("auto") : std::to_string(v); };
  const auto& p = cfg.preprocess;
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  const auto& s = cfg.train.schedule;
  std::string cnn1d, cnn2d;
  for (const auto& l : m.cnn1d_layers)
    cnn1d += (cnn1d.empty() ? "" : ",") + std::to_string(l.channels) + ":" + std::to_string(l.kernel);
  for (const auto& l : m.cnn2d_layers)
    cnn2d += (cnn2d.empty() ? "" : ",") + std::to_string(l.channels) + ":" + std::to_string(l.kernel) + ":" +
             std::to_string(l.stride);
  if (cnn1d.empty()) cnn1d = "none";
  if (cnn2d.empty()) cnn2d = "none";

  std::ostringstream os;
  os << "preprocess.f_low = " << format_double(p.f_low) << "\n"
     << "preprocess.f_high = " << format_double(p.f_high) << "\n"
     << "preprocess.order = " << p.order << "\n"
     << "preprocess.window = " << size_or_auto(p.window) << "\n"
     << "preprocess.overlap = " << p.overlap << "\n"
     << "preprocess.filter_mode = " << filter_mode_name(p.filter_mode) << "\n"
     << "preprocess.enable_filter = " << filter_switch_name(cfg.filter) << "\n"
     << "model.input_length = " << size_or_auto(m.input_length) << "\n"
     << "model.num_classes = " << size_or_auto(m.num_classes) << "\n"
     << "model.cnn1d = " << cnn1d << "\n"
     << "model.lstm_hidden = " << m.lstm_hidden << "\n"
     << "model.cnn2d = " << cnn2d << "\n"
     << "model.groups = " << m.groups << "\n"
     << "model.attn_dim = " << m.attn_dim << "\n"
     << "model.mlp_hidden = " << m.mlp_hidden << "\n"
     << "model.variant = " << model::to_string(m.variant) << "\n"
     << "train.epochs = " << t.epochs << "\n"
     << "train.batch_size = " << t.batch_size << "\n"
     << "train.seed = " << t.seed << "\n"
     << "train.checkpoint = " << (t.checkpoint == optim::CheckpointPolicy::kLast ? "last" : "best_validation") << "\n"
     << "train.validation_fraction = " << format_double(cfg.validation_fraction) << "\n"
     << "schedule.kind = " << (s.kind == optim::ScheduleKind::kCosine ? "cosine" : "inverse_sqrt") << "\n"
     << "schedule.initial_lr = " << format_double(s.initial_lr) << "\n"
     << "schedule.decay = " << format_double(s.decay) << "\n"
     << "schedule.total_steps = " << size_or_auto(s.total_steps) << "\n"
     << "data.test_fraction = " << format_double(cfg.test_fraction) << "\n"
     << "data.beat_window = " << cfg.beat_window << "\n";
  return os.str();
}

}  // namespace gafnet
