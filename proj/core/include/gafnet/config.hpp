#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "gafnet/dsp.hpp"
#include "gafnet/model.hpp"
#include "gafnet/optim.hpp"

namespace gafnet {

enum class FilterSwitch { kAuto, kOn, kOff };

// Every tunable of a run. Text form is one `dotted.key = value` per line,
// `#` starts a comment. model.input_length and model.num_classes accept
// `auto` (stored as 0) and are then taken from the training data.
struct RunConfig {
  dsp::PreprocessConfig preprocess;
  FilterSwitch filter = FilterSwitch::kAuto;
  model::ModelConfig model;
  optim::TrainConfig train;
  double validation_fraction = 0.1;
  double test_fraction = 0.2;          // wfdb runs without a separate test set
  std::size_t beat_window = 360;

  RunConfig();

  // Filtering is on for WFDB records and off for UCR series under kAuto.
  bool filter_enabled(bool wfdb) const {
    return filter == FilterSwitch::kAuto ? wfdb : filter == FilterSwitch::kOn;
  }

  // Throws Error(kConfig) on out-of-range values.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

// Throws Error(kConfig) naming the line for unknown keys or bad values.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
// Applies one `key = value` assignment.
void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
// Every key, in a fixed order; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

}  // namespace gafnet
