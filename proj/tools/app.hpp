#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gafnet/config.hpp"
#include "gafnet/data.hpp"
#include "gafnet/error.hpp"
#include "gafnet/metrics.hpp"
#include "gafnet/model.hpp"
#include "gafnet/optim.hpp"

namespace gafnet::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;

enum class DatasetKind { kUcr, kWfdb };

DatasetKind parse_dataset_kind(std::string_view name);

struct Splits {
  data::Dataset train, validation, test;
};

// UCR: `train` and `test` are single files. WFDB: comma-separated record base
// paths; without `test` the beats are split stratified by data.test_fraction.
// The validation split is carved from train by train.validation_fraction.
Splits load_splits(DatasetKind kind, const std::string& train, const std::string& test, const RunConfig& cfg);

// UCR test set mapped through a known vocabulary.
data::Dataset load_test_set(DatasetKind kind, const std::string& test, const RunConfig& cfg,
                            const std::vector<std::string>& vocabulary);

struct RunResult {
  model::ModelConfig model;
  optim::TrainResult training;
  metrics::EvalReport test_report;
};

// Resolves auto fields of cfg.model against the data, trains and evaluates.
RunResult run_training(const RunConfig& cfg, const Splits& splits, std::ostream* progress = nullptr);

struct RunFiles {
  std::filesystem::path model, history, report, config, classes;
};
RunFiles run_files(const std::filesystem::path& out_dir);

// Writes model, history CSV, report, effective config and class names.
void write_run(const std::filesystem::path& out_dir, const RunConfig& effective, const RunResult& result,
               const std::vector<std::string>& class_names);

struct GafArgs {
  std::filesystem::path input, out_dir;
  std::optional<std::size_t> limit;
};
struct TrainArgs {
  std::string dataset = "ucr", train, test;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::optional<std::string> variant;
};
struct EvalArgs {
  std::filesystem::path model;
  std::string dataset = "ucr", test;
  std::optional<std::filesystem::path> config;
};
struct AblateArgs {
  std::string dataset = "ucr", train, test;
  std::optional<std::filesystem::path> config;
  std::vector<std::uint64_t> seeds{42};
  std::optional<std::filesystem::path> out;
};

// Each command writes results to `out`, diagnostics to `err`, and returns an
// exit code.
int cmd_gaf(const GafArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err);

// Maps an error kind onto the process exit code.
int exit_code_for(ErrorKind kind);

struct AblationRow {
  model::Variant variant;
  double acc_mean, acc_std, f1_mean, f1_std, auc_mean, auc_std;
};
std::string_view ablation_label(model::Variant v);
std::string format_ablation(const std::vector<AblationRow>& rows);

}  // namespace gafnet::app
