#include "app.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gafnet/dsp.hpp"
#include "gafnet/error.hpp"
#include "gafnet/gaf.hpp"
#include "gafnet/rng.hpp"

namespace gafnet::app {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kValidationTag = 0x7a11d;
constexpr std::uint64_t kTestTag = 0x7e57;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

dsp::PreprocessConfig preprocess_for(const RunConfig& cfg, bool wfdb) {
  dsp::PreprocessConfig p = cfg.preprocess;
  p.enable_filter = cfg.filter_enabled(wfdb);
  return p;
}

data::Dataset preprocess_ucr(const data::Dataset& raw, const RunConfig& cfg) {
  const dsp::PreprocessConfig p = preprocess_for(cfg, false);
  data::Dataset out;
  out.class_names = raw.class_names;
  out.fs = raw.fs;
  out.split = raw.split;
  for (const auto& item : raw.items) {
    const dsp::Signal sig{item.segment.values, raw.fs};
    for (auto& seg : dsp::preprocess(sig, p)) {
      seg.label = static_cast<int>(item.class_id);
      out.items.push_back({std::move(seg), item.class_id});
    }
  }
  return out;
}

data::Dataset load_wfdb_records(const std::string& list, const RunConfig& cfg) {
  const auto records = split_list(list);
  if (records.empty()) throw Error(ErrorKind::kEmptyDataset, "no WFDB records given");
  const dsp::PreprocessConfig p = preprocess_for(cfg, true);
  data::Dataset merged;
  merged.class_names = data::beat_symbols();
  for (const auto& base : records) {
    const data::WfdbRecord rec = data::load_wfdb_record(base);
    dsp::Signal lead = rec.signals.at(0);
    if (p.enable_filter) {
      const auto coeffs = dsp::design_butterworth(p.order, p.f_low, p.f_high, lead.fs);
      lead = dsp::apply_filter(coeffs, lead, p.filter_mode);
    }
    lead = dsp::normalize(lead);
    const std::vector<dsp::Signal> channel{lead};
    data::BeatExtraction beats = data::extract_beats(channel, rec.annotations, cfg.beat_window);
    merged.fs = lead.fs;
    for (auto& item : beats.dataset.items) merged.items.push_back(std::move(item));
  }
  return merged;
}

data::Dataset retag(data::Dataset ds, data::SplitTag tag) {
  ds.split = tag;
  return ds;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::kIoFailure, "cannot write " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoFailure, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

RunConfig base_config(const std::optional<fs::path>& path) {
  return path ? load_config(*path) : RunConfig{};
}

}  // namespace

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "ucr") return DatasetKind::kUcr;
  if (name == "wfdb") return DatasetKind::kWfdb;
  throw Error(ErrorKind::kConfig, "unknown dataset kind '" + std::string(name) + "'");
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kUnknownVariant:
      return kExitUsage;
    case ErrorKind::kShapeMismatch:
    case ErrorKind::kEmptyDataset:
    case ErrorKind::kMalformedRow:
    case ErrorKind::kNonNumericField:
    case ErrorKind::kEmptyFile:
    case ErrorKind::kUnsupportedFormat:
    case ErrorKind::kMalformedHeader:
    case ErrorKind::kTruncatedPayload:
    case ErrorKind::kHeaderMismatch:
    case ErrorKind::kTruncatedStream:
    case ErrorKind::kUnterminatedStream:
    case ErrorKind::kEmptyResult:
    case ErrorKind::kLengthMismatch:
    case ErrorKind::kSingleClassLabels:
    case ErrorKind::kIoFailure:
    case ErrorKind::kVersionMismatch:
    case ErrorKind::kBadMagic:
    case ErrorKind::kWindowTooLong:
    case ErrorKind::kTooShort:
      return kExitData;
    default:
      return kExitRuntime;
  }
}

Splits load_splits(DatasetKind kind, const std::string& train, const std::string& test, const RunConfig& cfg) {
  data::Dataset full_train, test_set;
  if (kind == DatasetKind::kUcr) {
    if (test.empty()) throw Error(ErrorKind::kConfig, "ucr runs need --test");
    const data::Dataset raw_train = data::load_ucr(train);
    full_train = preprocess_ucr(raw_train, cfg);
    test_set = preprocess_ucr(data::load_ucr(test, raw_train.class_names), cfg);
  } else {
    full_train = load_wfdb_records(train, cfg);
    if (test.empty()) {
      auto [tr, te] = data::stratified_split(full_train, 1.0 - cfg.test_fraction,
                                             derive_seed(cfg.train.seed, kTestTag));
      full_train = std::move(tr);
      test_set = std::move(te);
    } else {
      test_set = load_wfdb_records(test, cfg);
    }
  }
  auto [tr, val] = data::stratified_split(full_train, 1.0 - cfg.validation_fraction,
                                          derive_seed(cfg.train.seed, kValidationTag));
  return {retag(std::move(tr), data::SplitTag::kTrain), retag(std::move(val), data::SplitTag::kValidation),
          retag(std::move(test_set), data::SplitTag::kTest)};
}

data::Dataset load_test_set(DatasetKind kind, const std::string& test, const RunConfig& cfg,
                            const std::vector<std::string>& vocabulary) {
  if (kind == DatasetKind::kWfdb) return retag(load_wfdb_records(test, cfg), data::SplitTag::kTest);
  const data::Dataset raw =
      vocabulary.empty() ? data::load_ucr(test) : data::load_ucr(test, vocabulary);
  return retag(preprocess_ucr(raw, cfg), data::SplitTag::kTest);
}

RunResult run_training(const RunConfig& cfg, const Splits& splits, std::ostream* progress) {
  model::ModelConfig mc = cfg.model;
  const std::size_t length = splits.train.length();
  if (mc.input_length != 0 && mc.input_length != length)
    throw Error(ErrorKind::kShapeMismatch, "model.input_length " + std::to_string(mc.input_length) +
                                               " does not match data length " + std::to_string(length));
  if (mc.num_classes != 0 && mc.num_classes != splits.train.num_classes())
    throw Error(ErrorKind::kShapeMismatch, "model.num_classes does not match the data vocabulary");
  mc.input_length = length;
  mc.num_classes = splits.train.num_classes();

  optim::EpochCallback cb;
  if (progress) {
    cb = [progress](const optim::EpochRecord& r) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "epoch %zu  train_loss %.6f  val_accuracy %.4f  lr %.6g\n", r.epoch,
                    r.train_loss, r.val_accuracy, r.lr);
      *progress << buf << std::flush;
    };
  }
  RunResult result;
  result.model = mc;
  result.training = optim::train(mc, splits.train, splits.validation, cfg.train, cb);
  result.test_report = optim::evaluate_dataset(result.training.params, mc, splits.test);
  return result;
}

RunFiles run_files(const fs::path& out_dir) {
  return {out_dir / "model.gafn", out_dir / "history.csv", out_dir / "report.txt", out_dir / "config.txt",
          out_dir / "classes.txt"};
}

void write_run(const fs::path& out_dir, const RunConfig& effective, const RunResult& result,
               const std::vector<std::string>& class_names) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorKind::kIoFailure, "cannot create " + out_dir.string());
  const RunFiles files = run_files(out_dir);
  model::save_model(files.model, result.model, result.training.params);
  write_text(files.history, optim::history_csv(result.training.history));
  write_text(files.report, metrics::format_report(result.test_report));
  write_text(files.config, to_text(effective));
  std::string names;
  for (const auto& n : class_names) names += n + "\n";
  write_text(files.classes, names);
}

int cmd_gaf(const GafArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const data::Dataset ds = data::load_ucr(args.input);
    std::error_code ec;
    fs::create_directories(args.out_dir, ec);
    if (ec) throw Error(ErrorKind::kIoFailure, "cannot create " + args.out_dir.string());
    const std::size_t n = std::min(ds.size(), args.limit.value_or(ds.size()));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& item = ds.items[i];
      const fs::path path =
          args.out_dir / (std::to_string(i) + "_" + ds.class_names.at(item.class_id) + ".pgm");
      gaf::export_image(gaf::gaf_transform(item.segment), path);
      out << path.string() << "\n";
    }
    return kExitOk;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg = base_config(args.config);
    if (args.seed) cfg.train.seed = *args.seed;
    if (args.variant) cfg.model.variant = model::parse_variant(*args.variant);
    const DatasetKind kind = parse_dataset_kind(args.dataset);
    const Splits splits = load_splits(kind, args.train, args.test, cfg);
    err << "train " << splits.train.size() << "  validation " << splits.validation.size() << "  test "
        << splits.test.size() << "  length " << splits.train.length() << "  classes "
        << splits.train.num_classes() << "\n";
    const RunResult result = run_training(cfg, splits, &err);
    RunConfig effective = cfg;
    effective.model = result.model;
    write_run(args.out, effective, result, splits.train.class_names);
    err << "selected epoch " << result.training.selected_epoch << "\n";
    out << metrics::format_report(result.test_report);
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const model::LoadedModel loaded = model::load_model(args.model);
    const fs::path dir = args.model.parent_path();
    RunConfig cfg;
    if (args.config)
      cfg = load_config(*args.config);
    else if (fs::exists(run_files(dir).config))
      cfg = load_config(run_files(dir).config);
    std::vector<std::string> vocabulary;
    if (fs::exists(run_files(dir).classes)) vocabulary = read_lines(run_files(dir).classes);
    const data::Dataset test = load_test_set(parse_dataset_kind(args.dataset), args.test, cfg, vocabulary);
    const metrics::EvalReport report = optim::evaluate_dataset(loaded.params, loaded.config, test);
    out << metrics::format_report(report);
    return kExitOk;
  });
}

std::string_view ablation_label(model::Variant v) {
  switch (v) {
    case model::Variant::kFull: return "full";
    case model::Variant::kNoDualAttention: return "no_dual";
    case model::Variant::kNoCrossChannel: return "no_cross";
    case model::Variant::kTimeOnly: return "time_only";
    case model::Variant::kGafOnly: return "gaf_only";
  }
  return "unknown";
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant\tacc_mean\tacc_std\tf1_mean\tf1_std\tauc_mean\tauc_std\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\n",
                  std::string(ablation_label(r.variant)).c_str(), r.acc_mean, r.acc_std, r.f1_mean, r.f1_std,
                  r.auc_mean, r.auc_std);
    os << buf;
  }
  return os.str();
}

int cmd_ablate(const AblateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.seeds.empty()) throw Error(ErrorKind::kConfig, "--seeds must list at least one seed");
    const RunConfig base = base_config(args.config);
    const DatasetKind kind = parse_dataset_kind(args.dataset);
    const auto mean_std = [](const std::vector<double>& v) {
      double mean = 0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0;
      for (double x : v) var += (x - mean) * (x - mean);
      return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
    };
    std::vector<AblationRow> rows;
    for (model::Variant v : model::kAllVariants) {
      std::vector<double> acc, f1, auc;
      for (std::uint64_t seed : args.seeds) {
        RunConfig cfg = base;
        cfg.train.seed = seed;
        cfg.model.variant = v;
        const Splits splits = load_splits(kind, args.train, args.test, cfg);
        err << "variant " << ablation_label(v) << "  seed " << seed << "\n";
        const RunResult result = run_training(cfg, splits, &err);
        if (args.out) {
          RunConfig effective = cfg;
          effective.model = result.model;
          write_run(*args.out / (std::string(ablation_label(v)) + "_seed" + std::to_string(seed)), effective,
                    result, splits.train.class_names);
        }
        acc.push_back(result.test_report.accuracy);
        f1.push_back(result.test_report.macro_f1);
        auc.push_back(result.test_report.macro_auc);
      }
      const auto [am, as] = mean_std(acc);
      const auto [fm, fsd] = mean_std(f1);
      const auto [um, us] = mean_std(auc);
      rows.push_back({v, am, as, fm, fsd, um, us});
    }
    const std::string table = format_ablation(rows);
    if (args.out) write_text(*args.out / "ablation.tsv", table);
    out << table;
    return kExitOk;
  });
}

}  // namespace gafnet::app
