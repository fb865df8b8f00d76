#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "app.hpp"

int main(int argc, char** argv) {
  using namespace gafnet::app;
  CLI::App cli{"ECG classification with Gramian angular fields and dual-branch attention fusion"};
  cli.require_subcommand(1);

  GafArgs gaf;
  auto* gaf_cmd = cli.add_subcommand("gaf", "export GAF images of a UCR file as PGM");
  gaf_cmd->add_option("--input", gaf.input, "UCR text file")->required();
  gaf_cmd->add_option("--out-dir", gaf.out_dir, "output directory")->required();
  gaf_cmd->add_option("--limit", gaf.limit, "number of series to export");

  TrainArgs train;
  std::uint64_t train_seed = 0;
  std::string train_variant;
  std::string train_config;
  auto* train_cmd = cli.add_subcommand("train", "train, evaluate and save a model");
  train_cmd->add_option("--dataset", train.dataset, "ucr or wfdb")->check(CLI::IsMember({"ucr", "wfdb"}));
  train_cmd->add_option("--train", train.train, "training file (ucr) or record list (wfdb)")->required();
  train_cmd->add_option("--test", train.test, "test file (ucr) or record list (wfdb)");
  auto* train_config_opt = train_cmd->add_option("--config", train_config, "key = value config file");
  auto* train_seed_opt = train_cmd->add_option("--seed", train_seed, "run seed");
  train_cmd->add_option("--out", train.out, "run directory")->required();
  auto* train_variant_opt = train_cmd->add_option("--variant", train_variant, "ablation variant");

  EvalArgs eval;
  std::string eval_config;
  auto* eval_cmd = cli.add_subcommand("eval", "evaluate a saved model");
  eval_cmd->add_option("--model", eval.model, "model file")->required();
  eval_cmd->add_option("--dataset", eval.dataset, "ucr or wfdb")->check(CLI::IsMember({"ucr", "wfdb"}));
  eval_cmd->add_option("--test", eval.test, "test file (ucr) or record list (wfdb)")->required();
  auto* eval_config_opt = eval_cmd->add_option("--config", eval_config, "config file");

  AblateArgs ablate;
  std::string ablate_config, ablate_out;
  auto* ablate_cmd = cli.add_subcommand("ablate", "train every variant over several seeds");
  ablate_cmd->add_option("--dataset", ablate.dataset, "ucr or wfdb")->check(CLI::IsMember({"ucr", "wfdb"}));
  ablate_cmd->add_option("--train", ablate.train, "training file or record list")->required();
  ablate_cmd->add_option("--test", ablate.test, "test file or record list");
  auto* ablate_config_opt = ablate_cmd->add_option("--config", ablate_config, "config file");
  ablate_cmd->add_option("--seeds", ablate.seeds, "comma-separated seeds")->delimiter(',');
  auto* ablate_out_opt = ablate_cmd->add_option("--out", ablate_out, "directory for per-run artifacts");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*gaf_cmd) return cmd_gaf(gaf, std::cout, std::cerr);
  if (*train_cmd) {
    if (*train_config_opt) train.config = train_config;
    if (*train_seed_opt) train.seed = train_seed;
    if (*train_variant_opt) train.variant = train_variant;
    return cmd_train(train, std::cout, std::cerr);
  }
  if (*eval_cmd) {
    if (*eval_config_opt) eval.config = eval_config;
    return cmd_eval(eval, std::cout, std::cerr);
  }
  if (*ablate_config_opt) ablate.config = ablate_config;
  if (*ablate_out_opt) ablate.out = ablate_out;
  return cmd_ablate(ablate, std::cout, std::cerr);
}
