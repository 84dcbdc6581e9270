// cnnf: prepare data, fine-tune, evaluate and plot, one subcommand each.
//
//   cnnf prepare --data DIR --out DIR [--config FILE] [--set key=value ...] [--arch mini|cnnf] [--seed N]
//   cnnf train   --data PREPARED --out DIR [--pretrained CKPT] [--resume CKPT] [...same config flags]
//   cnnf eval    --checkpoint CKPT --test-dir DIR --out DIR
//   cnnf eval    --predictions CSV --out DIR
//   cnnf report  --history CSV --out PNG
//
// Exit codes: 0 ok, 2 config, 3 data, 4 training, 5 file format, 1 anything else.
// CNNF_OUT_DIR overrides the --out directory of prepare, train and eval.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cnnf/app.hpp"

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> overrides;
  std::string arch;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
    cmd->add_option("--arch", arch, "network: cnnf (224 input) or mini (32 input test fixture)")
        ->check(CLI::IsMember({"cnnf", "mini"}));
    cmd->add_option("--seed", seed, "master seed");
  }

  cnnf::Config build() const {
    cnnf::Config c = file.empty() ? cnnf::Config{} : cnnf::Config::load(file);
    if (!arch.empty()) c.set("arch", arch);
    if (seed) c.set("seed", std::to_string(*seed));
    for (const auto& kv : overrides) c.apply_override(kv);
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"CNN-F food state recognition: prepare, train, eval, report"};
  cli.require_subcommand(1);

  ConfigFlags prep_cfg, train_cfg;
  cnnf::app::PrepareOptions prep;
  auto* prepare = cli.add_subcommand("prepare", "load, split, augment, balance and normalize a dataset");
  prepare->add_option("--data", prep.data_root, "dataset root with one directory per class")->required();
  prepare->add_option("--out", prep.out_dir, "output directory")->required();
  prep_cfg.attach(prepare);

  cnnf::app::TrainOptions tr;
  std::string pretrained, resume;
  auto* train = cli.add_subcommand("train", "fine-tune on a prepared dataset");
  train->add_option("--data", tr.data_dir, "directory written by prepare")->required();
  train->add_option("--out", tr.out_dir, "output directory")->required();
  train->add_option("--pretrained", pretrained, "checkpoint to import (lenient, by parameter name)");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train_cfg.attach(train);

  cnnf::app::EvalOptions ev;
  std::string checkpoint, test_dir, predictions;
  auto* eval = cli.add_subcommand("eval", "confusion matrix, precision, recall and accuracy on a test set");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint");
  eval->add_option("--test-dir", test_dir, "test images, one directory per class");
  eval->add_option("--predictions", predictions, "CSV with true,predicted columns instead of a model");
  eval->add_option("--out", ev.out_dir, "output directory")->required();

  cnnf::app::ReportOptions rep;
  auto* report = cli.add_subcommand("report", "plot train/val top-1 error curves");
  report->add_option("--history", rep.history_csv, "history.csv written by train")->required();
  report->add_option("--out", rep.output, "output PNG path")->required();

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : cnnf::app::config;
  }

  try {
    if (*prepare) {
      prep.config = prep_cfg.build();
      cnnf::app::cmd_prepare(prep);
    } else if (*train) {
      tr.config = train_cfg.build();
      if (!pretrained.empty()) tr.pretrained = pretrained;
      if (!resume.empty()) tr.resume = resume;
      cnnf::app::cmd_train(tr);
    } else if (*eval) {
      if (!checkpoint.empty()) ev.checkpoint = checkpoint;
      if (!test_dir.empty()) ev.test_dir = test_dir;
      if (!predictions.empty()) ev.predictions = predictions;
      cnnf::app::cmd_eval(ev);
    } else if (*report) {
      cnnf::app::cmd_report(rep);
    }
  } catch (const std::exception& e) {
    const int rc = cnnf::app::exit_code_for_current_exception();
    std::cerr << "cnnf: error: " << e.what() << "\n";
    return rc;
  }
  return cnnf::app::ok;
}
