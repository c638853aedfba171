// avae command-line driver: prepare, train, eval, export-embeddings, sweep.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "avae/cli.hpp"
#include "avae/config.hpp"
#include "avae/errors.hpp"

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
};

void add_config_args(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("-c,--config", a.file, "key = value config file");
  cmd->add_option("-s,--set", a.sets, "override, e.g. --set lr_vae=1e-3 (repeatable)");
}

avae::RunConfig resolve(const ConfigArgs& a) {
  avae::RunConfig cfg = a.file.empty() ? avae::RunConfig{} : avae::load_config(a.file);
  avae::apply_overrides(cfg, a.sets);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised representation learning with adversarial VAEs"};
  app.require_subcommand(1);

  avae::PrepareOptions prep;
  auto* c_prep = app.add_subcommand("prepare", "window, split and normalise a dataset");
  c_prep->add_option("--format", prep.format, "csv | idx | synthetic")->capture_default_str();
  c_prep->add_option("--data", prep.data, "CSV file or IDX image file");
  c_prep->add_option("--labels", prep.labels, "IDX label file");
  c_prep->add_option("--name", prep.name, "dataset name (default: input file stem)");
  c_prep->add_option("--window", prep.window, "window length in samples")->capture_default_str();
  c_prep->add_option("--overlap", prep.overlap, "window overlap fraction in [0, 1)")->capture_default_str();
  c_prep->add_option("--train-fraction", prep.train_fraction, "training share")->capture_default_str();
  c_prep->add_option("--limit", prep.limit, "keep only the first N samples");
  c_prep->add_option("--samples", prep.samples, "synthetic sample count")->capture_default_str();
  c_prep->add_option("--seed", prep.seed, "split seed")->capture_default_str();
  c_prep->add_option("-o,--out", prep.out, "output directory")->required();

  ConfigArgs train_args;
  bool resume = false;
  auto* c_train = app.add_subcommand("train", "train one configuration and evaluate it");
  add_config_args(c_train, train_args);
  c_train->add_flag("--resume", resume, "continue from the run directory's checkpoint");

  std::string run_dir;
  auto* c_eval = app.add_subcommand("eval", "recompute metrics for a finished run");
  c_eval->add_option("run", run_dir, "run directory")->required();

  std::string emb_split = "test";
  std::string emb_out;
  auto* c_emb = app.add_subcommand("export-embeddings", "write the representation of a split as CSV");
  c_emb->add_option("run", run_dir, "run directory")->required();
  c_emb->add_option("--split", emb_split, "train | test")->capture_default_str();
  c_emb->add_option("-o,--out", emb_out, "output CSV")->required();

  ConfigArgs sweep_args;
  std::string rates = "20,40,60,80,100";
  std::string ablations = "vae_mu,vae,vaepp,avae";
  avae::SweepOptions sweep;
  auto* c_sweep = app.add_subcommand("sweep", "run a rate x ablation x seed grid");
  add_config_args(c_sweep, sweep_args);
  c_sweep->add_option("--rates", rates, "supervision rates, percent or fraction")->capture_default_str();
  c_sweep->add_option("--ablations", ablations, "comma-separated ablations")->capture_default_str();
  c_sweep->add_option("--seeds", sweep.seeds, "seeds per cell")->capture_default_str()->check(CLI::PositiveNumber);
  c_sweep->add_option("-j,--jobs", sweep.jobs, "concurrent runs")->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*c_prep) {
      const auto p = avae::prepare_dataset(prep);
      std::cout << "prepared " << p.name << ": " << p.train.size() << " train, " << p.test.size() << " test -> "
                << prep.out.string() << "\n";
    } else if (*c_train) {
      const auto r = avae::run_training(resolve(train_args), resume, &std::cout);
      std::cout << "accuracy " << r.metrics.accuracy << "\n" << "run " << r.dir.string() << "\n";
    } else if (*c_eval) {
      std::cout << avae::evaluate_run(run_dir).to_json();
    } else if (*c_emb) {
      avae::export_run_embeddings(run_dir, emb_split, emb_out);
    } else if (*c_sweep) {
      sweep.rates = avae::parse_rate_list(rates);
      sweep.ablations = avae::parse_ablation_list(ablations);
      const auto r = avae::run_sweep(resolve(sweep_args), sweep, &std::cout);
      std::cout << "summary " << r.summary_csv.string() << "\n";
      if (r.failures() > 0) {
        std::cerr << r.failures() << " of " << r.rows.size() << " runs failed; see " << r.aggregate_csv.string()
                  << "\n";
        return kRuntimeFailure;
      }
    }
  } catch (const avae::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return 0;
}
