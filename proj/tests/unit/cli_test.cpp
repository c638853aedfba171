#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avae/archive.hpp"
#include "avae/cli.hpp"
#include "avae/errors.hpp"
#include "json.hpp"

using namespace avae;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::path(AVAE_TEST_TMP) / "cli";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh(const std::string& name) {
  const fs::path p = kRoot / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path prepared_synthetic(const fs::path& dir, std::size_t n = 200) {
  PrepareOptions o;
  o.format = "synthetic";
  o.samples = n;
  o.out = dir / "data";
  prepare_dataset(o);
  return o.out;
}

RunConfig quick(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.data = data.string();
  c.out = out.string();
  c.epochs = 3;
  c.latent_dim = 4;
  c.lr_vae = 1e-3;
  c.gamma = 0.2;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(AVAE_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Prepare, SyntheticSplitIsNormalisedOnTrainOnly) {
  const fs::path dir = fresh("prep_syn");
  const PreparedData p = load_prepared(prepared_synthetic(dir));
  EXPECT_EQ(p.name, "synthetic");
  EXPECT_EQ(p.train.size(), 160u);
  EXPECT_EQ(p.test.size(), 40u);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0;
    for (std::size_t i = 0; i < p.train.size(); ++i) m += p.train.features.at(i, c);
    EXPECT_NEAR(m / 160.0, 0.0, 1e-12);
  }
  const auto j = nlohmann::json::parse(p.manifest_json);
  EXPECT_EQ(j.at("normalization"), "zscore");
  EXPECT_EQ(j.at("train_count"), 160);
}

TEST(Prepare, CsvWindowsAndRemapsLabels) {
  const fs::path dir = fresh("prep_csv");
  {
    std::ofstream f(dir / "series.csv");
    f << "a,b,activity\n";
    for (int t = 0; t < 40; ++t) f << t * 0.5 << "," << (t % 7) << "," << (t < 20 ? 12 : 4) << "\n";
  }
  PrepareOptions o;
  o.data = dir / "series.csv";
  o.window = 8;
  o.overlap = 0.5;
  o.train_fraction = 0.5;
  o.out = dir / "data";
  const PreparedData p = prepare_dataset(o);
  EXPECT_EQ(p.name, "series");
  EXPECT_EQ(p.train.size() + p.test.size(), 9u);  // floor((40 - 8) / 4) + 1
  EXPECT_EQ(p.train.features.dim(1), 16u);
  EXPECT_EQ(p.train.num_classes, 2);
  const auto j = nlohmann::json::parse(slurp(o.out / "manifest.json"));
  EXPECT_EQ(j.at("label_mapping").at("4"), 0);
  EXPECT_EQ(j.at("label_mapping").at("12"), 1);
  EXPECT_EQ(j.at("mode"), "vector");
}

TEST(Prepare, IdxImagesKeepPixelScale) {
  const fs::path dir = fresh("prep_idx");
  IdxArray img{{6, 4, 4}, {}}, lab{{6}, {}};
  for (std::size_t i = 0; i < 96; ++i) img.bytes.push_back(static_cast<std::uint8_t>((i * 37) % 256));
  for (std::uint8_t i = 0; i < 6; ++i) lab.bytes.push_back(i % 3);
  write_idx(dir / "img", img);
  write_idx(dir / "lab", lab);
  PrepareOptions o;
  o.format = "idx";
  o.data = dir / "img";
  o.labels = dir / "lab";
  o.limit = 5;
  o.train_fraction = 0.6;
  o.out = dir / "data";
  const PreparedData p = prepare_dataset(o);
  EXPECT_EQ(p.train.size(), 3u);
  EXPECT_EQ(p.test.size(), 2u);
  EXPECT_EQ(p.train.features.shape(), (Shape{3, 4, 4, 1}));
  for (double v : p.train.features.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  o.labels.clear();
  EXPECT_THROW(prepare_dataset(o), ConfigError);
  o.format = "parquet";
  EXPECT_THROW(prepare_dataset(o), ConfigError);
}

TEST(Prepare, MissingDatasetIsReported) {
  EXPECT_THROW(load_prepared(kRoot / "nowhere"), IoError);
  EXPECT_THROW(load_prepared(""), ConfigError);
}

TEST(Runs, DirectoryLayout) {
  RunConfig c;
  c.out = "/r";
  c.ablation = Ablation::vaepp;
  c.gamma = 0.2;
  c.seed = 7;
  EXPECT_EQ(run_directory(c, "pamap2"), fs::path("/r/pamap2/vaepp/20/7"));
  c.gamma = 0.025;
  EXPECT_EQ(run_directory(c, "x"), fs::path("/r/x/vaepp/2.5/7"));
  c.out.clear();
  setenv("AVAE_OUT_DIR", "/env", 1);
  EXPECT_EQ(output_root(c), fs::path("/env"));
  unsetenv("AVAE_OUT_DIR");
  EXPECT_EQ(output_root(c), fs::path("runs"));
}

TEST(Runs, TrainWritesArtifactsAndRepeatsByteForByte) {
  const fs::path dir = fresh("train");
  const RunConfig c = quick(prepared_synthetic(dir), dir / "a");
  const RunResult r1 = run_training(c);
  for (const char* f : {"config.txt", "trace.csv", "metrics.json", "metrics.csv", "roc.csv"})
    EXPECT_TRUE(fs::exists(r1.dir / f)) << f;
  EXPECT_TRUE(archive_exists(r1.dir / "checkpoint"));
  EXPECT_EQ(load_config(r1.dir / "config.txt"), c);

  RunConfig c2 = c;
  c2.out = (dir / "b").string();
  const RunResult r2 = run_training(c2);
  EXPECT_EQ(slurp(r1.dir / "metrics.json"), slurp(r2.dir / "metrics.json"));
  EXPECT_EQ(slurp(r1.dir / "metrics.json"), evaluate_run(r1.dir).to_json());
}

TEST(Runs, ResumeAppendsTrace) {
  const fs::path dir = fresh("resume");
  RunConfig c = quick(prepared_synthetic(dir), dir / "out");
  const RunResult first = run_training(c);
  c.epochs = 5;
  const RunResult second = run_training(c, true);
  std::ifstream in(second.dir / "trace.csv");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) ++lines;
  EXPECT_EQ(lines, 6u);  // header + 5 epochs

  RunConfig straight = c;
  straight.out = (dir / "straight").string();
  EXPECT_EQ(slurp(second.dir / "metrics.json"), slurp(run_training(straight).dir / "metrics.json"));
}

TEST(Runs, ExportEmbeddings) {
  const fs::path dir = fresh("export");
  const RunResult r = run_training(quick(prepared_synthetic(dir), dir / "out"));
  export_run_embeddings(r.dir, "test", dir / "e.csv");
  std::ifstream in(dir / "e.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "label,dim0,dim1,dim2,dim3");
  EXPECT_THROW(export_run_embeddings(r.dir, "valid", dir / "x.csv"), ConfigError);
}

TEST(Sweep, GridAggregatesAndCountsFailures) {
  const fs::path dir = fresh("sweep");
  const RunConfig c = quick(prepared_synthetic(dir), dir / "out");
  SweepOptions o;
  o.rates = {0.2, 1.0};
  o.ablations = {Ablation::vaepp, Ablation::avae};
  o.seeds = 2;
  o.jobs = 2;
  const SweepResult r = run_sweep(c, o);
  EXPECT_EQ(r.rows.size(), 8u);
  EXPECT_EQ(r.failures(), 0u);
  std::ifstream agg(r.aggregate_csv);
  std::size_t lines = 0;
  for (std::string l; std::getline(agg, l);) ++lines;
  EXPECT_EQ(lines, 9u);
  const std::string summary = slurp(r.summary_csv);
  EXPECT_EQ(summary.substr(0, summary.find('\n')), "rate,vaepp,avae");
  EXPECT_NE(summary.find("\n100,"), std::string::npos);

  // Latent width 3 cannot feed the discriminator: those runs fail, the rest go on.
  RunConfig bad = c;
  bad.latent_dim = 3;
  o.rates = {0.2};
  const SweepResult f = run_sweep(bad, o);
  EXPECT_EQ(f.failures(), 2u);
  EXPECT_NE(slurp(f.aggregate_csv).find("failed"), std::string::npos);
}

TEST(Sweep, ListParsingAndCells) {
  EXPECT_EQ(parse_rate_list("5,20,100"), (std::vector<double>{0.05, 0.2, 1.0}));
  EXPECT_EQ(parse_rate_list("0.5"), (std::vector<double>{0.5}));
  EXPECT_THROW(parse_rate_list("0"), ConfigError);
  EXPECT_THROW(parse_rate_list("abc"), ConfigError);
  EXPECT_THROW(parse_rate_list(""), ConfigError);
  EXPECT_EQ(parse_ablation_list("vae,avae").size(), 2u);
  EXPECT_THROW(parse_ablation_list("vae,foo"), ConfigError);
  EXPECT_EQ(mean_std_cell({0.8, 0.9, 1.0}), "90.00±10.00");
  EXPECT_EQ(mean_std_cell({0.5}), "50.00±0.00");
}

TEST(Binary, ExitCodes) {
  const fs::path dir = fresh("binary");
  const std::string data = (dir / "data").string();
  EXPECT_EQ(run_cli("prepare --format synthetic --samples 100 -o " + data), 0);
  EXPECT_EQ(run_cli("train -s data=" + data + " -s epochs=1 -s latent_dim=4 -s out=" + (dir / "o").string()), 0);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("train -s nonsense=1"), 2);
  EXPECT_EQ(run_cli("train -s data=" + (dir / "missing").string()), 1);
  EXPECT_EQ(run_cli("eval " + (dir / "missing").string()), 1);
}
