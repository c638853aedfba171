#include "avae/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "avae/archive.hpp"
#include "avae/errors.hpp"
#include "avae/trainer.hpp"

namespace avae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_split(const fs::path& base, const Dataset& d) {
  Archive a;
  a.meta["num_classes"] = std::to_string(d.num_classes);
  a.meta["source"] = d.source;
  a.put("features", d.features);
  Tensor labels(Shape{d.labels.size()});
  for (std::size_t i = 0; i < d.labels.size(); ++i) labels[i] = d.labels[i];
  a.put("labels", std::move(labels));
  write_archive(base, a);
}

Dataset load_split(const fs::path& base) {
  if (!archive_exists(base)) throw IoError("missing prepared split " + base.string() + " (run prepare first)");
  const Archive a = read_archive(base);
  Dataset d;
  d.features = a.tensor("features");
  for (double v : a.tensor("labels").data()) d.labels.push_back(static_cast<int>(v));
  d.num_classes = std::stoi(a.meta_at("num_classes"));
  d.source = a.meta_at("source");
  d.validate();
  return d;
}

// Maps arbitrary integer labels onto 0..K-1 in ascending order.
std::map<int, int> remap_labels(std::vector<int>& labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  std::map<int, int> mapping;
  for (int l : distinct) mapping.emplace(l, static_cast<int>(mapping.size()));
  for (int& l : labels) l = mapping.at(l);
  return mapping;
}

std::string rate_dir(double gamma) {
  const double pct = gamma * 100.0;
  if (std::abs(pct - std::round(pct)) < 1e-9) return std::to_string(std::llround(pct));
  return format_double(pct);
}

Dataset masked_train(const PreparedData& p, const RunConfig& cfg, std::vector<std::string>* warnings) {
  return apply_supervision_mask(p.train, cfg.gamma, cfg.seed, cfg.mask, warnings);
}

}  // namespace

// ---------------------------------------------------------------- prepare

PreparedData prepare_dataset(const PrepareOptions& o) {
  if (o.out.empty()) throw ConfigError("prepare needs an output directory");
  Dataset all;
  json extra = json::object();
  std::string name = o.name;
  bool image = false;

  if (o.format == "csv") {
    CsvTable t = read_csv(o.data);
    const auto mapping = remap_labels(t.labels);
    Windowed w = window_series(t.values, t.labels, o.window, o.overlap);
    all.features = std::move(w.features);
    all.labels = std::move(w.labels);
    all.num_classes = static_cast<int>(mapping.size());
    all.source = "csv:" + o.data.filename().string();
    json m = json::object();
    for (const auto& [raw, idx] : mapping) m[std::to_string(raw)] = idx;
    extra["label_mapping"] = m;
    extra["window"] = o.window;
    extra["overlap"] = o.overlap;
    extra["series_length"] = t.values.dim(0);
    extra["had_header"] = t.had_header;
  } else if (o.format == "idx") {
    if (o.labels.empty()) throw ConfigError("idx format needs --labels");
    all = load_idx_dataset(o.data, o.labels);
    image = true;
  } else if (o.format == "synthetic") {
    all = make_two_class_mixture(o.samples, o.seed);
    if (name.empty()) name = "synthetic";
  } else {
    throw ConfigError("unknown format '" + o.format + "' (expected csv, idx or synthetic)");
  }
  if (name.empty()) name = o.data.stem().string();
  if (o.limit > 0 && o.limit < all.size()) {
    std::vector<std::size_t> rows(o.limit);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    all = all.subset(rows);
  }
  all.validate();

  TrainTestSplit split = split_dataset(all, o.train_fraction, o.seed);
  json stats = json::object();
  if (!image) {
    const ZScoreStats fit = fit_zscore(split.train.features);
    split.train.features = apply_zscore(split.train.features, fit);
    if (split.test.size() > 0) split.test.features = apply_zscore(split.test.features, fit);
    stats["mean"] = fit.mean;
    stats["std"] = fit.stddev;
  }

  fs::create_directories(o.out);
  save_split(o.out / "train", split.train);
  save_split(o.out / "test", split.test);

  json m;
  m["name"] = name;
  m["source"] = all.source;
  m["format"] = o.format;
  m["mode"] = image ? "image" : "vector";
  m["num_classes"] = all.num_classes;
  m["sample_shape"] = Shape(all.features.shape().begin() + 1, all.features.shape().end());
  m["samples"] = all.size();
  m["train_count"] = split.train.size();
  m["test_count"] = split.test.size();
  m["train_fraction"] = o.train_fraction;
  m["seed"] = o.seed;
  m["normalization"] = image ? "none" : "zscore";
  m["stats"] = stats;
  for (auto& [k, v] : extra.items()) m[k] = v;
  const std::string text = m.dump(2) + "\n";
  write_text_file(o.out / "manifest.json", text);
  return PreparedData{name, std::move(split.train), std::move(split.test), text};
}

PreparedData load_prepared(const fs::path& dir) {
  if (dir.empty()) throw ConfigError("no prepared dataset given (set data = <dir>)");
  const std::string text = read_file(dir / "manifest.json");
  const json m = json::parse(text);
  return PreparedData{m.at("name").get<std::string>(), load_split(dir / "train"), load_split(dir / "test"), text};
}

// ---------------------------------------------------------------- runs

fs::path output_root(const RunConfig& cfg) {
  if (!cfg.out.empty()) return cfg.out;
  if (const char* env = std::getenv("AVAE_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs";
}

fs::path run_directory(const RunConfig& cfg, const std::string& dataset) {
  return output_root(cfg) / dataset / to_string(cfg.ablation) / rate_dir(cfg.gamma) / std::to_string(cfg.seed);
}

namespace {

MetricsReport score(const Model& model, const RunConfig& cfg, const Dataset& train, const Dataset& test,
                    const std::string& dataset, const fs::path& dir) {
  const EmbeddingSet tr{embed(model, cfg.ablation, train.features, cfg.seed), train.labels, "train"};
  const EmbeddingSet te{embed(model, cfg.ablation, test.features, cfg.seed), test.labels, "test"};
  MetricsReport r = evaluate(tr, te, cfg.knn_k, static_cast<std::size_t>(train.num_classes));
  r.meta["dataset"] = dataset;
  r.meta["ablation"] = to_string(cfg.ablation);
  r.meta["gamma"] = format_double(cfg.gamma);
  r.meta["seed"] = std::to_string(cfg.seed);
  r.meta["k"] = std::to_string(cfg.knn_k);
  r.meta["config_hash"] = cfg.hash();
  r.meta["train_count"] = std::to_string(train.size());
  r.meta["labelled_count"] = std::to_string(train.labelled_count());
  r.meta["test_count"] = std::to_string(test.size());
  write_text_file(dir / "metrics.json", r.to_json());
  write_text_file(dir / "metrics.csv", MetricsReport::csv_header() + "\n" + r.csv_row() + "\n");
  write_roc_csv(dir / "roc.csv", roc_points(te.codes.dim(0) ? knn_classify(tr.codes, tr.labels, te.codes, cfg.knn_k,
                                                                           static_cast<std::size_t>(train.num_classes))
                                                                  .votes
                                                            : Tensor({0, static_cast<std::size_t>(train.num_classes)}),
                                            test.labels));
  return r;
}

}  // namespace

RunResult run_training(const RunConfig& cfg, bool resume, std::ostream* log) {
  cfg.validate();
  const PreparedData data = load_prepared(cfg.data);
  if (data.test.size() == 0) throw ConfigError("prepared dataset has an empty test split");
  std::vector<std::string> warnings;
  const Dataset train = masked_train(data, cfg, &warnings);
  if (log)
    for (const auto& w : warnings) *log << "warning: " << w << "\n";

  const fs::path dir = run_directory(cfg, data.name);
  fs::create_directories(dir);
  const fs::path ckpt = dir / "checkpoint";
  const fs::path trace_path = dir / "trace.csv";

  TrainState state = [&] {
    if (resume && archive_exists(ckpt)) return load_checkpoint(ckpt, cfg);
    return init_training(cfg, train);
  }();
  save_config(dir / "config.txt", cfg);

  std::ofstream trace;
  if (state.epochs_done > 0 && fs::exists(trace_path)) {
    trace.open(trace_path, std::ios::app);
  } else {
    trace.open(trace_path, std::ios::trunc);
    trace << TrainTrace::csv_header() << "\n";
  }
  if (!trace) throw IoError("cannot write " + trace_path.string());

  TrainHooks hooks;
  hooks.checkpoint = ckpt;
  hooks.on_epoch = [&](const EpochRecord& r, const TrainState&) {
    trace << TrainTrace::csv_row(r) << "\n";
    trace.flush();
    if (log) {
      *log << "epoch " << r.epoch << "/" << cfg.epochs << " recon " << r.recon << " kl " << r.kl;
      if (r.has_gan) *log << " gan " << r.gan_label << "/" << r.gan_unlabel;
      *log << " (" << static_cast<long>(r.ms) << " ms)\n";
    }
  };
  train_epochs(state, cfg, train, hooks);
  return RunResult{dir, score(state.model, cfg, train, data.test, data.name, dir)};
}

MetricsReport evaluate_run(const fs::path& run_dir) {
  Checkpoint cp = read_checkpoint(run_dir / "checkpoint");
  const PreparedData data = load_prepared(cp.config.data);
  const Dataset train = masked_train(data, cp.config, nullptr);
  return score(cp.state.model, cp.config, train, data.test, data.name, run_dir);
}

void export_run_embeddings(const fs::path& run_dir, const std::string& split, const fs::path& path) {
  if (split != "train" && split != "test") throw ConfigError("split must be train or test");
  Checkpoint cp = read_checkpoint(run_dir / "checkpoint");
  const PreparedData data = load_prepared(cp.config.data);
  const Dataset d = split == "train" ? masked_train(data, cp.config, nullptr) : data.test;
  export_embeddings({embed(cp.state.model, cp.config.ablation, d.features, cp.config.seed), d.labels, split}, path);
}

// ---------------------------------------------------------------- sweep

std::size_t SweepResult::failures() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.ok; }));
}

std::string mean_std_cell(const std::vector<double>& acc) {
  if (acc.empty()) return "";
  const double n = static_cast<double>(acc.size());
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / n;
  double ss = 0.0;
  for (double a : acc) ss += (a - mean) * (a - mean);
  const double sd = acc.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f±%.2f", 100.0 * mean, 100.0 * sd);
  return buf;
}

std::vector<double> parse_rate_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (item.empty()) continue;
    double v = 0.0;
    try {
      v = std::stod(item);
    } catch (const std::exception&) {
      throw ConfigError("invalid rate '" + item + "'");
    }
    // Accept percentages (20) as well as fractions (0.2).
    if (v > 1.0) v /= 100.0;
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError("rate '" + item + "' outside (0, 100]");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty rate list");
  return out;
}

std::vector<Ablation> parse_ablation_list(const std::string& text) {
  std::vector<Ablation> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(parse_ablation(item));
  if (out.empty()) throw ConfigError("empty ablation list");
  return out;
}

SweepResult run_sweep(const RunConfig& base, const SweepOptions& opts, std::ostream* log) {
  base.validate();
  const PreparedData data = load_prepared(base.data);
  SweepResult result;
  for (double g : opts.rates)
    for (Ablation a : opts.ablations)
      for (std::size_t s = 0; s < opts.seeds; ++s) result.rows.push_back({g, a, base.seed + s, false, 0.0, {}});

  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < result.rows.size();) {
      SweepRow& row = result.rows[i];
      RunConfig cfg = base;
      cfg.gamma = row.gamma;
      cfg.ablation = row.ablation;
      cfg.seed = row.seed;
      try {
        row.accuracy = run_training(cfg).metrics.accuracy;
        row.ok = true;
      } catch (const std::exception& e) {
        row.error = e.what();
      }
      if (log) {
        std::lock_guard lock(log_mu);
        *log << "[" << (i + 1) << "/" << result.rows.size() << "] rate " << rate_dir(row.gamma) << " "
             << to_string(row.ablation) << " seed " << row.seed << ": "
             << (row.ok ? "accuracy " + format_double(row.accuracy) : "FAILED " + row.error) << "\n";
      }
    }
  };
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts.jobs, result.rows.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const fs::path root = output_root(base) / data.name;
  fs::create_directories(root);
  std::string agg = "rate,ablation,seed,status,accuracy,error\n";
  for (const auto& r : result.rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    agg += rate_dir(r.gamma) + "," + to_string(r.ablation) + "," + std::to_string(r.seed) + "," +
           (r.ok ? "ok" : "failed") + "," + (r.ok ? format_double(r.accuracy) : "") + "," + err + "\n";
  }
  std::string summary = "rate";
  for (Ablation a : opts.ablations) summary += "," + to_string(a);
  summary += "\n";
  for (double g : opts.rates) {
    summary += rate_dir(g);
    for (Ablation a : opts.ablations) {
      std::vector<double> acc;
      for (const auto& r : result.rows)
        if (r.ok && r.gamma == g && r.ablation == a) acc.push_back(r.accuracy);
      summary += "," + mean_std_cell(acc);
    }
    summary += "\n";
  }
  result.aggregate_csv = root / "aggregate.csv";
  result.summary_csv = root / "summary.csv";
  write_text_file(result.aggregate_csv, agg);
  write_text_file(result.summary_csv, summary);
  return result;
}

}  // namespace avae
