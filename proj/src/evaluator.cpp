#include "avae/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "avae/config.hpp"
#include "avae/data.hpp"
#include "avae/errors.hpp"

namespace avae {

KnnResult knn_classify(const Tensor& train_codes, std::span<const int> train_labels, const Tensor& query,
                       std::size_t k, std::size_t num_classes) {
  if (k == 0) throw ContractError("knn: k must be positive");
  if (train_codes.rank() != 2 || query.rank() != 2 || train_codes.dim(1) != query.dim(1))
    throw ShapeError("knn: code widths differ, train " + shape_str(train_codes.shape()) + " vs query " +
                     shape_str(query.shape()));
  if (train_labels.size() != train_codes.dim(0)) throw ContractError("knn: one label per training row required");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    if (train_labels[i] == kUnlabelled) continue;
    if (train_labels[i] < 0 || static_cast<std::size_t>(train_labels[i]) >= num_classes)
      throw ContractError("knn: training label " + std::to_string(train_labels[i]) + " out of range");
    pool.push_back(i);
  }
  if (pool.size() < k)
    throw ContractError("knn: " + std::to_string(pool.size()) + " labelled rows, need at least k = " +
                        std::to_string(k));

  const std::size_t q = query.dim(0), d = query.dim(1);
  KnnResult out;
  out.predictions.resize(q);
  out.votes = Tensor({q, num_classes});
  std::vector<std::pair<double, std::size_t>> dist(pool.size());
  std::vector<std::size_t> votes(num_classes);
  std::vector<double> summed(num_classes);
  for (std::size_t r = 0; r < q; ++r) {
    const double* x = query.raw() + r * d;
    for (std::size_t j = 0; j < pool.size(); ++j) {
      const double* y = train_codes.raw() + pool[j] * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (x[c] - y[c]) * (x[c] - y[c]);
      dist[j] = {std::sqrt(s), pool[j]};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(summed.begin(), summed.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const auto cls = static_cast<std::size_t>(train_labels[dist[j].second]);
      ++votes[cls];
      summed[cls] += dist[j].first;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < num_classes; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && votes[c] > 0 && summed[c] < summed[best]))
        best = c;
    }
    out.predictions[r] = static_cast<int>(best);
    for (std::size_t c = 0; c < num_classes; ++c)
      out.votes.at(r, c) = static_cast<double>(votes[c]) / static_cast<double>(k);
  }
  return out;
}

Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes) {
  if (y_true.size() != y_pred.size()) throw ContractError("confusion: label vectors differ in length");
  Confusion c(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes || static_cast<std::size_t>(p) >= num_classes)
      throw ContractError("confusion: class out of range at row " + std::to_string(i));
    ++c[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return c;
}

double accuracy(const Confusion& c) {
  std::size_t diag = 0, total = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    diag += c[i][i];
    total += std::accumulate(c[i].begin(), c[i].end(), std::size_t{0});
  }
  return total == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total);
}

namespace {

// Midranks (1-based) of values.
std::vector<double> midranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

void check_scores(const Tensor& scores, std::span<const int> y_true) {
  if (scores.rank() != 2 || scores.dim(0) != y_true.size())
    throw ShapeError("roc: scores " + shape_str(scores.shape()) + " do not match " + std::to_string(y_true.size()) +
                     " labels");
}

}  // namespace

std::vector<std::optional<double>> roc_auc(const Tensor& scores, std::span<const int> y_true) {
  check_scores(scores, y_true);
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<std::optional<double>> out(k);
  std::vector<double> col(n);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores.at(i, c);
      pos += y_true[i] == static_cast<int>(c);
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) continue;
    const auto ranks = midranks(col);
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (y_true[i] == static_cast<int>(c)) rank_sum += ranks[i];
    const double p = static_cast<double>(pos), q = static_cast<double>(neg);
    out[c] = (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
  }
  return out;
}

std::vector<RocPoint> roc_points(const Tensor& scores, std::span<const int> y_true) {
  check_scores(scores, y_true);
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<RocPoint> out;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores.at(a, c) > scores.at(b, c); });
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += y_true[i] == static_cast<int>(c);
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) continue;
    out.push_back({c, 0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = order[i];
      (y_true[r] == static_cast<int>(c) ? tp : fp) += 1;
      if (i + 1 < n && scores.at(order[i + 1], c) == scores.at(r, c)) continue;
      out.push_back({c, static_cast<double>(fp) / static_cast<double>(neg),
                     static_cast<double>(tp) / static_cast<double>(pos), scores.at(r, c)});
    }
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& points) {
  std::string text = "class,fpr,tpr,threshold\n";
  for (const auto& p : points)
    text += std::to_string(p.cls) + "," + format_double(p.fpr) + "," + format_double(p.tpr) + "," +
            (std::isinf(p.threshold) ? std::string("inf") : format_double(p.threshold)) + "\n";
  write_text_file(path, text);
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["accuracy"] = accuracy;
  j["confusion"] = confusion;
  nlohmann::json auc_json = nlohmann::json::array();
  for (const auto& a : auc) auc_json.push_back(a ? nlohmann::json(*a) : nlohmann::json("undefined"));
  j["auc"] = auc_json;
  j["meta"] = meta;
  return j.dump(2) + "\n";
}

std::string MetricsReport::csv_header() { return "dataset,ablation,gamma,seed,accuracy,macro_auc"; }

std::string MetricsReport::csv_row() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& a : auc)
    if (a) sum += *a, ++n;
  auto m = [&](const char* key) { return meta.count(key) ? meta.at(key) : std::string(); };
  return m("dataset") + "," + m("ablation") + "," + m("gamma") + "," + m("seed") + "," + format_double(accuracy) +
         "," + (n ? format_double(sum / static_cast<double>(n)) : std::string());
}

MetricsReport evaluate(const EmbeddingSet& train, const EmbeddingSet& test, std::size_t k, std::size_t num_classes) {
  const KnnResult knn = knn_classify(train.codes, train.labels, test.codes, k, num_classes);
  MetricsReport r;
  r.confusion = confusion_matrix(test.labels, knn.predictions, num_classes);
  r.accuracy = accuracy(r.confusion);
  r.auc = roc_auc(knn.votes, test.labels);
  return r;
}

void export_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  const std::size_t n = set.codes.dim(0), d = set.codes.rank() == 2 ? set.codes.dim(1) : 0;
  if (set.labels.size() != n) throw ContractError("export: one label per code row required");
  std::string text = "label";
  for (std::size_t c = 0; c < d; ++c) text += ",dim" + std::to_string(c);
  text += "\n";
  for (std::size_t i = 0; i < n; ++i) {
    text += std::to_string(set.labels[i]);
    for (std::size_t c = 0; c < d; ++c) text += "," + format_double(set.codes.at(i, c));
    text += "\n";
  }
  write_text_file(path, text);
}

}  // namespace avae
