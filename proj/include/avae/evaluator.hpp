#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "avae/tensor.hpp"

namespace avae {

struct EmbeddingSet {
  Tensor codes;  // [N x D]
  std::vector<int> labels;
  std::string split;  // "train" or "test"
};

struct KnnResult {
  std::vector<int> predictions;
  Tensor votes;  // [Q x K] vote fractions
};

/// Brute-force Euclidean kNN. Rows of `train_codes` labelled kUnlabelled
/// are ignored. Neighbours are ordered by (distance, row index); the vote
/// winner is the class with most neighbours, then smallest summed distance,
/// then lowest index. Throws ContractError when fewer than k labelled rows
/// exist.
KnnResult knn_classify(const Tensor& train_codes, std::span<const int> train_labels, const Tensor& query,
                       std::size_t k, std::size_t num_classes);

using Confusion = std::vector<std::vector<std::size_t>>;

/// Entry (i, j) counts true class i predicted as j.
Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t num_classes);

/// trace / total; 0 for an empty matrix.
double accuracy(const Confusion& c);

/// One-vs-rest AUC per class by the Mann-Whitney rank statistic with
/// midranks; nullopt where a class has no positives or no negatives.
std::vector<std::optional<double>> roc_auc(const Tensor& scores, std::span<const int> y_true);

struct RocPoint {
  std::size_t cls = 0;
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

/// ROC points for every class with both positives and negatives, one per
/// distinct threshold (descending), starting at (0, 0).
std::vector<RocPoint> roc_points(const Tensor& scores, std::span<const int> y_true);
void write_roc_csv(const std::filesystem::path& path, const std::vector<RocPoint>& points);

struct MetricsReport {
  double accuracy = 0.0;
  Confusion confusion;
  std::vector<std::optional<double>> auc;
  std::map<std::string, std::string> meta;

  /// Pretty JSON, keys sorted, numbers written with round-trip precision.
  std::string to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

MetricsReport evaluate(const EmbeddingSet& train, const EmbeddingSet& test, std::size_t k, std::size_t num_classes);

void write_text_file(const std::filesystem::path& path, const std::string& text);

/// CSV `label,dim0..dimD-1`, one row per sample.
void export_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);

}  // namespace avae
