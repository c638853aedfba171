#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "avae/tensor.hpp"

namespace avae {

inline constexpr int kUnlabelled = -1;

/// Observations with per-sample labels. Features are [N x M] for vector
/// data or [N x H x W x C] for images; labels lie in [0, K) or are
/// kUnlabelled.
struct Dataset {
  Tensor features;
  std::vector<int> labels;
  int num_classes = 0;
  std::string source;

  std::size_t size() const { return labels.size(); }
  std::size_t labelled_count() const;
  /// Throws ContractError if sizes or label ranges are inconsistent.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

// ---------------------------------------------------------------- normalization

struct ZScoreStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population standard deviation
};

/// Column statistics of [N x M] features (N >= 1).
ZScoreStats fit_zscore(const Tensor& features);
/// Columns with stddev < 1e-12 map to zero.
Tensor apply_zscore(const Tensor& features, const ZScoreStats& stats);

struct Normalized {
  Tensor features;
  ZScoreStats stats;
};
Normalized zscore_normalize(const Tensor& features);

// ---------------------------------------------------------------- windowing

/// window * (1 - overlap), rounded; throws ContractError if it rounds below 1.
std::size_t window_stride(std::size_t window, double overlap_fraction);
/// floor((T - window) / stride) + 1 for T >= window.
std::size_t window_count(std::size_t length, std::size_t window, std::size_t stride);

struct Windowed {
  Tensor features;  // [W x (window * C)], each window flattened row-major
  std::vector<int> labels;
};

/// Slides a window over a [T x C] series. Each window takes the majority
/// label of its rows (ties go to the smaller class index). `labels` may be
/// empty, in which case the result is unlabelled.
Windowed window_series(const Tensor& series, std::span<const int> labels, std::size_t window,
                       double overlap_fraction);

// ---------------------------------------------------------------- file formats

struct CsvTable {
  Tensor values;  // [T x C] numeric feature columns
  std::vector<int> labels;
  bool had_header = false;
};

/// One row per record; the last column is an integer label, the others are
/// numeric features. A non-numeric first row is treated as a header.
CsvTable read_csv(const std::filesystem::path& path);

struct IdxArray {
  Shape shape;
  std::vector<std::uint8_t> bytes;
};

/// Unsigned-byte IDX file (magic 00 00 08 <ndims>, big-endian dims).
IdxArray read_idx_bytes(const std::filesystem::path& path);
/// IDX payload as doubles in [0, 1] (byte / 255).
Tensor read_idx(const std::filesystem::path& path);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

/// IDX image file + label file as a dataset with features [N x H x W x 1].
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

// ---------------------------------------------------------------- splits

struct SplitSpec {
  double train_fraction = 0.8;
  double supervision_rate = 1.0;
  std::uint64_t shuffle_seed = 0;
};

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

/// Shuffled split; the train part gets round(train_fraction * N) rows.
TrainTestSplit split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

enum class MaskMode { stratified, uniform };

/// Keeps exactly round(gamma * N) labels; the rest become kUnlabelled but
/// stay in the dataset. Stratified mode gives class k round(gamma * N_k)
/// labels, adjusted by one where needed to hit the global count. Classes
/// left with zero labels are reported through `warnings`.
Dataset apply_supervision_mask(const Dataset& train, double gamma, std::uint64_t seed,
                               MaskMode mode = MaskMode::stratified,
                               std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------- batching

struct Batch {
  Tensor x;                     // rows of the dataset features
  Tensor y;                     // [B x K] one-hot, zero rows for unlabelled samples
  std::vector<int> labels;      // class or kUnlabelled
  std::vector<bool> labelled;   // per-sample flag
  std::vector<std::size_t> indices;  // dataset rows

  std::size_t size() const { return labels.size(); }
};

/// Sample order for one epoch, a permutation keyed by (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Minibatches covering every sample once; the final batch may be short.
std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch);

Batch gather_batch(const Dataset& data, std::span<const std::size_t> rows);

// ---------------------------------------------------------------- synthetic data

/// Two classes in 2-D, each an equal mixture of two isotropic Gaussians
/// (class 0 around (+-c, +-c) on one diagonal, class 1 on the other), with
/// `noise` as the per-axis standard deviation.
Dataset make_two_class_mixture(std::size_t n, std::uint64_t seed, double centre = 1.5,
                               double noise = 0.6);

}  // namespace avae
