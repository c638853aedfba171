#include "avae/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "avae/errors.hpp"
#include "avae/rng.hpp"

namespace avae {
namespace {

// Stream ids so that different consumers of one seed never share draws.
constexpr std::uint64_t kSplitStream = 0x5350;
constexpr std::uint64_t kMaskStream = 0x4d41;
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kSyntheticStream = 0x5359;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset) {
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

std::size_t Dataset::labelled_count() const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [](int l) { return l != kUnlabelled; }));
}

void Dataset::validate() const {
  if (features.rank() == 0 || features.dim(0) != labels.size()) {
    throw ContractError("dataset has " + std::to_string(labels.size()) + " labels for features " +
                        shape_str(features.shape()));
  }
  for (int l : labels) {
    if (l != kUnlabelled && (l < 0 || l >= num_classes)) {
      throw ContractError("label " + std::to_string(l) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.take_rows(rows);
  out.labels.reserve(rows.size());
  for (std::size_t r : rows) out.labels.push_back(labels.at(r));
  out.num_classes = num_classes;
  out.source = source;
  return out;
}

// ---------------------------------------------------------------- normalization

ZScoreStats fit_zscore(const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw ContractError("zscore needs an [N x M] matrix with N >= 1, got " + shape_str(features.shape()));
  }
  const std::size_t n = features.dim(0), m = features.dim(1);
  ZScoreStats stats{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) stats.mean[c] += features.at(r, c);
  }
  for (double& v : stats.mean) v /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      const double d = features.at(r, c) - stats.mean[c];
      stats.stddev[c] += d * d;
    }
  }
  for (double& v : stats.stddev) v = std::sqrt(v / static_cast<double>(n));
  return stats;
}

Tensor apply_zscore(const Tensor& features, const ZScoreStats& stats) {
  if (features.rank() != 2 || features.dim(1) != stats.mean.size()) {
    throw ShapeError("zscore stats for " + std::to_string(stats.mean.size()) +
                     " columns applied to " + shape_str(features.shape()));
  }
  Tensor out(features.shape());
  const std::size_t n = features.dim(0), m = features.dim(1);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < m; ++c) {
      out.at(r, c) = stats.stddev[c] < 1e-12 ? 0.0 : (features.at(r, c) - stats.mean[c]) / stats.stddev[c];
    }
  }
  return out;
}

Normalized zscore_normalize(const Tensor& features) {
  ZScoreStats stats = fit_zscore(features);
  Tensor out = apply_zscore(features, stats);
  return {std::move(out), std::move(stats)};
}

// ---------------------------------------------------------------- windowing

std::size_t window_stride(std::size_t window, double overlap_fraction) {
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ContractError("overlap fraction must lie in [0, 1)");
  }
  const long stride = std::lround(static_cast<double>(window) * (1.0 - overlap_fraction));
  if (stride < 1) throw ContractError("window stride rounds below 1");
  return static_cast<std::size_t>(stride);
}

std::size_t window_count(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0) throw ContractError("window and stride must be positive");
  if (window > length) return 0;
  return (length - window) / stride + 1;
}

Windowed window_series(const Tensor& series, std::span<const int> labels, std::size_t window,
                       double overlap_fraction) {
  if (series.rank() != 2) throw ShapeError("window_series expects [T x C], got " + shape_str(series.shape()));
  const std::size_t t = series.dim(0), c = series.dim(1);
  if (window == 0) throw ContractError("window must be positive");
  if (window > t) {
    throw ContractError("input too short: series of length " + std::to_string(t) +
                        " cannot hold a window of " + std::to_string(window));
  }
  if (!labels.empty() && labels.size() != t) throw ShapeError("label count does not match series length");
  const std::size_t stride = window_stride(window, overlap_fraction);
  const std::size_t w = window_count(t, window, stride);
  Windowed out{Tensor(Shape{w, window * c}), std::vector<int>(w, kUnlabelled)};
  for (std::size_t i = 0; i < w; ++i) {
    const std::size_t start = i * stride;
    std::memcpy(out.features.raw() + i * window * c, series.raw() + start * c, window * c * sizeof(double));
    if (labels.empty()) continue;
    std::map<int, std::size_t> votes;
    for (std::size_t r = start; r < start + window; ++r) {
      if (labels[r] != kUnlabelled) ++votes[labels[r]];
    }
    std::size_t best = 0;
    for (const auto& [cls, n] : votes) {  // ascending class order, strict > keeps the earliest
      if (n > best) {
        best = n;
        out.labels[i] = cls;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- CSV

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  CsvTable table;
  std::vector<double> values;
  std::size_t columns = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = line;
    if (first && view.size() >= 3 && std::memcmp(view.data(), "\xEF\xBB\xBF", 3) == 0) view.remove_prefix(3);
    if (trim(view).empty()) continue;
    const auto fields = split_commas(view);
    if (first) {
      first = false;
      double probe;
      const bool numeric = std::all_of(fields.begin(), fields.end(),
                                       [&](std::string_view f) { return parse_double(f, probe); });
      if (!numeric) {
        table.had_header = true;
        columns = fields.size();
        continue;
      }
    }
    if (columns == 0) columns = fields.size();
    if (fields.size() != columns) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(columns) + " fields, found " + std::to_string(fields.size()));
    }
    if (columns < 2) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": need at least one feature and a label");
    }
    for (std::size_t f = 0; f + 1 < columns; ++f) {
      double v;
      if (!parse_double(fields[f], v) || !std::isfinite(v)) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": column " +
                          std::to_string(f + 1) + " is not a finite number");
      }
      values.push_back(v);
    }
    double label;
    if (!parse_double(fields.back(), label) || label != std::floor(label)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": label column is not an integer");
    }
    table.labels.push_back(static_cast<int>(label));
    ++rows;
  }
  if (rows == 0) throw FormatError(path.string() + ": no data rows");
  table.values = Tensor(Shape{rows, columns - 1}, std::move(values));
  return table;
}

// ---------------------------------------------------------------- IDX

IdxArray read_idx_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4) throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(buf.size()));
  if (buf[0] != 0 || buf[1] != 0) throw FormatError(path.string() + ": bad magic at byte offset 0");
  if (buf[2] != 0x08) throw FormatError(path.string() + ": unsupported element type at byte offset 2");
  const std::size_t ndims = buf[3];
  const std::size_t header = 4 + 4 * ndims;
  if (buf.size() < header) {
    throw FormatError(path.string() + ": truncated dimension table at byte offset " + std::to_string(buf.size()));
  }
  IdxArray out;
  for (std::size_t d = 0; d < ndims; ++d) out.shape.push_back(read_be32(buf, 4 + 4 * d));
  const std::size_t n = shape_size(out.shape);
  if (buf.size() - header < n) {
    throw FormatError(path.string() + ": truncated payload at byte offset " + std::to_string(buf.size()) +
                      " (expected " + std::to_string(header + n) + " bytes)");
  }
  out.bytes.assign(buf.begin() + static_cast<std::ptrdiff_t>(header),
                   buf.begin() + static_cast<std::ptrdiff_t>(header + n));
  return out;
}

Tensor read_idx(const std::filesystem::path& path) {
  IdxArray raw = read_idx_bytes(path);
  Tensor out(raw.shape);
  for (std::size_t i = 0; i < raw.bytes.size(); ++i) out[i] = raw.bytes[i] / 255.0;
  return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
  if (array.shape.size() > 255 || shape_size(array.shape) != array.bytes.size()) {
    throw ContractError("IDX shape does not match payload");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const char header[4] = {0, 0, 0x08, static_cast<char>(array.shape.size())};
  out.write(header, 4);
  for (std::size_t d : array.shape) {
    const auto v = static_cast<std::uint32_t>(d);
    const char be[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                        static_cast<char>(v)};
    out.write(be, 4);
  }
  out.write(reinterpret_cast<const char*>(array.bytes.data()), static_cast<std::streamsize>(array.bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  IdxArray img = read_idx_bytes(images);
  IdxArray lab = read_idx_bytes(labels);
  if (img.shape.size() != 3) throw FormatError(images.string() + ": expected a rank-3 image array");
  if (lab.shape.size() != 1 || lab.shape[0] != img.shape[0]) {
    throw FormatError(labels.string() + ": label count does not match image count");
  }
  Dataset ds;
  ds.features = Tensor(Shape{img.shape[0], img.shape[1], img.shape[2], 1});
  for (std::size_t i = 0; i < img.bytes.size(); ++i) ds.features[i] = img.bytes[i] / 255.0;
  int k = 0;
  for (std::uint8_t l : lab.bytes) {
    ds.labels.push_back(l);
    k = std::max(k, static_cast<int>(l) + 1);
  }
  ds.num_classes = k;
  ds.source = "idx:" + images.filename().string();
  return ds;
}

// ---------------------------------------------------------------- splits

TrainTestSplit split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ContractError("train fraction must lie in (0, 1]");
  const std::size_t n = data.size();
  if (n == 0) throw ContractError("cannot split an empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, kSplitStream);
  shuffle(std::span<std::size_t>(order), rng);
  const auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n))));
  std::vector<std::size_t> train_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_rows(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  return {data.subset(train_rows), data.subset(test_rows)};
}

Dataset apply_supervision_mask(const Dataset& train, double gamma, std::uint64_t seed, MaskMode mode,
                               std::vector<std::string>* warnings) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("supervision rate must lie in (0, 1]");
  const std::size_t n = train.size();
  if (n == 0) throw ContractError("supervision mask on an empty dataset");
  for (int l : train.labels) {
    if (l == kUnlabelled) throw ContractError("supervision mask needs a fully labelled training set");
  }
  const auto target = static_cast<std::size_t>(std::llround(gamma * static_cast<double>(n)));
  if (target == 0) throw ContractError("supervision rate keeps no labels at all");

  Rng rng(seed, kMaskStream);
  std::vector<bool> keep(n, false);

  if (mode == MaskMode::uniform) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span<std::size_t>(order), rng);
    for (std::size_t i = 0; i < target; ++i) keep[order[i]] = true;
  } else {
    const std::size_t k = static_cast<std::size_t>(train.num_classes);
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(train.labels[i])].push_back(i);
    std::vector<double> exact(k);
    std::vector<std::size_t> quota(k);
    std::size_t total = 0;
    for (std::size_t c = 0; c < k; ++c) {
      exact[c] = gamma * static_cast<double>(members[c].size());
      quota[c] = std::min(members[c].size(), static_cast<std::size_t>(std::llround(exact[c])));
      total += quota[c];
    }
    // Largest-remainder adjustment, ties to the lower class index.
    std::vector<std::size_t> cls(k);
    std::iota(cls.begin(), cls.end(), std::size_t{0});
    while (total < target) {
      std::stable_sort(cls.begin(), cls.end(), [&](std::size_t a, std::size_t b) {
        return exact[a] - static_cast<double>(quota[a]) > exact[b] - static_cast<double>(quota[b]);
      });
      bool moved = false;
      for (std::size_t c : cls) {
        if (quota[c] < members[c].size()) {
          ++quota[c];
          ++total;
          moved = true;
          break;
        }
      }
      if (!moved) break;
      std::sort(cls.begin(), cls.end());
    }
    while (total > target) {
      std::stable_sort(cls.begin(), cls.end(), [&](std::size_t a, std::size_t b) {
        return static_cast<double>(quota[a]) - exact[a] > static_cast<double>(quota[b]) - exact[b];
      });
      for (std::size_t c : cls) {
        if (quota[c] > 0) {
          --quota[c];
          --total;
          break;
        }
      }
      std::sort(cls.begin(), cls.end());
    }
    for (std::size_t c = 0; c < k; ++c) {
      Rng class_rng = rng.split(c);
      shuffle(std::span<std::size_t>(members[c]), class_rng);
      for (std::size_t i = 0; i < quota[c]; ++i) keep[members[c][i]] = true;
    }
  }

  Dataset out = train;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep[i]) out.labels[i] = kUnlabelled;
  }
  if (warnings) {
    std::vector<std::size_t> present(static_cast<std::size_t>(train.num_classes), 0), kept(present.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++present[static_cast<std::size_t>(train.labels[i])];
      if (keep[i]) ++kept[static_cast<std::size_t>(train.labels[i])];
    }
    for (std::size_t c = 0; c < present.size(); ++c) {
      if (present[c] > 0 && kept[c] == 0) {
        warnings->push_back("class " + std::to_string(c) + " keeps no labels at supervision rate " +
                            std::to_string(gamma));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------- batching

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng(seed, kShuffleStream).split(epoch);
  shuffle(std::span<std::size_t>(order), rng);
  return order;
}

Batch gather_batch(const Dataset& data, std::span<const std::size_t> rows) {
  Batch b;
  b.x = data.features.take_rows(rows);
  const auto k = static_cast<std::size_t>(data.num_classes);
  b.y = Tensor(Shape{rows.size(), k});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int l = data.labels.at(rows[i]);
    b.labels.push_back(l);
    b.labelled.push_back(l != kUnlabelled);
    if (l != kUnlabelled) b.y[i * k + static_cast<std::size_t>(l)] = 1.0;
  }
  b.indices.assign(rows.begin(), rows.end());
  return b;
}

std::vector<Batch> make_batches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                                std::uint64_t epoch) {
  if (batch_size == 0) throw ContractError("batch size must be >= 1");
  if (data.size() == 0) throw ContractError("cannot batch an empty dataset");
  const auto order = epoch_order(data.size(), seed, epoch);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    out.push_back(gather_batch(data, std::span<const std::size_t>(order).subspan(start, end - start)));
  }
  return out;
}

// ---------------------------------------------------------------- synthetic

Dataset make_two_class_mixture(std::size_t n, std::uint64_t seed, double centre, double noise) {
  Rng rng(seed, kSyntheticStream);
  Dataset ds;
  ds.features = Tensor(Shape{n, 2});
  ds.num_classes = 2;
  ds.source = "synthetic:two_class_mixture";
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const bool flip = rng.uniform() < 0.5;
    // class 0: (+c,+c) / (-c,-c); class 1: (+c,-c) / (-c,+c)
    const double sx = flip ? -1.0 : 1.0;
    const double sy = cls == 0 ? sx : -sx;
    ds.features.at(i, 0) = sx * centre + noise * rng.normal();
    ds.features.at(i, 1) = sy * centre + noise * rng.normal();
    ds.labels.push_back(cls);
  }
  return ds;
}

}  // namespace avae
