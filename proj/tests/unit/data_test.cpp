#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "avae/data.hpp"
#include "avae/errors.hpp"
#include "avae/rng.hpp"

using namespace avae;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::path(AVAE_TEST_TMP) / "data_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Dataset balanced(std::size_t n, int k) {
  Dataset d;
  d.features = Tensor({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    d.features.at(i, 0) = static_cast<double>(i);
    d.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(k)));
  }
  d.num_classes = k;
  return d;
}

}  // namespace

TEST(ZScore, HandComputedColumn) {
  const auto r = zscore_normalize(Tensor({3, 1}, {1, 2, 3}));
  EXPECT_NEAR(r.features[0], -1.224744871391589, 1e-12);
  EXPECT_NEAR(r.features[1], 0.0, 1e-12);
  EXPECT_NEAR(r.features[2], 1.224744871391589, 1e-12);
  EXPECT_NEAR(r.stats.stddev[0], std::sqrt(2.0 / 3.0), 1e-15);
}

TEST(ZScore, ConstantColumnMapsToZero) {
  const auto r = zscore_normalize(Tensor({3, 1}, {5, 5, 5}));
  for (double v : r.features.data()) EXPECT_EQ(v, 0.0);
}

TEST(ZScore, IdempotentOnStandardizedData) {
  const auto once = zscore_normalize(Tensor({4, 2}, {1, 9, 2, 7, 4, 3, 8, 1}));
  const auto twice = zscore_normalize(once.features);
  for (std::size_t i = 0; i < once.features.size(); ++i)
    EXPECT_NEAR(twice.features[i], once.features[i], 1e-12);
}

TEST(ZScore, TestSplitUsesTrainStatistics) {
  const Tensor train({3, 1}, {1, 2, 3});
  const Tensor test({2, 1}, {10, 12});
  const auto fit = fit_zscore(train);
  const Tensor out = apply_zscore(test, fit);
  EXPECT_NEAR(out[0], (10 - 2) / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_GT(out[0] + out[1], 1.0);  // not re-centred on the test split
}

TEST(Windowing, SpecCounts) {
  EXPECT_EQ(window_stride(10, 0.5), 5u);
  EXPECT_EQ(window_count(100, 10, 5), 19u);
  EXPECT_EQ(window_count(10, 10, 10), 1u);
  EXPECT_EQ(window_count(100, 10, window_stride(10, 0.0)), 10u);
}

TEST(Windowing, WholeSeriesSingleWindow) {
  Tensor s({10, 2});
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = static_cast<double>(i);
  const auto w = window_series(s, {}, 10, 0.5);
  ASSERT_EQ(w.features.shape(), (Shape{1, 20}));
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(w.features[i], static_cast<double>(i));
}

TEST(Windowing, ClosedFormCountPropertyGrid) {
  for (std::size_t t = 1; t <= 40; ++t) {
    for (std::size_t window = 1; window <= t; ++window) {
      for (double overlap : {0.0, 0.25, 0.5, 0.75, 0.9}) {
        const double raw = static_cast<double>(window) * (1.0 - overlap);
        if (std::lround(raw) < 1) continue;
        const std::size_t stride = window_stride(window, overlap);
        const auto w = window_series(Tensor({t, 1}), {}, window, overlap);
        ASSERT_EQ(w.features.dim(0), (t - window) / stride + 1) << t << " " << window << " " << overlap;
        ASSERT_EQ(w.features.dim(1), window);
      }
    }
  }
}

TEST(Windowing, MajorityLabelWithEarliestTieBreak) {
  const Tensor s({4, 1});
  const std::vector<int> labels = {2, 1, 1, 2};
  EXPECT_EQ(window_series(s, labels, 4, 0.0).labels, std::vector<int>{1});
  const std::vector<int> skew = {3, 3, 3, 0};
  EXPECT_EQ(window_series(s, skew, 4, 0.0).labels, std::vector<int>{3});
}

TEST(Windowing, Errors) {
  EXPECT_THROW(window_series(Tensor({5, 1}), {}, 6, 0.5), ContractError);
  EXPECT_THROW(window_stride(1, 0.9), ContractError);
}

TEST(Idx, SpecPayloadScaling) {
  const auto p = scratch("three.idx");
  write_bytes(p, {0, 0, 8, 1, 0, 0, 0, 3, 0, 127, 255});
  const Tensor t = read_idx(p);
  ASSERT_EQ(t.shape(), (Shape{3}));
  EXPECT_EQ(t[0], 0.0);
  EXPECT_NEAR(t[1], 127.0 / 255.0, 1e-15);
  EXPECT_EQ(t[2], 1.0);
}

TEST(Idx, TruncationReportsOffset) {
  const auto p = scratch("short.idx");
  write_bytes(p, {0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3});
  try {
    read_idx(p);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
}

TEST(Idx, BadMagicRejected) {
  const auto p = scratch("magic.idx");
  write_bytes(p, {1, 0, 8, 1, 0, 0, 0, 1, 5});
  EXPECT_THROW(read_idx(p), FormatError);
  write_bytes(p, {0, 0, 0x0D, 1, 0, 0, 0, 1, 5});
  EXPECT_THROW(read_idx(p), FormatError);
}

TEST(Idx, RoundTripIsIdentity) {
  IdxArray a;
  a.shape = {3, 4, 5};
  Rng rng(5);
  for (std::size_t i = 0; i < 60; ++i) a.bytes.push_back(static_cast<std::uint8_t>(rng.below(256)));
  const auto p = scratch("rt.idx");
  write_idx(p, a);
  const IdxArray b = read_idx_bytes(p);
  EXPECT_EQ(b.shape, a.shape);
  EXPECT_EQ(b.bytes, a.bytes);
}

TEST(Idx, LoadsImagesAndLabels) {
  IdxArray images{{2, 2, 2}, {0, 255, 0, 0, 1, 2, 3, 4}};
  IdxArray labels{{2}, {7, 3}};
  write_idx(scratch("img.idx"), images);
  write_idx(scratch("lbl.idx"), labels);
  const Dataset d = load_idx_dataset(scratch("img.idx"), scratch("lbl.idx"));
  EXPECT_EQ(d.features.shape(), (Shape{2, 2, 2, 1}));
  EXPECT_EQ(d.labels, (std::vector<int>{7, 3}));
  EXPECT_EQ(d.num_classes, 8);
  EXPECT_EQ(d.features[1], 1.0);
}

TEST(Csv, HeaderDetectionAndLabels) {
  const auto p = scratch("t.csv");
  std::ofstream(p) << "a,b,label\n1.5,2,0\n-3,4e-1,2\n";
  const CsvTable t = read_csv(p);
  EXPECT_TRUE(t.had_header);
  EXPECT_EQ(t.values.shape(), (Shape{2, 2}));
  EXPECT_EQ(t.values.at(1, 1), 0.4);
  EXPECT_EQ(t.labels, (std::vector<int>{0, 2}));
}

TEST(Csv, HeaderlessAndErrors) {
  const auto p = scratch("n.csv");
  std::ofstream(p) << "1,2,1\n3,4,0\n";
  EXPECT_FALSE(read_csv(p).had_header);
  const auto bad = scratch("bad.csv");
  std::ofstream(bad) << "1,2,1\n3,x,0\n";
  try {
    read_csv(bad);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
  }
  const auto ragged = scratch("ragged.csv");
  std::ofstream(ragged) << "1,2,1\n3,0\n";
  EXPECT_THROW(read_csv(ragged), FormatError);
}

TEST(Split, FractionAndDisjointness) {
  const Dataset d = balanced(50, 2);
  const auto s = split_dataset(d, 0.8, 3);
  EXPECT_EQ(s.train.size(), 40u);
  EXPECT_EQ(s.test.size(), 10u);
  std::set<double> ids;
  for (std::size_t i = 0; i < 40; ++i) ids.insert(s.train.features.at(i, 0));
  for (std::size_t i = 0; i < 10; ++i) ids.insert(s.test.features.at(i, 0));
  EXPECT_EQ(ids.size(), 50u);
}

TEST(Mask, ExactCountAndStratified) {
  const Dataset d = balanced(100, 2);
  const Dataset m = apply_supervision_mask(d, 0.2, 11);
  EXPECT_EQ(m.size(), 100u);
  EXPECT_EQ(m.labelled_count(), 20u);
  EXPECT_EQ(std::count(m.labels.begin(), m.labels.end(), 0), 10);
  EXPECT_EQ(std::count(m.labels.begin(), m.labels.end(), 1), 10);
  for (std::size_t i = 0; i < 100; ++i)
    if (m.labels[i] != kUnlabelled) EXPECT_EQ(m.labels[i], d.labels[i]);
}

TEST(Mask, FullRateIsIdentity) {
  const Dataset d = balanced(17, 3);
  const Dataset m = apply_supervision_mask(d, 1.0, 1);
  EXPECT_EQ(m.labels, d.labels);
}

TEST(Mask, ExactCountOverGridAndReproducible) {
  for (std::size_t n : {7u, 33u, 100u, 251u}) {
    for (double g : {0.05, 0.2, 0.4, 0.6, 0.8, 1.0}) {
      for (auto mode : {MaskMode::stratified, MaskMode::uniform}) {
        Dataset d = balanced(n, 3);
        d.labels[0] = 2;  // unbalance the classes a little
        const auto want = static_cast<std::size_t>(std::llround(g * static_cast<double>(n)));
        if (want == 0) {
          EXPECT_THROW(apply_supervision_mask(d, g, 42, mode), ContractError);
          continue;
        }
        const Dataset a = apply_supervision_mask(d, g, 42, mode);
        const Dataset b = apply_supervision_mask(d, g, 42, mode);
        ASSERT_EQ(a.labelled_count(), want) << n << " " << g;
        ASSERT_EQ(a.labels, b.labels);
      }
    }
  }
}

TEST(Mask, WarnsWhenClassLosesAllLabels) {
  const Dataset d = balanced(10, 5);
  std::vector<std::string> warnings;
  const Dataset m = apply_supervision_mask(d, 0.2, 1, MaskMode::stratified, &warnings);
  EXPECT_EQ(m.labelled_count(), 2u);
  EXPECT_FALSE(warnings.empty());
}

TEST(Batches, SizesAndCoverage) {
  const Dataset d = balanced(10, 2);
  const auto batches = make_batches(d, 3, 5, 0);
  ASSERT_EQ(batches.size(), 4u);
  EXPECT_EQ(batches[0].size(), 3u);
  EXPECT_EQ(batches[3].size(), 1u);
  std::vector<std::size_t> seen;
  for (const auto& b : batches) seen.insert(seen.end(), b.indices.begin(), b.indices.end());
  std::sort(seen.begin(), seen.end());
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  EXPECT_EQ(seen, all);
}

TEST(Batches, DeterministicPerEpochAndKeyedByEpoch) {
  EXPECT_EQ(epoch_order(50, 1, 0), epoch_order(50, 1, 0));
  EXPECT_NE(epoch_order(50, 1, 0), epoch_order(50, 1, 1));
}

TEST(Batches, OneHotOnlyForLabelled) {
  Dataset d = balanced(6, 3);
  d.labels[1] = kUnlabelled;
  const std::vector<std::size_t> rows = {0, 1, 2};
  const Batch b = gather_batch(d, rows);
  EXPECT_EQ(b.y.shape(), (Shape{3, 3}));
  EXPECT_EQ(b.y.at(0, 0), 1.0);
  EXPECT_EQ(b.y.at(1, 0) + b.y.at(1, 1) + b.y.at(1, 2), 0.0);
  EXPECT_EQ(b.y.at(2, 2), 1.0);
  EXPECT_EQ(b.labelled, (std::vector<bool>{true, false, true}));
}

TEST(Batches, EmptyDatasetIsContractError) {
  Dataset d;
  d.features = Tensor({0, 2});
  d.num_classes = 2;
  EXPECT_THROW(make_batches(d, 4, 0, 0), ContractError);
}
