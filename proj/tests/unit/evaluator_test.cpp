#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "avae/data.hpp"
#include "avae/errors.hpp"
#include "avae/evaluator.hpp"
#include "json.hpp"
#include "support/oracles.hpp"

using namespace avae;
using namespace avae::testing;

namespace {

Tensor rows(std::initializer_list<std::initializer_list<double>> r) {
  Tensor t({r.size(), r.begin()->size()});
  std::size_t i = 0;
  for (const auto& row : r)
    for (double v : row) t[i++] = v;
  return t;
}

}  // namespace

TEST(Knn, MatchesExhaustiveSortOracle) {
  Rng rng(7, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const KnnInstance in = random_knn_instance(rng);
    const auto got = knn_classify(in.train, in.labels, in.query, in.k, in.classes);
    EXPECT_EQ(got.predictions, knn_oracle(in.train, in.labels, in.query, in.k, in.classes)) << "trial " << trial;
  }
}

TEST(Knn, NearerNeighbourBreaksVoteTie) {
  // k = 2 gives one vote each; class 1 is nearer in total.
  const Tensor train = rows({{0.0}, {3.0}, {-1.5}});
  const std::vector<int> y = {1, 0, 0};
  const auto r = knn_classify(train, y, rows({{1.0}}), 2, 2);
  EXPECT_EQ(r.predictions[0], 1);
}

TEST(Knn, EqualDistancesPreferLowerRowThenLowerClass) {
  // Rows 0 and 1 are both at distance 1; the lower index wins for k = 1.
  const Tensor train = rows({{1.0}, {-1.0}});
  EXPECT_EQ(knn_classify(train, std::vector<int>{2, 0}, rows({{0.0}}), 1, 3).predictions[0], 2);
  // Both neighbours with k = 2: equal votes and sums, so the lower class.
  EXPECT_EQ(knn_classify(train, std::vector<int>{2, 0}, rows({{0.0}}), 2, 3).predictions[0], 0);
}

TEST(Knn, IgnoresUnlabelledRows) {
  const Tensor train = rows({{0.0}, {5.0}});
  const auto r = knn_classify(train, std::vector<int>{kUnlabelled, 1}, rows({{0.1}}), 1, 2);
  EXPECT_EQ(r.predictions[0], 1);
  EXPECT_DOUBLE_EQ(r.votes.at(0, 1), 1.0);
}

TEST(Knn, RejectsTooFewLabelledRows) {
  const Tensor train = rows({{0.0}, {1.0}, {2.0}});
  EXPECT_THROW(knn_classify(train, std::vector<int>{0, kUnlabelled, kUnlabelled}, rows({{0.0}}), 3, 2),
               ContractError);
  EXPECT_THROW(knn_classify(train, std::vector<int>{0, 1, 1}, rows({{0.0, 1.0}}), 1, 2), ShapeError);
}

TEST(Auc, MatchesPairwiseOracle) {
  Rng rng(11, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const AucInstance in = random_auc_instance(rng);
    const auto got = roc_auc(in.scores, in.y);
    const auto want = auc_oracle(in.scores, in.y);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t c = 0; c < got.size(); ++c) {
      ASSERT_EQ(got[c].has_value(), want[c].has_value()) << "trial " << trial << " class " << c;
      if (got[c]) EXPECT_NEAR(*got[c], *want[c], 1e-12) << "trial " << trial << " class " << c;
    }
  }
}

TEST(Auc, PerfectReversedAndTied) {
  const Tensor s = rows({{0.9, 0.1}, {0.8, 0.2}, {0.1, 0.9}, {0.2, 0.8}});
  const auto a = roc_auc(s, std::vector<int>{0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(*a[0], 1.0);
  EXPECT_DOUBLE_EQ(*a[1], 1.0);
  const auto r = roc_auc(s, std::vector<int>{1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(*r[0], 0.0);
  const auto t = roc_auc(rows({{0.5}, {0.5}, {0.5}}), std::vector<int>{0, 1, 0});
  EXPECT_DOUBLE_EQ(*t[0], 0.5);
}

TEST(Auc, UndefinedWithoutBothSides) {
  const auto a = roc_auc(rows({{0.2, 0.3}, {0.7, 0.1}}), std::vector<int>{0, 0});
  EXPECT_FALSE(a[0].has_value());
  EXPECT_FALSE(a[1].has_value());
}

TEST(Roc, PointsRunFromOriginToOne) {
  const Tensor s = rows({{0.9}, {0.6}, {0.6}, {0.2}});
  const auto pts = roc_points(s, std::vector<int>{0, 1, 0, 1});
  ASSERT_GE(pts.size(), 2u);
  EXPECT_EQ(pts.front().fpr, 0.0);
  EXPECT_EQ(pts.front().tpr, 0.0);
  EXPECT_EQ(pts.back().fpr, 1.0);
  EXPECT_EQ(pts.back().tpr, 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
    EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
    EXPECT_LT(pts[i].threshold, pts[i - 1].threshold);
  }
  // Three distinct scores plus the origin.
  EXPECT_EQ(pts.size(), 4u);
}

TEST(Confusion, IdentitiesOnRandomLabels) {
  Rng rng(5, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(6), n = rng.below(300);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(k));
      p[i] = rng.below(3) == 0 ? static_cast<int>(rng.below(k)) : t[i];
    }
    const Confusion c = confusion_matrix(t, p, k);
    std::size_t total = 0, diag = 0, agree = 0;
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t row = 0, col = 0;
      for (std::size_t j = 0; j < k; ++j) {
        row += c[i][j];
        col += c[j][i];
      }
      EXPECT_EQ(row, static_cast<std::size_t>(std::count(t.begin(), t.end(), static_cast<int>(i))));
      EXPECT_EQ(col, static_cast<std::size_t>(std::count(p.begin(), p.end(), static_cast<int>(i))));
      total += row;
      diag += c[i][i];
    }
    for (std::size_t i = 0; i < n; ++i) agree += t[i] == p[i];
    EXPECT_EQ(total, n);
    EXPECT_EQ(diag, agree);
    EXPECT_DOUBLE_EQ(accuracy(c), n == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(n));
  }
}

TEST(Confusion, RejectsOutOfRange) {
  EXPECT_THROW(confusion_matrix(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2), ContractError);
  EXPECT_THROW(confusion_matrix(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ContractError);
}

TEST(Metrics, JsonCarriesAccuracyConfusionAndUndefinedAuc) {
  MetricsReport r;
  r.accuracy = 0.75;
  r.confusion = {{2, 1}, {0, 1}};
  r.auc = {0.5, std::nullopt};
  r.meta["dataset"] = "toy";
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_DOUBLE_EQ(j.at("accuracy").get<double>(), 0.75);
  EXPECT_EQ(j.at("confusion")[0][1].get<int>(), 1);
  EXPECT_FALSE(j.at("auc")[1].is_number());
  EXPECT_EQ(r.to_json(), r.to_json());
}

TEST(Metrics, EvaluateUsesOnlyLabelledTrainingCodes) {
  EmbeddingSet train{rows({{0.0}, {0.1}, {5.0}, {5.1}, {2.5}}), {0, 0, 1, 1, kUnlabelled}, "train"};
  EmbeddingSet test{rows({{0.05}, {4.9}}), {0, 1}, "test"};
  const MetricsReport r = evaluate(train, test, 1, 2);
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.confusion[0][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
}

TEST(Export, WritesLabelAndDimensions) {
  const auto dir = std::filesystem::path(AVAE_TEST_TMP) / "export";
  std::filesystem::create_directories(dir);
  export_embeddings({rows({{1.5, -2.0}}), {3}, "test"}, dir / "e.csv");
  std::ifstream in(dir / "e.csv");
  std::string header, line;
  std::getline(in, header);
  std::getline(in, line);
  EXPECT_EQ(header, "label,dim0,dim1");
  EXPECT_EQ(line, "3,1.5,-2");
}
