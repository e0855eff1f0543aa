#include "rbir/classifier.h"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <numeric>
#include <thread>

#include <gtest/gtest.h>

#include "rbir/errors.h"
#include "test_util.h"

namespace rbir {
namespace {

struct TwoGaussians {
  size_t dim;
  std::vector<float> pos, neg;
};

TwoGaussians MakeGaussians(uint64_t seed, size_t per_class, size_t dim, double shift) {
  Rng rng(seed);
  TwoGaussians g{dim, {}, {}};
  for (size_t i = 0; i < per_class * dim; ++i) {
    g.pos.push_back(float(rng.Normal() + shift));
  }
  for (size_t i = 0; i < per_class * dim; ++i) {
    g.neg.push_back(float(rng.Normal() - shift));
  }
  return g;
}

// Full-batch subgradient descent with iterate averaging, run long enough to
// converge on small problems.
std::pair<std::vector<double>, double> BatchReference(const TwoGaussians& g, double lambda,
                                                      int iters) {
  const MatrixView<float> P(g.pos, g.dim), N(g.neg, g.dim);
  const size_t n = P.rows() + N.rows();
  std::vector<double> w(g.dim, 0.0), avg(g.dim, 0.0);
  double b = 0.0, avg_b = 0.0;
  int averaged = 0;
  for (int t = 1; t <= iters; ++t) {
    std::vector<double> grad(g.dim);
    for (size_t d = 0; d < g.dim; ++d) grad[d] = lambda * w[d];
    double gb = 0.0;
    auto add = [&](std::span<const float> x, double y) {
      if (y * (Dot(w, x) + b) < 1.0) {
        for (size_t d = 0; d < g.dim; ++d) grad[d] -= y * x[d] / n;
        gb -= y / n;
      }
    };
    for (size_t i = 0; i < P.rows(); ++i) add(P.row(i), 1.0);
    for (size_t i = 0; i < N.rows(); ++i) add(N.row(i), -1.0);
    const double step = 1.0 / (lambda * (t + 10));
    for (size_t d = 0; d < g.dim; ++d) w[d] -= step * grad[d];
    b -= step * gb;
    if (t > iters / 2) {
      ++averaged;
      for (size_t d = 0; d < g.dim; ++d) avg[d] += (w[d] - avg[d]) / averaged;
      avg_b += (b - avg_b) / averaged;
    }
  }
  return {avg, avg_b};
}

double Accuracy(std::span<const double> w, double b, const TwoGaussians& g) {
  const MatrixView<float> P(g.pos, g.dim), N(g.neg, g.dim);
  size_t ok = 0;
  for (size_t i = 0; i < P.rows(); ++i) ok += Dot(w, P.row(i)) + b > 0;
  for (size_t i = 0; i < N.rows(); ++i) ok += Dot(w, N.row(i)) + b < 0;
  return double(ok) / (P.rows() + N.rows());
}

std::vector<double> AsDouble(const std::vector<float>& v) { return {v.begin(), v.end()}; }

TEST(SvmTest, SeparablePair) {
  const std::vector<float> pos = {1, 0}, neg = {-1, 0};
  const auto c = TrainSvm(MatrixView<float>(pos, 2), MatrixView<float>(neg, 2),
                          {.lambda = 0.01});
  EXPECT_GT(c.Score(pos), c.Score(neg));
  EXPECT_EQ(c.num_positives, 1u);
  EXPECT_EQ(c.num_negatives, 1u);
}

TEST(SvmTest, DeterministicBitwise) {
  const auto g = MakeGaussians(1, 100, 8, 0.7);
  const SvmParams p{.lambda = 0.01, .epochs = 20, .seed = 3};
  const auto a = TrainSvm(MatrixView<float>(g.pos, 8), MatrixView<float>(g.neg, 8), p);
  const auto b = TrainSvm(MatrixView<float>(g.pos, 8), MatrixView<float>(g.neg, 8), p);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.bias, b.bias);
}

TEST(SvmTest, ObjectiveWithinOnePercentOfBatchReference) {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u}) {
    const auto g = MakeGaussians(seed, 100, 10, 0.6);
    const double lambda = 0.01;
    const auto [ref_w, ref_b] = BatchReference(g, lambda, 20000);
    const MatrixView<float> P(g.pos, g.dim), N(g.neg, g.dim);
    const double ref = SvmObjective(ref_w, ref_b, P, N, lambda);
    const auto c = TrainSvm(P, N, {.lambda = lambda, .seed = seed});
    const double got = SvmObjective(AsDouble(c.weights), c.bias, P, N, lambda);
    EXPECT_LE(got, ref * 1.01) << "seed " << seed << " ref " << ref;
  }
}

TEST(SvmTest, AccuracyOnShiftedGaussians) {
  const auto g = MakeGaussians(4, 100, 2, 1.5);
  const MatrixView<float> P(g.pos, g.dim), N(g.neg, g.dim);
  const auto [ref_w, ref_b] = BatchReference(g, 1e-3, 20000);
  const double ref_acc = Accuracy(ref_w, ref_b, g);
  ASSERT_GE(ref_acc, 0.95);
  const auto c = TrainSvm(P, N, {});
  const double acc = Accuracy(AsDouble(c.weights), c.bias, g);
  EXPECT_GE(acc, 0.95);
  EXPECT_GE(acc, ref_acc - 0.02);
}

TEST(SvmTest, Errors) {
  const std::vector<float> pos = {1, 0}, neg3 = {1, 2, 3};
  const std::vector<float> empty;
  EXPECT_THROW(TrainSvm(MatrixView<float>(pos, 2), MatrixView<float>(empty, 2), {}), Error);
  EXPECT_THROW(TrainSvm(MatrixView<float>(pos, 2), MatrixView<float>(neg3, 3), {}), Error);
}

TEST(SvmTest, RankingIgnoresBiasAndPositiveScale) {
  Rng rng(5);
  const auto g = MakeGaussians(6, 50, 6, 0.8);
  auto c = TrainSvm(MatrixView<float>(g.pos, 6), MatrixView<float>(g.neg, 6), {});
  const auto db = testing::RandomRows(rng, 100, 6);
  const MatrixView<float> view(db, 6);
  auto rank = [&](const LinearClassifier& cl, double add, double scale) {
    std::vector<size_t> idx(view.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::vector<double> s(view.rows());
    for (size_t i = 0; i < view.rows(); ++i) s[i] = scale * cl.Score(view.row(i)) + add;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return s[a] > s[b]; });
    return idx;
  };
  EXPECT_EQ(rank(c, 0.0, 1.0), rank(c, c.bias, 1.0));
  EXPECT_EQ(rank(c, 0.0, 1.0), rank(c, 0.0, 3.5));
}

TEST(SanitizeNameTest, Rules) {
  EXPECT_EQ(SanitizeName("person"), "person");
  EXPECT_EQ(SanitizeName("unicorn rider/x"), "unicorn_rider_x");
  EXPECT_THROW(SanitizeName(""), Error);
  EXPECT_THROW(SanitizeName(".."), Error);
}

TEST(ClassifierCacheTest, PutGetOverwriteList) {
  testing::TempDir dir;
  ClassifierCache cache(dir / "classifiers");
  try {
    cache.Get("unicorn-rider");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
    EXPECT_NE(std::string(e.what()).find("unicorn-rider"), std::string::npos);
  }
  LinearClassifier c{"person", ClassifierKind::kCategory, {0.1f, -2.5f, 3e-8f}, 0.75f, 4, 9};
  cache.Put(c);
  auto got = cache.Get("person");
  EXPECT_EQ(got.weights, c.weights);
  EXPECT_EQ(got.bias, c.bias);
  EXPECT_EQ(got.kind, c.kind);
  EXPECT_EQ(got.num_positives, 4u);
  EXPECT_EQ(cache.List(), std::vector<std::string>{"person"});

  c.weights[0] = 9.0f;
  cache.Put(c);
  EXPECT_EQ(cache.List().size(), 1u);
  EXPECT_EQ(cache.Get("person").weights[0], 9.0f);

  ClassifierCache reopened(dir / "classifiers");
  EXPECT_EQ(reopened.Get("person").weights, c.weights);
  EXPECT_FALSE(reopened.Find("horse").has_value());
}

TEST(ClassifierCacheTest, FileLayout) {
  testing::TempDir dir;
  ClassifierCache cache(dir.path());
  cache.Put({"running", ClassifierKind::kAttribute, {1.0f, 2.0f}, -1.0f, 1, 1});
  EXPECT_TRUE(std::filesystem::exists(dir / "running.json"));
  EXPECT_EQ(std::filesystem::file_size(dir / "running.f32"), 3 * sizeof(float));
  const std::string raw = ReadFile(dir / "running.f32");
  float vals[3];
  std::memcpy(vals, raw.data(), sizeof(vals));
  EXPECT_EQ(vals[0], 1.0f);
  EXPECT_EQ(vals[2], -1.0f);
}

TEST(ClassifierCacheTest, ConcurrentReadersAndWriters) {
  testing::TempDir dir;
  ClassifierCache cache(dir.path());
  cache.Put({"a", ClassifierKind::kCategory, std::vector<float>(64, 1.0f), 0, 1, 1});
  std::atomic<bool> bad{false};
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) {
        if (t == 0) {
          cache.Put({"a", ClassifierKind::kCategory, std::vector<float>(64, float(i)), 0, 1, 1});
        } else {
          const auto c = cache.Get("a");
          if (c.weights.size() != 64 ||
              std::any_of(c.weights.begin(), c.weights.end(),
                          [&](float w) { return w != c.weights[0]; })) {
            bad = true;
          }
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_FALSE(bad);
}

}  // namespace
}  // namespace rbir
