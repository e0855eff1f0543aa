// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Each criterion also has a time limit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "constraint_oracle.h"
#include "engine_oracle.h"
#include "rbir/classifier.h"
#include "rbir/constraint.h"
#include "rbir/engine.h"
#include "rbir/evaluation.h"
#include "rbir/geometry.h"
#include "rbir/ivfadc.h"
#include "rbir/kmeans.h"
#include "rbir/matrix.h"
#include "rbir/mining.h"
#include "rbir/random.h"
#include "rbir/service.h"
#include "rbir/synthetic.h"
#include "service_fixture.h"
#include "test_util.h"

namespace rbir {
namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::vector<std::string> problems;

  void Check(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    problems.push_back(what);
  }
};

int failures = 0;

void Criterion(const char* name, double limit_seconds, const std::function<void(Outcome&)>& body) {
  Outcome out;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(out);
  } catch (const std::exception& e) {
    out.Check(false, std::string("exception: ") + e.what());
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream limit;
  limit << "runtime " << elapsed << "s exceeds " << limit_seconds << "s";
  out.Check(elapsed < limit_seconds, limit.str());
  std::string text = out.detail.str();
  for (size_t i = 0; i < out.problems.size() && i < 4; ++i) {
    text += (i == 0 ? " | failed: " : "; ") + out.problems[i];
  }
  std::printf("%s %s (%.2fs < %gs) %s\n", out.pass ? "PASS" : "FAIL", name, elapsed,
              limit_seconds, text.c_str());
  std::fflush(stdout);
  failures += !out.pass;
}

std::string Num(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

void CatalogCounts(Outcome& o) {
  for (auto [arity, n] : {std::pair{1, 19}, {2, 82}, {3, 213}}) {
    const size_t got = Catalog(arity).size();
    o.Check(got == static_cast<size_t>(n),
            "catalog(" + std::to_string(arity) + ")=" + std::to_string(got));
  }
  o.detail << "catalog sizes 19/82/213";
}

void CascadeRecallBound(Outcome& o) {
  Rng rng(1001);
  const CascadeParams params{3, 0.96};
  size_t stages_checked = 0;
  double worst_margin = 1.0;
  for (int trial = 0; trial < 50; ++trial) {
    const size_t npos = 5 + rng.Index(95);
    const size_t nneg = 5 + rng.Index(200 - npos - 4);  // at most 200 points
    auto d = testing::RandomLabeledSet(rng, npos, nneg, Catalog(1).size());
    const ConstraintSet set = LearnCascade(d, params);
    const auto m = EvaluateMetrics(set, d);
    const double bound = std::pow(params.min_recall, set.size());
    worst_margin = std::min(worst_margin, m.recall - bound);
    o.Check(m.recall + 1e-12 >= bound, "trial " + std::to_string(trial) + " recall " +
                                           Num(m.recall) + " < " + Num(bound));
    // Replay the cascade and compare each stage with the brute-force oracle
    // on that stage's survivors.
    LabeledFeatureSet survivors = d;
    for (size_t k = 0; k < set.size(); ++k) {
      const auto& c = set.constraints[k];
      const auto oracle = testing::OracleStageRule(survivors, params.min_recall);
      const size_t min_fp = testing::OracleMinFalsePositives(survivors, params.min_recall);
      size_t fp = 0;
      for (const auto& x : survivors.negatives) fp += c.Accepts(x.values);
      const std::string where = "trial " + std::to_string(trial) + " stage " + std::to_string(k);
      o.Check(fp == min_fp, where + " fp " + std::to_string(fp) + " vs optimum " +
                                std::to_string(min_fp));
      o.Check(c.feature == oracle.f && c.sign == oracle.s && c.threshold == oracle.theta,
              where + " differs from oracle stump");
      auto keep = [&](std::vector<PositionFeatureVector>& v) {
        std::erase_if(v, [&](const PositionFeatureVector& x) { return !c.Accepts(x.values); });
      };
      keep(survivors.positives);
      keep(survivors.negatives);
      ++stages_checked;
    }
    o.Check(set.size() == 3 || survivors.negatives.empty(),
            "trial " + std::to_string(trial) + " stopped early with negatives left");
  }
  o.detail << "50 sets, " << stages_checked
           << " stages match the oracle, min recall margin " << worst_margin;
}

void StageTrend(Outcome& o) {
  ClusterReproductionParams p;
  p.seed = 0;
  const auto rows = RunClusterReproduction(p);
  o.Check(rows.size() == 5, "expected n_c = 1..5");
  for (size_t i = 1; i < rows.size(); ++i) {
    o.Check(rows[i].mean_recall <= rows[i - 1].mean_recall + 1e-12,
            "recall rises at n_c=" + std::to_string(rows[i].stages));
    o.Check(rows[i].mean_false_positives <= rows[i - 1].mean_false_positives + 1e-12,
            "FP rises at n_c=" + std::to_string(rows[i].stages));
  }
  double f3 = 0;
  for (const auto& r : rows) {
    if (r.stages == 3) f3 = r.mean_f;
  }
  o.Check(f3 >= 0.85, "mean F at n_c=3 is " + Num(f3));
  o.detail << "recall";
  for (const auto& r : rows) o.detail << " " << r.mean_recall;
  o.detail << "; FP";
  for (const auto& r : rows) o.detail << " " << r.mean_false_positives;
  o.detail << "; F(n_c=3) " << f3;
}

void AnnQuality(Outcome& o) {
  AnnRecallParams p;
  p.num_vectors = 10000;
  p.dim = 64;
  p.num_subquantizers = 8;
  p.coarse_size = 256;
  p.probes = {1, 8, 64, 256};
  p.recall_at = {1, 10};
  const auto rows = RunAnnRecall(p);
  double prev = -1.0;
  for (const auto& r : rows) {
    const double r10 = r.recall.at(10);
    o.Check(r10 >= prev, "recall@10 drops at k_s=" + std::to_string(r.probe));
    prev = r10;
    if (r.probe == 256) o.Check(r.recall.at(1) >= 0.9, "recall@1 at k_s=256 is " + Num(r.recall.at(1)));
    if (r.probe == 64) o.Check(r10 >= 0.8, "recall@10 at k_s=64 is " + Num(r10));
    o.detail << "k_s=" << r.probe << " r@1=" << r.recall.at(1) << " r@10=" << r10 << "; ";
  }
}

void AdcConsistency(Outcome& o) {
  Rng rng(2002);
  const size_t n = 4000, dim = 64;
  const auto rows = testing::RandomRows(rng, n, dim);
  std::vector<RegionRef> refs;
  for (size_t i = 0; i < n; ++i) refs.push_back({"img" + std::to_string(i), 0, {0, 0, 1, 1}});
  IndexParams p;
  p.dim = dim;
  p.coarse_size = 32;
  p.num_subquantizers = 8;
  p.probe = 32;
  const auto index = InvertedIndex::Build(MatrixView<float>(rows, dim), refs, p);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto q = testing::RandomRows(rng, 1, dim);
    const uint64_t id = rng.Index(n);
    const auto rec = index.Reconstruct(id);
    for (Metric metric : {Metric::kL2, Metric::kInnerProduct}) {
      const double direct = metric == Metric::kL2 ? SquaredL2(q, rec) : Dot(q, rec);
      const double adc = index.AdcScore(q, metric, id);
      const double rel = std::abs(adc - direct) / std::max(std::abs(direct), 1e-300);
      worst = std::max(worst, rel);
    }
  }
  o.Check(worst <= 1e-4, "worst relative error " + Num(worst));
  o.detail << "1000 pairs x 2 metrics, worst relative error " << worst;
}

void PipelineExactness(Outcome& o) {
  testing::Fixture fx(7, 50, 3);
  o.Check(fx.data.dataset.regions.size() <= 256, "too many regions for exact codebooks");
  o.Check(fx.index.params().probe == fx.index.params().coarse_size, "not probing all lists");
  Rng rng(3003);
  const auto& ds = fx.data.dataset;
  size_t matched = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n_o = 1 + trial % 3;
    Query q;
    std::vector<testing::OracleObject> oracle;
    for (size_t l = 0; l < n_o; ++l) {
      if (rng.Index(2) == 0) {
        auto v = testing::Row(ds, rng.Index(ds.regions.size()));
        for (float& x : v) x += 0.05f * float(rng.Normal());
        q.objects.push_back({ByExample{v, std::nullopt}, {}});
        oracle.push_back({v, false});
      } else {
        const std::string name = "q" + std::to_string(trial) + "_" + std::to_string(l);
        std::vector<float> w(32);
        for (float& x : w) x = float(rng.Normal());
        fx.classifiers.Add({name, ClassifierKind::kCategory, w, 0, 1, 1});
        q.objects.push_back({ByCategory{name}, {}});
        oracle.push_back({w, true});
      }
    }
    q.constraints.arity = static_cast<int>(n_o);
    q.top_k = 10;
    q.shortlist_r = 1000;
    const auto got = RunQuery(q, fx.context());
    const auto want = testing::OraclePipeline(ds, oracle, q.shortlist_r);
    bool same = got.results.size() == 10 && want.size() >= 10;
    for (size_t i = 0; same && i < 10; ++i) {
      same = got.results[i].image_id == want[i].image_id &&
             std::abs(got.results[i].image_score - want[i].score) <= 1e-6;
    }
    o.Check(same, "query " + std::to_string(trial) + " top-10 differs");
    matched += same;
  }
  o.detail << matched << "/20 queries match the oracle top-10";
}

void RelationshipConstraints(Outcome& o) {
  RelationshipBenchmarkParams p;
  p.predicates = {"left_of", "above", "overlaps"};
  p.train_per_predicate = 500;
  p.train_negatives = 1500;
  p.stages = 2;
  p.min_recall = 0.96;
  p.seed = 0;
  for (const auto& r : RunRelationshipBenchmark(p)) {
    o.Check(r.train.recall >= 0.92, r.predicate + " train recall " + Num(r.train.recall));
    o.Check(r.test.recall >= 0.9, r.predicate + " test recall " + Num(r.test.recall));
    o.Check(r.train.selectivity <= 0.5,
            r.predicate + " train selectivity " + Num(r.train.selectivity));
    o.Check(r.test.selectivity <= 0.5, r.predicate + " test selectivity " + Num(r.test.selectivity));
    o.detail << r.predicate << ": train rec " << r.train.recall << " test rec " << r.test.recall
             << " sel " << r.test.selectivity << " (logistic stump rec " << r.baseline_test_recall
             << "); ";
  }
}

void MetricFormulas(Outcome& o) {
  struct Case {
    size_t tp, fp, npos, nneg;
    double precision, recall, f, selectivity, harmonic;
  };
  // Worked by hand.
  const std::vector<Case> cases = {
      {8, 2, 10, 10, 0.8, 0.8, 0.8, 0.5, 0.8 / 1.3},
      {5, 5, 10, 20, 0.5, 0.5, 0.5, 1.0 / 3.0, 4.0 / 7.0},
      {10, 0, 10, 10, 1.0, 1.0, 1.0, 0.5, 2.0 / 3.0},
      {0, 0, 10, 10, 1.0, 0.0, 0.0, 0.0, 0.0},
      {3, 9, 4, 12, 0.25, 0.75, 0.375, 0.75, 0.375},
      {1, 1, 2, 4, 0.5, 0.5, 0.5, 1.0 / 3.0, 4.0 / 7.0},
      {9, 1, 10, 100, 0.9, 0.9, 0.9, 1.0 / 11.0, 18.0 / 19.9},
      {2, 8, 8, 8, 0.2, 0.25, 0.1 / 0.45, 0.625, 0.3},
      {6, 3, 8, 6, 2.0 / 3.0, 0.75, 12.0 / 17.0, 9.0 / 14.0, 15.0 / 31.0},
  };
  const double tol = 1e-6;
  for (size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const auto m = MetricsFromCounts(c.tp, c.fp, c.npos, c.nneg);
    const bool ok = std::abs(m.precision - c.precision) <= tol &&
                    std::abs(m.recall - c.recall) <= tol && std::abs(m.f_value - c.f) <= tol &&
                    std::abs(m.selectivity - c.selectivity) <= tol &&
                    std::abs(m.harmonic - c.harmonic) <= tol;
    o.Check(ok, "case " + std::to_string(i));
  }
  const double h = HarmonicScore(0.8, 0.6);
  o.Check(std::abs(h - 0.5333333333) <= tol, "harmonic(0.8, 0.6) = " + Num(h));
  o.detail << cases.size() + 1 << " cases; harmonic(0.8, 0.6) = " << h;
}

void CanvasRule(Outcome& o) {
  Rng rng(4004);
  size_t layouts = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + static_cast<int>(rng.Index(3));
    const double W = rng.Uniform(50, 2000), H = rng.Uniform(50, 2000);
    std::vector<CanvasBox> canvas;
    std::vector<Box> boxes;
    for (int l = 0; l < n; ++l) {
      double x0 = rng.Uniform(0, 0.9), y0 = rng.Uniform(0, 0.9);
      if (rng.Index(10) == 0) x0 = 0.0;
      const Box frac{x0, y0, std::min(1.0, x0 + rng.Uniform(0.01, 0.6)),
                     std::min(1.0, y0 + rng.Uniform(0.01, 0.6))};
      canvas.push_back({l, frac});
      boxes.push_back({frac.left * W, frac.top * H, frac.right * W, frac.bottom * H});
    }
    const ConstraintSet set = CanvasToConstraints(canvas);
    o.Check(set.size() == 8u * n, "trial " + std::to_string(trial) + " emitted " +
                                      std::to_string(set.size()) + " constraints");
    const auto& catalog = Catalog(n);
    for (const auto& cb : canvas) {
      const std::string obj = "O" + std::to_string(cb.object + 1);
      const std::pair<const char*, double> feats[] = {{".left/I.width", cb.box.left},
                                                      {".right/I.width", cb.box.right},
                                                      {".top/I.height", cb.box.top},
                                                      {".bottom/I.height", cb.box.bottom}};
      for (const auto& [suffix, x] : feats) {
        const int f = catalog.IndexOf(obj + suffix);
        bool lo = false, hi = false;
        for (const auto& c : set.constraints) {
          if (c.feature != f) continue;
          lo |= c.sign == 1 && std::abs(c.threshold - 0.9 * x) <= 1e-12;
          hi |= c.sign == -1 && std::abs(c.threshold - 1.1 * x) <= 1e-12;
        }
        o.Check(lo && hi, "trial " + std::to_string(trial) + " " + obj + suffix);
      }
    }
    o.Check(SatisfiesAll(set, ComputePositionFeatures({"i", W, H}, boxes)),
            "trial " + std::to_string(trial) + " matching layout rejected");
    ++layouts;
  }
  o.detail << layouts << " random canvases, 8 constraints per box, matching layouts pass";
}

void DeterminismAndPersistence(Outcome& o) {
  testing::TempDir dir;
  // Seeded generation.
  const auto spec = DefaultSyntheticSpec(11, 60, 32);
  WriteSynthetic(GenerateSynthetic(spec), dir / "a");
  WriteSynthetic(GenerateSynthetic(spec), dir / "b");
  for (const char* f : {"regions.jsonl", "features.bin", "labels.jsonl", "triples.jsonl"}) {
    o.Check(ReadFile(dir / "a" / f) == ReadFile(dir / "b" / f), std::string("synthetic ") + f);
  }
  const auto data = GenerateSynthetic(spec);
  const auto F = data.dataset.feature_view();

  // k-means, index build, SVM, cascade, mining.
  KmeansParams kp;
  kp.k = 8;
  kp.seed = 3;
  const auto k1 = TrainKmeans(F, kp), k2 = TrainKmeans(F, kp);
  o.Check(k1.centroids == k2.centroids && k1.assignment == k2.assignment, "k-means");

  IndexParams ip;
  ip.dim = 32;
  ip.coarse_size = 8;
  ip.num_subquantizers = 8;
  ip.probe = 8;
  ip.seed = 5;
  const auto idx1 = InvertedIndex::Build(F, data.dataset.regions, ip);
  const auto idx2 = InvertedIndex::Build(F, data.dataset.regions, ip);
  idx1.Save(dir / "i1.ivf");
  idx2.Save(dir / "i2.ivf");
  o.Check(ReadFile(dir / "i1.ivf") == ReadFile(dir / "i2.ivf"), "index bytes");

  std::vector<float> pos, neg;
  for (size_t i = 0; i < data.region_labels.size(); ++i) {
    auto& dst = data.region_labels[i].category == "person" ? pos : neg;
    dst.insert(dst.end(), F.row(i).begin(), F.row(i).end());
  }
  SvmParams sp;
  sp.seed = 9;
  const auto c1 = TrainSvm(MatrixView<float>(pos, 32), MatrixView<float>(neg, 32), sp, "person");
  const auto c2 = TrainSvm(MatrixView<float>(pos, 32), MatrixView<float>(neg, 32), sp, "person");
  o.Check(c1.weights == c2.weights && c1.bias == c2.bias, "svm");

  Rng r1(12), r2(12);
  const auto d1 = testing::RandomLabeledSet(r1, 80, 150, 19);
  const auto d2 = testing::RandomLabeledSet(r2, 80, 150, 19);
  o.Check(LearnCascade(d1, {}) == LearnCascade(d2, {}), "cascade");

  const auto clusters = GenerateLayoutClusters(3, 30, 0.1, 13);
  std::vector<LayoutSample> samples;
  for (size_t i = 0; i < clusters.layouts.size(); ++i) {
    const std::vector<Box> b = {clusters.layouts[i].first, clusters.layouts[i].second};
    samples.push_back({"img" + std::to_string(i), b, ComputePositionFeatures(clusters.image, b)});
  }
  const auto m1 = MineRecommendations(samples, MiningParams{});
  const auto m2 = MineRecommendations(samples, MiningParams{});
  bool same_mining = m1.recommendations.size() == m2.recommendations.size();
  for (size_t i = 0; same_mining && i < m1.recommendations.size(); ++i) {
    same_mining = m1.recommendations[i].constraints == m2.recommendations[i].constraints;
  }
  o.Check(same_mining, "mining");

  // Index roundtrip preserves search results.
  const auto loaded = InvertedIndex::Load(dir / "i1.ivf");
  Rng qr(14);
  for (int t = 0; t < 20; ++t) {
    const auto q = testing::RandomRows(qr, 1, 32);
    for (Metric m : {Metric::kL2, Metric::kInnerProduct}) {
      o.Check(idx1.Search(q, m, 4, 50) == loaded.Search(q, m, 4, 50), "index roundtrip search");
    }
  }

  // Classifier cache roundtrip.
  ClassifierCache cache(dir / "cache");
  cache.Put(c1);
  const auto back = cache.Get("person");
  o.Check(back.weights == c1.weights && back.bias == c1.bias, "classifier roundtrip");

  // Whole-state roundtrip through a restarted service.
  testing::SyntheticFiles files(15);
  ServiceConfig config;
  config.state_dir = dir / "state";
  std::string before;
  {
    Service service(config);
    testing::Populate(service, files);
    auto j = service.Search(testing::TwoObjectSearch());
    j.erase("snapshot_id");
    before = j.dump();
  }
  Service restarted(config);
  auto j = restarted.Search(testing::TwoObjectSearch());
  j.erase("snapshot_id");
  o.Check(j.dump() == before, "state roundtrip changes query results");
  o.detail << "generation, k-means, index, svm, cascade, mining reproduce; "
              "index/classifier/state roundtrips preserve results";
}

}  // namespace
}  // namespace rbir

int main() {
  using namespace rbir;
  Criterion("catalog-counts", 1, CatalogCounts);
  Criterion("cascade-recall-bound", 30, CascadeRecallBound);
  Criterion("cascade-stage-trend", 60, StageTrend);
  Criterion("ann-quality", 300, AnnQuality);
  Criterion("adc-consistency", 10, AdcConsistency);
  Criterion("pipeline-exactness", 60, PipelineExactness);
  Criterion("relationship-constraints", 60, RelationshipConstraints);
  Criterion("metric-formulas", 1, MetricFormulas);
  Criterion("canvas-rule", 1, CanvasRule);
  Criterion("determinism-persistence", 60, DeterminismAndPersistence);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
