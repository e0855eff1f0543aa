#include "rbir/evaluation.h"

#include <algorithm>
#include <cmath>

#include "rbir/errors.h"
#include "rbir/ivfadc.h"
#include "rbir/mining.h"
#include "rbir/synthetic.h"

namespace rbir {

std::vector<ClusterReproductionRow> RunClusterReproduction(
    const ClusterReproductionParams& params) {
  if (params.trials == 0 || params.stage_counts.empty()) {
    Fail(ErrorCode::kInvalidRequest, "need at least one trial and stage count");
  }
  std::vector<ClusterReproductionRow> rows;
  for (int stages : params.stage_counts) {
    if (stages < 1) Fail(ErrorCode::kInvalidRequest, "stage counts must be >= 1");
    ClusterReproductionRow row;
    row.stages = stages;
    for (size_t trial = 0; trial < params.trials; ++trial) {
      const uint64_t trial_seed = params.seed * 1000003 + trial;
      const LayoutClusters data =
          GenerateLayoutClusters(params.clusters_per_trial, params.per_cluster,
                                 params.jitter, trial_seed);
      std::vector<LayoutSample> samples;
      for (const auto& [a, b] : data.layouts) {
        const std::vector<Box> boxes = {a, b};
        samples.push_back({data.image.image_id, boxes,
                           ComputePositionFeatures(data.image, boxes)});
      }
      MiningParams mining;
      mining.num_clusters = params.mining_k;
      mining.seed = trial_seed;
      mining.cascade = {stages, params.min_recall};
      const MiningOutcome outcome = MineRecommendations(samples, mining);
      for (const auto& rec : outcome.recommendations) {
        row.mean_precision += rec.metrics.precision;
        row.mean_recall += rec.metrics.recall;
        row.mean_f += rec.metrics.f_value;
        row.mean_false_positives += double(rec.metrics.false_positives);
        ++row.num_sets;
      }
    }
    if (row.num_sets > 0) {
      const double n = double(row.num_sets);
      row.mean_precision /= n;
      row.mean_recall /= n;
      row.mean_f /= n;
      row.mean_false_positives /= n;
    }
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json ClusterReproductionToJson(
    const std::vector<ClusterReproductionRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"n_c", r.stages},
                   {"precision", r.mean_precision},
                   {"recall", r.mean_recall},
                   {"f", r.mean_f},
                   {"false_positives", r.mean_false_positives},
                   {"sets", r.num_sets}});
  }
  return out;
}

std::vector<AnnRecallRow> RunAnnRecall(const AnnRecallParams& params) {
  if (params.recall_at.empty() || params.probes.empty()) {
    Fail(ErrorCode::kInvalidRequest, "need probe values and recall cutoffs");
  }
  const AnnBenchmark bench = GenerateAnnBenchmark(
      params.num_vectors, params.num_queries, params.dim, params.seed);
  const MatrixView<float> database(bench.database, bench.dim);
  const MatrixView<float> queries(bench.queries, bench.dim);
  std::vector<RegionRef> regions(database.rows());
  for (size_t i = 0; i < regions.size(); ++i) {
    regions[i] = {"ann", static_cast<uint32_t>(i), Box{0, 0, 1, 1}};
  }
  IndexParams ip;
  ip.dim = params.dim;
  ip.coarse_size = params.coarse_size;
  ip.num_subquantizers = params.num_subquantizers;
  ip.probe = params.coarse_size;  // each search passes its own probe
  ip.seed = params.seed;
  const InvertedIndex index = InvertedIndex::Build(database, regions, ip);
  const size_t depth = *std::max_element(params.recall_at.begin(),
                                         params.recall_at.end());

  std::vector<std::vector<ScoredRegion>> exact;
  for (size_t q = 0; q < queries.rows(); ++q) {
    exact.push_back(ExactSearch(database, queries.row(q), Metric::kL2, 1));
  }
  std::vector<AnnRecallRow> rows;
  for (uint32_t probe : params.probes) {
    std::vector<std::vector<ScoredRegion>> approx;
    for (size_t q = 0; q < queries.rows(); ++q) {
      approx.push_back(index.Search(queries.row(q), Metric::kL2, probe, depth));
    }
    AnnRecallRow row;
    row.probe = probe;
    for (size_t r : params.recall_at) row.recall[r] = RecallAt(approx, exact, r);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json AnnRecallToJson(const std::vector<AnnRecallRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [r, value] : row.recall) {
      recall["recall@" + std::to_string(r)] = value;
    }
    out.push_back({{"k_s", row.probe}, {"recall", recall}});
  }
  return out;
}

LabeledFeatureSet LabelTriples(const TripleDataset& triples,
                               std::string_view predicate) {
  LabeledFeatureSet set;
  set.arity = 2;
  for (const auto& t : triples) {
    (t.predicate == predicate ? set.positives : set.negatives)
        .push_back(t.Features());
  }
  return set;
}

namespace {

struct Logistic1d {
  double mean = 0.0, scale = 1.0, a = 0.0, b = 0.0, loss = 0.0;
};

// Newton's method on a lightly ridged 1-D logistic loss.
Logistic1d FitLogistic(const LabeledFeatureSet& data, size_t f) {
  constexpr double kRidge = 1e-4;
  Logistic1d m;
  const size_t n = data.positives.size() + data.negatives.size();
  auto value = [&](size_t i) {
    return i < data.positives.size()
               ? data.positives[i][f]
               : data.negatives[i - data.positives.size()][f];
  };
  for (size_t i = 0; i < n; ++i) m.mean += value(i);
  m.mean /= double(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) var += (value(i) - m.mean) * (value(i) - m.mean);
  m.scale = std::max(std::sqrt(var / double(n)), 1e-12);
  for (int iter = 0; iter < 30; ++iter) {
    double ga = kRidge * m.a, gb = 0.0, haa = kRidge, hab = 0.0, hbb = 1e-9;
    for (size_t i = 0; i < n; ++i) {
      const double z = (value(i) - m.mean) / m.scale;
      const double y = i < data.positives.size() ? 1.0 : 0.0;
      const double p = 1.0 / (1.0 + std::exp(-(m.a * z + m.b)));
      const double w = p * (1.0 - p);
      ga += (p - y) * z / double(n);
      gb += (p - y) / double(n);
      haa += w * z * z / double(n);
      hab += w * z / double(n);
      hbb += w / double(n);
    }
    const double det = haa * hbb - hab * hab;
    if (!(det > 0.0)) break;
    m.a -= (hbb * ga - hab * gb) / det;
    m.b -= (haa * gb - hab * ga) / det;
  }
  m.loss = 0.5 * kRidge * m.a * m.a;
  for (size_t i = 0; i < n; ++i) {
    const double s = m.a * (value(i) - m.mean) / m.scale + m.b;
    const double y = i < data.positives.size() ? 1.0 : -1.0;
    m.loss += std::log1p(std::exp(-y * s)) / double(n);
  }
  return m;
}

double StumpRecall(const Logistic1d& m, size_t f,
                   const std::vector<PositionFeatureVector>& positives) {
  if (positives.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& x : positives) {
    if (m.a * (x[f] - m.mean) / m.scale + m.b >= 0.0) ++hits;
  }
  return double(hits) / double(positives.size());
}

}  // namespace

std::pair<double, double> LogisticStumpRecall(const LabeledFeatureSet& train,
                                              const LabeledFeatureSet& test) {
  if (train.positives.empty() || train.negatives.empty()) {
    Fail(ErrorCode::kInsufficientData, "baseline needs positives and negatives");
  }
  const size_t dims = train.positives.front().size();
  Logistic1d best;
  size_t best_f = 0;
  for (size_t f = 0; f < dims; ++f) {
    const Logistic1d m = FitLogistic(train, f);
    if (f == 0 || m.loss < best.loss) {
      best = m;
      best_f = f;
    }
  }
  return {StumpRecall(best, best_f, train.positives),
          StumpRecall(best, best_f, test.positives)};
}

std::vector<RelationshipBenchmarkRow> RunRelationshipBenchmark(
    const RelationshipBenchmarkParams& params) {
  auto make = [&](size_t per_predicate, size_t negatives, uint64_t seed) {
    TripleSpec spec;
    spec.seed = seed;
    for (const auto& p : params.predicates) spec.per_predicate[p] = per_predicate;
    spec.num_random = negatives;
    return GenerateRelationshipTriples(spec);
  };
  const TripleDataset train = make(params.train_per_predicate,
                                   params.train_negatives, params.seed * 2);
  const TripleDataset test = make(params.test_per_predicate,
                                  params.test_negatives, params.seed * 2 + 1);
  const CascadeParams cascade{params.stages, params.min_recall};
  std::vector<RelationshipBenchmarkRow> rows;
  for (const auto& predicate : params.predicates) {
    RelationshipBenchmarkRow row;
    row.predicate = predicate;
    row.constraints = LearnRelationshipConstraints(train, predicate, cascade);
    const LabeledFeatureSet train_set = LabelTriples(train, predicate);
    const LabeledFeatureSet test_set = LabelTriples(test, predicate);
    row.train = EvaluateMetrics(row.constraints, train_set);
    row.test = EvaluateMetrics(row.constraints, test_set);
    std::tie(row.baseline_train_recall, row.baseline_test_recall) =
        LogisticStumpRecall(train_set, test_set);
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json RelationshipBenchmarkToJson(
    const std::vector<RelationshipBenchmarkRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"predicate", r.predicate},
                   {"constraints", ConstraintSetToJson(r.constraints)},
                   {"train", MetricsToJson(r.train)},
                   {"test", MetricsToJson(r.test)},
                   {"baseline_recall",
                    {{"train", r.baseline_train_recall},
                     {"test", r.baseline_test_recall}}}});
  }
  return out;
}

}  // namespace rbir
