#ifndef RBIR_EVALUATION_H_
#define RBIR_EVALUATION_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbir/constraint.h"
#include "rbir/langrec.h"

namespace rbir {

// Cluster reproduction: layouts are clustered, constraints are learned per
// cluster, and each set is scored against its own cluster as ground truth.
struct ClusterReproductionParams {
  size_t trials = 10;
  size_t clusters_per_trial = 3;
  size_t per_cluster = 40;
  double jitter = 0.10;
  size_t mining_k = 3;
  std::vector<int> stage_counts = {1, 2, 3, 4, 5};
  double min_recall = 0.96;
  uint64_t seed = 0;
};

struct ClusterReproductionRow {
  int stages = 0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f = 0.0;
  double mean_false_positives = 0.0;
  size_t num_sets = 0;
};

std::vector<ClusterReproductionRow> RunClusterReproduction(
    const ClusterReproductionParams& params);
nlohmann::json ClusterReproductionToJson(
    const std::vector<ClusterReproductionRow>& rows);

struct AnnRecallParams {
  size_t num_vectors = 10000;
  size_t num_queries = 200;
  uint32_t dim = 64;
  uint32_t num_subquantizers = 8;
  uint32_t coarse_size = 256;
  std::vector<uint32_t> probes = {1, 8, 64, 256};
  std::vector<size_t> recall_at = {1, 10, 100};
  uint64_t seed = 0;
};

struct AnnRecallRow {
  uint32_t probe = 0;
  std::map<size_t, double> recall;  // R -> recall@R
};

// Recall@R: fraction of queries whose exact nearest neighbour (L2) appears
// in the approximate top R.
std::vector<AnnRecallRow> RunAnnRecall(const AnnRecallParams& params);
nlohmann::json AnnRecallToJson(const std::vector<AnnRecallRow>& rows);

struct RelationshipBenchmarkParams {
  std::vector<std::string> predicates = {"left_of", "above", "overlaps"};
  size_t train_per_predicate = 500;
  size_t train_negatives = 1500;
  size_t test_per_predicate = 1000;
  size_t test_negatives = 3000;
  int stages = 2;
  double min_recall = 0.96;
  uint64_t seed = 0;
};

struct RelationshipBenchmarkRow {
  std::string predicate;
  ConstraintSet constraints;
  DetectionMetrics train;
  DetectionMetrics test;
  // Single-feature logistic regression thresholded at probability 0.5.
  double baseline_train_recall = 0.0;
  double baseline_test_recall = 0.0;
};

std::vector<RelationshipBenchmarkRow> RunRelationshipBenchmark(
    const RelationshipBenchmarkParams& params);
nlohmann::json RelationshipBenchmarkToJson(
    const std::vector<RelationshipBenchmarkRow>& rows);

// Labeled pairwise features: records with `predicate` are positives, all
// others negatives.
LabeledFeatureSet LabelTriples(const TripleDataset& triples,
                               std::string_view predicate);

// Best single-feature logistic regression (lowest training loss) as a
// plain-classifier reference. Returns recall on `train` and `test`.
std::pair<double, double> LogisticStumpRecall(const LabeledFeatureSet& train,
                                              const LabeledFeatureSet& test);

}  // namespace rbir

#endif  // RBIR_EVALUATION_H_
