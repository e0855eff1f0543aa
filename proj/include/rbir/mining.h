#ifndef RBIR_MINING_H_
#define RBIR_MINING_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "rbir/constraint.h"
#include "rbir/geometry.h"

namespace rbir {

struct MiningParams {
  size_t num_clusters = 10;  // K
  size_t min_cluster = 5;    // clusters smaller than this are dropped
  CascadeParams cascade;
  uint64_t seed = 0;
  int kmeans_iters = 100;
};

struct ClusterResult {
  std::vector<uint32_t> assignments;
  size_t num_clusters = 0;      // effective K
  bool reduced_k = false;       // fewer inputs than the requested K
  std::vector<double> centroids;  // K x n_p, standardized space
  std::vector<double> mean;
  std::vector<double> stddev;   // floored at 1e-6
};

inline constexpr double kStdFloor = 1e-6;

// Per-dimension z-scoring followed by seeded k-means.
ClusterResult ClusterLayouts(const std::vector<PositionFeatureVector>& vectors,
                             const MiningParams& params);

struct LayoutSample {
  std::string image_id;
  std::vector<Box> boxes;
  PositionFeatureVector features;
};

struct MiningRecommendation {
  ConstraintSet constraints;
  size_t representative = 0;  // index into the mined samples
  std::string representative_image;
  std::vector<Box> representative_boxes;
  size_t cluster_id = 0;
  size_t cluster_size = 0;
  DetectionMetrics metrics;  // training metrics against the clustering
};

struct MiningOutcome {
  ClusterResult clusters;
  std::vector<MiningRecommendation> recommendations;
  std::vector<std::string> diagnostics;
};

// Clusters the layouts and learns, per surviving cluster, a cascade
// separating its members from every other sample in original feature
// units. Recommendations are ordered by cluster size (descending), then
// cluster id.
MiningOutcome MineRecommendations(const std::vector<LayoutSample>& samples,
                                  const MiningParams& params);

nlohmann::json RecommendationToJson(const MiningRecommendation& rec);

}  // namespace rbir

#endif  // RBIR_MINING_H_
