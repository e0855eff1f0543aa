#include "rbir/mining.h"

#include <algorithm>
#include <cmath>

#include "rbir/errors.h"
#include "rbir/kmeans.h"

namespace rbir {

ClusterResult ClusterLayouts(const std::vector<PositionFeatureVector>& vectors,
                             const MiningParams& params) {
  if (vectors.empty()) {
    Fail(ErrorCode::kInsufficientData, "no layouts to cluster");
  }
  if (params.num_clusters < 1) {
    Fail(ErrorCode::kInvalidRequest, "K must be positive");
  }
  const int arity = vectors.front().arity;
  const size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.arity != arity || v.size() != dim) {
      Fail(ErrorCode::kDimensionMismatch, "layouts have mixed arity");
    }
  }
  const size_t n = vectors.size();
  ClusterResult result;
  result.num_clusters = std::min(params.num_clusters, n);
  result.reduced_k = result.num_clusters < params.num_clusters;
  result.mean.assign(dim, 0.0);
  result.stddev.assign(dim, 0.0);
  for (const auto& v : vectors) {
    for (size_t d = 0; d < dim; ++d) result.mean[d] += v[d];
  }
  for (double& m : result.mean) m /= double(n);
  for (const auto& v : vectors) {
    for (size_t d = 0; d < dim; ++d) {
      const double c = v[d] - result.mean[d];
      result.stddev[d] += c * c;
    }
  }
  for (double& s : result.stddev) {
    s = std::max(std::sqrt(s / double(n)), kStdFloor);
  }
  std::vector<double> standardized(n * dim);
  for (size_t i = 0; i < n; ++i) {
    for (size_t d = 0; d < dim; ++d) {
      standardized[i * dim + d] =
          (vectors[i][d] - result.mean[d]) / result.stddev[d];
    }
  }
  KmeansParams kp;
  kp.k = result.num_clusters;
  kp.max_iters = params.kmeans_iters;
  kp.seed = params.seed;
  kp.allow_duplicates = true;
  auto km = TrainKmeans(MatrixView<double>(standardized, dim), kp);
  result.assignments = std::move(km.assignment);
  result.centroids = std::move(km.centroids);
  return result;
}

MiningOutcome MineRecommendations(const std::vector<LayoutSample>& samples,
                                  const MiningParams& params) {
  MiningOutcome outcome;
  if (samples.size() < params.min_cluster) {
    outcome.diagnostics.push_back(
        "only " + std::to_string(samples.size()) +
        " results; need at least min_cluster=" +
        std::to_string(params.min_cluster));
    return outcome;
  }
  std::vector<PositionFeatureVector> vectors;
  vectors.reserve(samples.size());
  for (const auto& s : samples) vectors.push_back(s.features);
  outcome.clusters = ClusterLayouts(vectors, params);
  const ClusterResult& clusters = outcome.clusters;
  if (clusters.reduced_k) {
    outcome.diagnostics.push_back("K reduced to " +
                                  std::to_string(clusters.num_clusters) +
                                  " (fewer results than K)");
  }

  std::vector<size_t> sizes(clusters.num_clusters, 0);
  for (uint32_t a : clusters.assignments) ++sizes[a];

  const size_t dim = vectors.front().size();
  const int arity = vectors.front().arity;
  for (size_t k = 0; k < clusters.num_clusters; ++k) {
    if (sizes[k] < params.min_cluster) continue;
    LabeledFeatureSet data;
    data.arity = arity;
    size_t representative = samples.size();
    double best = 0.0;
    const double* centroid = clusters.centroids.data() + k * dim;
    for (size_t i = 0; i < samples.size(); ++i) {
      if (clusters.assignments[i] != k) {
        data.negatives.push_back(vectors[i]);
        continue;
      }
      data.positives.push_back(vectors[i]);
      double d2 = 0.0;
      for (size_t d = 0; d < dim; ++d) {
        const double z = (vectors[i][d] - clusters.mean[d]) / clusters.stddev[d];
        d2 += (z - centroid[d]) * (z - centroid[d]);
      }
      if (representative == samples.size() || d2 < best) {
        representative = i;
        best = d2;
      }
    }
    MiningRecommendation rec;
    rec.constraints = LearnCascade(data, params.cascade);
    rec.constraints.provenance = Provenance::kMining;
    rec.metrics = EvaluateMetrics(rec.constraints, data);
    rec.representative = representative;
    rec.representative_image = samples[representative].image_id;
    rec.representative_boxes = samples[representative].boxes;
    rec.cluster_id = k;
    rec.cluster_size = sizes[k];
    outcome.recommendations.push_back(std::move(rec));
  }
  std::stable_sort(outcome.recommendations.begin(),
                   outcome.recommendations.end(),
                   [](const MiningRecommendation& a,
                      const MiningRecommendation& b) {
                     return a.cluster_size > b.cluster_size;
                   });
  if (outcome.recommendations.empty()) {
    outcome.diagnostics.push_back("every cluster has fewer than " +
                                  std::to_string(params.min_cluster) +
                                  " members");
  }
  return outcome;
}

nlohmann::json RecommendationToJson(const MiningRecommendation& rec) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const Box& b : rec.representative_boxes) {
    boxes.push_back({b.left, b.top, b.right, b.bottom});
  }
  return {{"constraints", ConstraintSetToJson(rec.constraints)},
          {"representative",
           {{"image_id", rec.representative_image}, {"boxes", boxes}}},
          {"cluster_size", rec.cluster_size},
          {"metrics",
           {{"p", rec.metrics.precision},
            {"r", rec.metrics.recall},
            {"f", rec.metrics.f_value}}}};
}

}  // namespace rbir
