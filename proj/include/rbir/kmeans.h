#ifndef RBIR_KMEANS_H_
#define RBIR_KMEANS_H_

#include <cstdint>
#include <vector>

#include "rbir/matrix.h"

namespace rbir {

struct KmeansParams {
  size_t k = 1;
  int max_iters = 25;
  uint64_t seed = 0;
  // Stop when the relative inertia change between iterations drops below.
  double tolerance = 1e-4;
  // Permit k larger than the number of distinct points (duplicate
  // centroids). Otherwise such a request is an insufficient_data error.
  bool allow_duplicates = false;
};

template <typename T>
struct KmeansResult {
  std::vector<T> centroids;  // k x dim, row-major
  std::vector<uint32_t> assignment;
  double inertia = 0.0;
  // Inertia after each assignment step.
  std::vector<double> inertia_history;
  int iterations = 0;
};

// k-means++ seeding followed by Lloyd iterations. Empty clusters are
// reseeded with the point farthest from its assigned centroid. Assignment
// ties go to the lowest centroid index. Deterministic given the inputs and
// the seed.
template <typename T>
KmeansResult<T> TrainKmeans(MatrixView<T> points, const KmeansParams& params);

// Index of the nearest centroid by squared L2 (lowest index on ties).
template <typename T>
uint32_t NearestCentroid(std::span<const T> point, MatrixView<T> centroids,
                         double* distance = nullptr);

size_t CountDistinctRows(MatrixView<float> points);
size_t CountDistinctRows(MatrixView<double> points);

}  // namespace rbir

#endif  // RBIR_KMEANS_H_
