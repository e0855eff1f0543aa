#include "rbir/kmeans.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_set>

#include "rbir/errors.h"
#include "rbir/random.h"

namespace rbir {

namespace {

template <typename T>
double Distance(std::span<const T> a, std::span<const T> b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sum += d * d;
  }
  return sum;
}

// Float rows use float accumulation on the hot path; the assignment is
// recomputed in double for the reported inertia.
inline float FastDistance(std::span<const float> a, std::span<const float> b) {
  float sum = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

inline double FastDistance(std::span<const double> a,
                           std::span<const double> b) {
  return Distance(a, b);
}

template <typename T>
std::vector<T> SeedPlusPlus(MatrixView<T> points, size_t k, Rng& rng) {
  const size_t n = points.rows();
  const size_t dim = points.dim();
  std::vector<T> centroids;
  centroids.reserve(k * dim);
  auto append = [&](size_t i) {
    auto row = points.row(i);
    centroids.insert(centroids.end(), row.begin(), row.end());
  };
  append(rng.Index(n));
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  for (size_t c = 1; c < k; ++c) {
    const std::span<const T> last(centroids.data() + (c - 1) * dim, dim);
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], Distance(points.row(i), last));
      total += best[i];
    }
    size_t pick = n - 1;
    if (total > 0.0) {
      double target = rng.Uniform() * total;
      for (size_t i = 0; i < n; ++i) {
        target -= best[i];
        if (target < 0.0 && best[i] > 0.0) {
          pick = i;
          break;
        }
      }
      if (best[pick] == 0.0) {
        // Rounding pushed us off the end; take the last positive weight.
        for (size_t i = n; i-- > 0;) {
          if (best[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = rng.Index(n);
    }
    append(pick);
  }
  return centroids;
}

template <typename T>
size_t CountDistinct(MatrixView<T> points) {
  std::unordered_set<std::string_view> seen;
  const size_t bytes = points.dim() * sizeof(T);
  for (size_t i = 0; i < points.rows(); ++i) {
    seen.insert(std::string_view(
        reinterpret_cast<const char*>(points.row(i).data()), bytes));
  }
  return seen.size();
}

}  // namespace

size_t CountDistinctRows(MatrixView<float> points) {
  return CountDistinct(points);
}
size_t CountDistinctRows(MatrixView<double> points) {
  return CountDistinct(points);
}

template <typename T>
uint32_t NearestCentroid(std::span<const T> point, MatrixView<T> centroids,
                         double* distance) {
  uint32_t best = 0;
  auto best_d = FastDistance(point, centroids.row(0));
  for (size_t c = 1; c < centroids.rows(); ++c) {
    const auto d = FastDistance(point, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<uint32_t>(c);
    }
  }
  if (distance != nullptr) *distance = best_d;
  return best;
}

template <typename T>
KmeansResult<T> TrainKmeans(MatrixView<T> points, const KmeansParams& params) {
  const size_t n = points.rows();
  const size_t dim = points.dim();
  const size_t k = params.k;
  if (n == 0) Fail(ErrorCode::kInsufficientData, "k-means needs at least one point");
  if (k == 0) Fail(ErrorCode::kInvalidRequest, "k-means needs k >= 1");
  if (!params.allow_duplicates) {
    const size_t distinct = CountDistinct(points);
    if (k > distinct) {
      Fail(ErrorCode::kInsufficientData,
           "k=" + std::to_string(k) + " exceeds the " +
               std::to_string(distinct) + " distinct points");
    }
  }

  Rng rng(params.seed);
  KmeansResult<T> result;
  result.centroids = SeedPlusPlus(points, k, rng);
  result.assignment.assign(n, 0);
  std::vector<double> point_dist(n, 0.0);
  std::vector<double> sums(k * dim);
  std::vector<size_t> counts(k);

  auto assign = [&] {
    MatrixView<T> cents(result.centroids, dim);
    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
      result.assignment[i] = NearestCentroid(points.row(i), cents);
      point_dist[i] = Distance(points.row(i), cents.row(result.assignment[i]));
      inertia += point_dist[i];
    }
    return inertia;
  };

  double inertia = assign();
  result.inertia_history.push_back(inertia);
  for (int iter = 0; iter < params.max_iters; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (size_t i = 0; i < n; ++i) {
      const uint32_t c = result.assignment[i];
      ++counts[c];
      auto row = points.row(i);
      for (size_t d = 0; d < dim; ++d) sums[c * dim + d] += row[d];
    }
    std::vector<bool> taken(n, false);
    for (size_t c = 0; c < k; ++c) {
      T* cent = result.centroids.data() + c * dim;
      if (counts[c] > 0) {
        for (size_t d = 0; d < dim; ++d) {
          cent[d] = static_cast<T>(sums[c * dim + d] / counts[c]);
        }
        continue;
      }
      // Empty cluster: move it onto the worst-served point.
      size_t far = n;
      for (size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (far == n || point_dist[i] > point_dist[far]) far = i;
      }
      if (far == n) continue;
      taken[far] = true;
      auto row = points.row(far);
      std::copy(row.begin(), row.end(), cent);
      point_dist[far] = 0.0;
    }
    const double next = assign();
    result.inertia_history.push_back(next);
    result.iterations = iter + 1;
    const double change = inertia > 0.0 ? (inertia - next) / inertia : 0.0;
    inertia = next;
    if (std::abs(change) < params.tolerance) break;
  }
  result.inertia = inertia;
  return result;
}

template KmeansResult<float> TrainKmeans(MatrixView<float>, const KmeansParams&);
template KmeansResult<double> TrainKmeans(MatrixView<double>,
                                          const KmeansParams&);
template uint32_t NearestCentroid(std::span<const float>, MatrixView<float>,
                                  double*);
template uint32_t NearestCentroid(std::span<const double>, MatrixView<double>,
                                  double*);

}  // namespace rbir
