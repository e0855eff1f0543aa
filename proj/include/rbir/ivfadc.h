#ifndef RBIR_IVFADC_H_
#define RBIR_IVFADC_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rbir/geometry.h"
#include "rbir/matrix.h"

namespace rbir {

enum class Metric { kL2, kInnerProduct };

std::string_view MetricName(Metric metric);
Metric ParseMetric(std::string_view name);

inline constexpr int kPqBits = 8;
inline constexpr size_t kPqCentroids = 1 << kPqBits;

struct IndexParams {
  uint32_t dim = 0;
  uint32_t coarse_size = 256;  // k'; 2^14 at full scale
  uint32_t num_subquantizers = 16;
  uint32_t nbits = kPqBits;
  uint32_t probe = 64;  // k_s
  int kmeans_iters = 25;
  uint64_t seed = 0;
  size_t training_sample_cap = 100000;

  uint32_t subdim() const { return dim / num_subquantizers; }
  // Throws invalid_request on inconsistent values.
  void Validate() const;
};

struct ScoredRegion {
  uint64_t region_id = 0;
  double score = 0.0;

  bool operator==(const ScoredRegion&) const = default;
};

// True when `a` ranks before `b` under `metric`: ascending distance for L2,
// descending score for inner product, region id ascending on ties.
bool RanksBefore(Metric metric, const ScoredRegion& a, const ScoredRegion& b);

struct InvertedList {
  std::vector<uint64_t> ids;
  std::vector<uint8_t> codes;  // ids.size() x M
};

// Inverted file over residual product-quantized region features (IVFADC).
// Immutable once built; all const members are safe to call concurrently.
class InvertedIndex {
 public:
  // Index with zero codebooks and no entries.
  static InvertedIndex Empty(const IndexParams& params);

  // Trains both quantizers on `features` (one row per region) and encodes
  // every row. Region ids are row numbers.
  static InvertedIndex Build(MatrixView<float> features,
                             std::vector<RegionRef> regions,
                             const IndexParams& params);

  const IndexParams& params() const { return params_; }
  uint32_t dim() const { return params_.dim; }
  size_t size() const { return regions_.size(); }
  size_t code_size() const { return params_.num_subquantizers; }
  size_t num_lists() const { return lists_.size(); }
  const InvertedList& list(size_t i) const { return lists_[i]; }
  const std::vector<RegionRef>& regions() const { return regions_; }
  const RegionRef& region(uint64_t id) const;
  size_t CountImages() const;

  const std::vector<float>& coarse_centroids() const { return coarse_; }
  const std::vector<float>& pq_centroids() const { return pq_; }

  // Probes the `probe` best lists and ranks their entries by ADC score.
  // L2 scores are approximate squared distances; inner-product scores are
  // <q, c> + <q, decoded residual>.
  std::vector<ScoredRegion> Search(std::span<const float> query, Metric metric,
                                   size_t probe, size_t top_r) const;

  // ADC score of one stored region through the lookup-table path.
  double AdcScore(std::span<const float> query, Metric metric,
                  uint64_t region_id) const;
  // Batch form of AdcScore; shares the inner-product table across ids.
  std::vector<double> AdcScores(std::span<const float> query, Metric metric,
                                std::span<const uint64_t> region_ids) const;

  // Coarse centroid plus decoded residual, in double precision.
  std::vector<double> Reconstruct(uint64_t region_id) const;

  std::pair<uint32_t, std::vector<uint8_t>> Encode(
      std::span<const float> vector) const;
  std::pair<uint32_t, std::span<const uint8_t>> StoredCode(
      uint64_t region_id) const;

  void Save(const std::filesystem::path& path) const;
  // Throws invalid_request on bad magic/version and io on read failures.
  static InvertedIndex Load(const std::filesystem::path& path);

 private:
  struct Location {
    uint32_t list = 0;
    uint32_t offset = 0;
  };

  explicit InvertedIndex(const IndexParams& params);
  void RebuildLocations();
  void CheckDim(std::span<const float> query) const;
  // Per-subspace tables for inner product (shared by all lists).
  std::vector<double> InnerProductTables(std::span<const float> query) const;
  // Per-subspace squared-distance tables for the residual of query vs list.
  std::vector<double> L2Tables(std::span<const float> query,
                               uint32_t list) const;
  double SumTables(const std::vector<double>& tables,
                   std::span<const uint8_t> code) const;

  IndexParams params_;
  std::vector<float> coarse_;  // k' x D
  std::vector<float> pq_;      // M x 256 x (D/M)
  std::vector<InvertedList> lists_;
  std::vector<RegionRef> regions_;
  std::vector<Location> locations_;
};

// Brute-force ranking over the raw features with the same ordering rule as
// InvertedIndex::Search.
std::vector<ScoredRegion> ExactSearch(MatrixView<float> features,
                                      std::span<const float> query,
                                      Metric metric, size_t top_r);

// recall@R: fraction of queries whose exact nearest neighbour appears in the
// approximate top-R list.
double RecallAt(const std::vector<std::vector<ScoredRegion>>& approx,
                const std::vector<std::vector<ScoredRegion>>& exact,
                size_t at);

}  // namespace rbir

#endif  // RBIR_IVFADC_H_
