#include "rbir/ivfadc.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "rbir/errors.h"
#include "rbir/kmeans.h"
#include "rbir/random.h"

namespace rbir {

static_assert(std::endian::native == std::endian::little,
              "index serialization assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'R', 'B', 'I', 'R', 'I', 'V', 'F', '1'};
constexpr uint32_t kVersion = 1;

uint64_t MixSeed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path)
      : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) Fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  }
  template <typename T>
  void Put(const T& value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  template <typename T>
  void PutArray(std::span<const T> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }
  void PutBytes(const void* data, size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void Close() {
    out_.close();
    if (!out_) Fail(ErrorCode::kIo, "failed writing " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path)
      : in_(path, std::ios::binary), path_(path) {
    if (!in_) Fail(ErrorCode::kIo, "cannot open " + path.string());
  }
  template <typename T>
  T Get() {
    T value{};
    Read(&value, sizeof(T));
    return value;
  }
  template <typename T>
  void GetArray(std::span<T> out) {
    Read(out.data(), out.size_bytes());
  }
  void Read(void* data, size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in_.gcount()) != n) {
      Fail(ErrorCode::kIo, "truncated index file " + path_.string());
    }
  }
  bool AtEnd() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

std::vector<float> SampleRows(MatrixView<float> features, size_t cap,
                              uint64_t seed) {
  const size_t n = features.rows();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (n > cap) {
    Rng rng(seed);
    for (size_t i = 0; i < cap; ++i) {
      std::swap(order[i], order[i + rng.Index(n - i)]);
    }
    order.resize(cap);
    std::sort(order.begin(), order.end());
  }
  std::vector<float> out;
  out.reserve(order.size() * features.dim());
  for (size_t i : order) {
    auto row = features.row(i);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

Box RoundBoxToFloat(const Box& b) {
  return Box{static_cast<float>(b.left), static_cast<float>(b.top),
             static_cast<float>(b.right), static_cast<float>(b.bottom)};
}

}  // namespace

std::string_view MetricName(Metric metric) {
  return metric == Metric::kL2 ? "l2" : "inner_product";
}

Metric ParseMetric(std::string_view name) {
  if (name == "l2") return Metric::kL2;
  if (name == "inner_product" || name == "ip") return Metric::kInnerProduct;
  Fail(ErrorCode::kInvalidRequest, "unknown metric '" + std::string(name) + "'");
}

void IndexParams::Validate() const {
  if (dim == 0) Fail(ErrorCode::kInvalidRequest, "index dimension must be positive");
  if (num_subquantizers == 0 || dim % num_subquantizers != 0) {
    Fail(ErrorCode::kInvalidRequest,
         "dimension " + std::to_string(dim) + " is not divisible by M=" +
             std::to_string(num_subquantizers));
  }
  if (nbits != kPqBits) {
    Fail(ErrorCode::kInvalidRequest, "only nbits=8 is supported");
  }
  if (coarse_size == 0) Fail(ErrorCode::kInvalidRequest, "k' must be positive");
  if (probe == 0 || probe > coarse_size) {
    Fail(ErrorCode::kInvalidRequest,
         "k_s=" + std::to_string(probe) + " must be in [1, k'=" +
             std::to_string(coarse_size) + "]");
  }
}

bool RanksBefore(Metric metric, const ScoredRegion& a, const ScoredRegion& b) {
  if (a.score != b.score) {
    return metric == Metric::kL2 ? a.score < b.score : a.score > b.score;
  }
  return a.region_id < b.region_id;
}

InvertedIndex::InvertedIndex(const IndexParams& params) : params_(params) {}

InvertedIndex InvertedIndex::Empty(const IndexParams& params) {
  params.Validate();
  InvertedIndex index(params);
  index.coarse_.assign(size_t(params.coarse_size) * params.dim, 0.0f);
  index.pq_.assign(size_t(params.num_subquantizers) * kPqCentroids *
                       params.subdim(),
                   0.0f);
  index.lists_.resize(params.coarse_size);
  return index;
}

InvertedIndex InvertedIndex::Build(MatrixView<float> features,
                                   std::vector<RegionRef> regions,
                                   const IndexParams& params) {
  InvertedIndex index = Empty(params);
  if (features.empty() && regions.empty()) return index;
  if (features.dim() != params.dim) {
    Fail(ErrorCode::kDimensionMismatch,
         "feature dimension " + std::to_string(features.dim()) +
             " does not match index dimension " + std::to_string(params.dim));
  }
  if (features.rows() != regions.size()) {
    Fail(ErrorCode::kInvalidRequest,
         "feature rows (" + std::to_string(features.rows()) +
             ") and regions (" + std::to_string(regions.size()) + ") differ");
  }
  const size_t dim = params.dim;
  const size_t m_count = params.num_subquantizers;
  const size_t subdim = params.subdim();

  const std::vector<float> sample =
      SampleRows(features, params.training_sample_cap, MixSeed(params.seed, 0));
  MatrixView<float> sample_view(sample, dim);

  KmeansParams coarse_params;
  coarse_params.k = params.coarse_size;
  coarse_params.max_iters = params.kmeans_iters;
  coarse_params.seed = MixSeed(params.seed, 1);
  coarse_params.allow_duplicates = true;
  auto coarse = TrainKmeans(sample_view, coarse_params);
  index.coarse_ = std::move(coarse.centroids);

  // Residuals of the training sample, split per subspace.
  MatrixView<float> coarse_view(index.coarse_, dim);
  const size_t rows = sample_view.rows();
  std::vector<std::vector<float>> sub_residuals(
      m_count, std::vector<float>(rows * subdim));
  for (size_t i = 0; i < rows; ++i) {
    auto v = sample_view.row(i);
    auto c = coarse_view.row(coarse.assignment[i]);
    for (size_t m = 0; m < m_count; ++m) {
      for (size_t d = 0; d < subdim; ++d) {
        const size_t j = m * subdim + d;
        sub_residuals[m][i * subdim + d] = v[j] - c[j];
      }
    }
  }
  for (size_t m = 0; m < m_count; ++m) {
    KmeansParams pq_params;
    pq_params.k = kPqCentroids;
    pq_params.max_iters = params.kmeans_iters;
    pq_params.seed = MixSeed(params.seed, 2 + m);
    pq_params.allow_duplicates = true;
    auto sub = TrainKmeans(MatrixView<float>(sub_residuals[m], subdim),
                           pq_params);
    std::copy(sub.centroids.begin(), sub.centroids.end(),
              index.pq_.begin() + m * kPqCentroids * subdim);
  }

  for (auto& r : regions) r.box = RoundBoxToFloat(r.box);
  index.regions_ = std::move(regions);
  for (size_t i = 0; i < features.rows(); ++i) {
    auto [list, code] = index.Encode(features.row(i));
    index.lists_[list].ids.push_back(i);
    index.lists_[list].codes.insert(index.lists_[list].codes.end(),
                                    code.begin(), code.end());
  }
  index.RebuildLocations();
  return index;
}

void InvertedIndex::RebuildLocations() {
  locations_.assign(regions_.size(), Location{});
  std::vector<bool> seen(regions_.size(), false);
  for (size_t l = 0; l < lists_.size(); ++l) {
    for (size_t o = 0; o < lists_[l].ids.size(); ++o) {
      const uint64_t id = lists_[l].ids[o];
      if (id >= regions_.size() || seen[id]) {
        Fail(ErrorCode::kInvalidRequest,
             "inverted lists reference region " + std::to_string(id) +
                 " invalidly");
      }
      seen[id] = true;
      locations_[id] = {static_cast<uint32_t>(l), static_cast<uint32_t>(o)};
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    Fail(ErrorCode::kInvalidRequest, "region missing from inverted lists");
  }
}

const RegionRef& InvertedIndex::region(uint64_t id) const {
  if (id >= regions_.size()) {
    Fail(ErrorCode::kNotFound, "region " + std::to_string(id) + " not in index");
  }
  return regions_[id];
}

size_t InvertedIndex::CountImages() const {
  std::unordered_set<std::string_view> ids;
  for (const auto& r : regions_) ids.insert(r.image_id);
  return ids.size();
}

void InvertedIndex::CheckDim(std::span<const float> query) const {
  if (query.size() != params_.dim) {
    Fail(ErrorCode::kDimensionMismatch,
         "query dimension " + std::to_string(query.size()) +
             " does not match index dimension " + std::to_string(params_.dim));
  }
}

std::pair<uint32_t, std::vector<uint8_t>> InvertedIndex::Encode(
    std::span<const float> vector) const {
  CheckDim(vector);
  const size_t subdim = params_.subdim();
  const uint32_t list =
      NearestCentroid(vector, MatrixView<float>(coarse_, params_.dim));
  auto c = std::span<const float>(coarse_).subspan(size_t(list) * params_.dim,
                                                   params_.dim);
  std::vector<float> residual(subdim);
  std::vector<uint8_t> code(params_.num_subquantizers);
  for (size_t m = 0; m < code.size(); ++m) {
    for (size_t d = 0; d < subdim; ++d) {
      residual[d] = vector[m * subdim + d] - c[m * subdim + d];
    }
    MatrixView<float> book(
        std::span<const float>(pq_).subspan(m * kPqCentroids * subdim,
                                            kPqCentroids * subdim),
        subdim);
    code[m] = static_cast<uint8_t>(
        NearestCentroid(std::span<const float>(residual), book));
  }
  return {list, std::move(code)};
}

std::pair<uint32_t, std::span<const uint8_t>> InvertedIndex::StoredCode(
    uint64_t region_id) const {
  region(region_id);
  const Location loc = locations_[region_id];
  const auto& codes = lists_[loc.list].codes;
  return {loc.list, std::span<const uint8_t>(codes).subspan(
                        size_t(loc.offset) * code_size(), code_size())};
}

std::vector<double> InvertedIndex::Reconstruct(uint64_t region_id) const {
  auto [list, code] = StoredCode(region_id);
  const size_t subdim = params_.subdim();
  std::vector<double> out(params_.dim);
  for (size_t m = 0; m < code.size(); ++m) {
    const float* centroid = pq_.data() + (m * kPqCentroids + code[m]) * subdim;
    for (size_t d = 0; d < subdim; ++d) {
      const size_t j = m * subdim + d;
      out[j] = double(coarse_[size_t(list) * params_.dim + j]) +
               double(centroid[d]);
    }
  }
  return out;
}

std::vector<double> InvertedIndex::InnerProductTables(
    std::span<const float> query) const {
  const size_t subdim = params_.subdim();
  const size_t m_count = params_.num_subquantizers;
  std::vector<double> tables(m_count * kPqCentroids);
  for (size_t m = 0; m < m_count; ++m) {
    const float* q = query.data() + m * subdim;
    for (size_t j = 0; j < kPqCentroids; ++j) {
      const float* c = pq_.data() + (m * kPqCentroids + j) * subdim;
      double s = 0.0;
      for (size_t d = 0; d < subdim; ++d) s += double(q[d]) * double(c[d]);
      tables[m * kPqCentroids + j] = s;
    }
  }
  return tables;
}

std::vector<double> InvertedIndex::L2Tables(std::span<const float> query,
                                            uint32_t list) const {
  const size_t subdim = params_.subdim();
  const size_t m_count = params_.num_subquantizers;
  const float* coarse = coarse_.data() + size_t(list) * params_.dim;
  std::vector<double> residual(params_.dim);
  for (size_t j = 0; j < params_.dim; ++j) {
    residual[j] = double(query[j]) - double(coarse[j]);
  }
  std::vector<double> tables(m_count * kPqCentroids);
  for (size_t m = 0; m < m_count; ++m) {
    const double* r = residual.data() + m * subdim;
    for (size_t j = 0; j < kPqCentroids; ++j) {
      const float* c = pq_.data() + (m * kPqCentroids + j) * subdim;
      double s = 0.0;
      for (size_t d = 0; d < subdim; ++d) {
        const double diff = r[d] - double(c[d]);
        s += diff * diff;
      }
      tables[m * kPqCentroids + j] = s;
    }
  }
  return tables;
}

double InvertedIndex::SumTables(const std::vector<double>& tables,
                                std::span<const uint8_t> code) const {
  double s = 0.0;
  for (size_t m = 0; m < code.size(); ++m) s += tables[m * kPqCentroids + code[m]];
  return s;
}

std::vector<ScoredRegion> InvertedIndex::Search(std::span<const float> query,
                                                Metric metric, size_t probe,
                                                size_t top_r) const {
  CheckDim(query);
  if (probe == 0 || probe > lists_.size()) {
    Fail(ErrorCode::kInvalidRequest,
         "k_s=" + std::to_string(probe) + " must be in [1, " +
             std::to_string(lists_.size()) + "]");
  }
  if (regions_.empty() || top_r == 0) return {};

  std::vector<ScoredRegion> coarse_scores(lists_.size());
  for (size_t l = 0; l < lists_.size(); ++l) {
    auto c = std::span<const float>(coarse_).subspan(l * params_.dim,
                                                     params_.dim);
    coarse_scores[l] = {l, metric == Metric::kL2 ? SquaredL2(query, c)
                                                 : Dot(query, c)};
  }
  std::partial_sort(coarse_scores.begin(), coarse_scores.begin() + probe,
                    coarse_scores.end(),
                    [metric](const ScoredRegion& a, const ScoredRegion& b) {
                      return RanksBefore(metric, a, b);
                    });

  std::vector<ScoredRegion> candidates;
  std::vector<double> tables;
  if (metric == Metric::kInnerProduct) tables = InnerProductTables(query);
  const size_t cs = code_size();
  for (size_t p = 0; p < probe; ++p) {
    const auto list_no = static_cast<uint32_t>(coarse_scores[p].region_id);
    const InvertedList& list = lists_[list_no];
    if (list.ids.empty()) continue;
    double base = 0.0;
    if (metric == Metric::kL2) {
      tables = L2Tables(query, list_no);
    } else {
      base = coarse_scores[p].score;
    }
    for (size_t i = 0; i < list.ids.size(); ++i) {
      const std::span<const uint8_t> code(list.codes.data() + i * cs, cs);
      candidates.push_back({list.ids[i], base + SumTables(tables, code)});
    }
  }
  const size_t keep = std::min(top_r, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + keep,
                    candidates.end(),
                    [metric](const ScoredRegion& a, const ScoredRegion& b) {
                      return RanksBefore(metric, a, b);
                    });
  candidates.resize(keep);
  return candidates;
}

double InvertedIndex::AdcScore(std::span<const float> query, Metric metric,
                               uint64_t region_id) const {
  const uint64_t ids[] = {region_id};
  return AdcScores(query, metric, ids).front();
}

std::vector<double> InvertedIndex::AdcScores(
    std::span<const float> query, Metric metric,
    std::span<const uint64_t> region_ids) const {
  CheckDim(query);
  std::vector<double> out;
  out.reserve(region_ids.size());
  std::vector<double> ip_tables;
  if (metric == Metric::kInnerProduct) ip_tables = InnerProductTables(query);
  for (uint64_t id : region_ids) {
    auto [list, code] = StoredCode(id);
    if (metric == Metric::kInnerProduct) {
      auto c = std::span<const float>(coarse_).subspan(size_t(list) * params_.dim,
                                                       params_.dim);
      out.push_back(Dot(query, c) + SumTables(ip_tables, code));
    } else {
      out.push_back(SumTables(L2Tables(query, list), code));
    }
  }
  return out;
}

void InvertedIndex::Save(const std::filesystem::path& path) const {
  Writer w(path);
  w.PutBytes(kMagic, sizeof(kMagic));
  w.Put<uint32_t>(kVersion);
  w.Put<uint32_t>(params_.dim);
  w.Put<uint32_t>(params_.coarse_size);
  w.Put<uint32_t>(params_.num_subquantizers);
  w.Put<uint32_t>(params_.nbits);
  w.Put<uint64_t>(regions_.size());
  w.PutArray<float>(coarse_);
  w.PutArray<float>(pq_);
  for (const auto& list : lists_) {
    w.Put<uint64_t>(list.ids.size());
    for (size_t i = 0; i < list.ids.size(); ++i) {
      w.Put<uint64_t>(list.ids[i]);
      w.PutBytes(list.codes.data() + i * code_size(), code_size());
    }
  }
  for (size_t id = 0; id < regions_.size(); ++id) {
    const RegionRef& r = regions_[id];
    w.Put<uint64_t>(id);
    w.Put<uint32_t>(static_cast<uint32_t>(r.image_id.size()));
    w.PutBytes(r.image_id.data(), r.image_id.size());
    w.Put<uint32_t>(r.region_index);
    const float box[4] = {static_cast<float>(r.box.left),
                          static_cast<float>(r.box.top),
                          static_cast<float>(r.box.right),
                          static_cast<float>(r.box.bottom)};
    w.PutArray<float>(box);
  }
  w.Close();
}

InvertedIndex InvertedIndex::Load(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.Read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    Fail(ErrorCode::kInvalidRequest,
         "version mismatch: " + path.string() + " is not an RBIRIVF1 index");
  }
  const auto version = r.Get<uint32_t>();
  if (version != kVersion) {
    Fail(ErrorCode::kInvalidRequest,
         "version mismatch: unsupported index version " +
             std::to_string(version));
  }
  IndexParams params;
  params.dim = r.Get<uint32_t>();
  params.coarse_size = r.Get<uint32_t>();
  params.num_subquantizers = r.Get<uint32_t>();
  params.nbits = r.Get<uint32_t>();
  params.probe = std::min<uint32_t>(IndexParams{}.probe, params.coarse_size);
  params.Validate();
  const auto region_count = r.Get<uint64_t>();

  InvertedIndex index = Empty(params);
  r.GetArray<float>(index.coarse_);
  r.GetArray<float>(index.pq_);
  const size_t cs = index.code_size();
  for (auto& list : index.lists_) {
    const auto len = r.Get<uint64_t>();
    if (len > region_count) Fail(ErrorCode::kIo, "corrupt inverted list length");
    list.ids.resize(len);
    list.codes.resize(len * cs);
    for (size_t i = 0; i < len; ++i) {
      list.ids[i] = r.Get<uint64_t>();
      r.Read(list.codes.data() + i * cs, cs);
    }
  }
  index.regions_.resize(region_count);
  for (uint64_t k = 0; k < region_count; ++k) {
    const auto id = r.Get<uint64_t>();
    if (id >= region_count) Fail(ErrorCode::kIo, "corrupt region table");
    RegionRef& ref = index.regions_[id];
    const auto len = r.Get<uint32_t>();
    ref.image_id.resize(len);
    r.Read(ref.image_id.data(), len);
    ref.region_index = r.Get<uint32_t>();
    float box[4];
    r.GetArray<float>(box);
    ref.box = Box{box[0], box[1], box[2], box[3]};
  }
  if (!r.AtEnd()) Fail(ErrorCode::kIo, "trailing bytes in " + path.string());
  index.RebuildLocations();
  return index;
}

std::vector<ScoredRegion> ExactSearch(MatrixView<float> features,
                                      std::span<const float> query,
                                      Metric metric, size_t top_r) {
  if (!features.empty() && query.size() != features.dim()) {
    Fail(ErrorCode::kDimensionMismatch,
         "query dimension " + std::to_string(query.size()) +
             " does not match dataset dimension " +
             std::to_string(features.dim()));
  }
  std::vector<ScoredRegion> all(features.rows());
  for (size_t i = 0; i < features.rows(); ++i) {
    all[i] = {i, metric == Metric::kL2 ? SquaredL2(query, features.row(i))
                                       : Dot(query, features.row(i))};
  }
  const size_t keep = std::min(top_r, all.size());
  std::partial_sort(all.begin(), all.begin() + keep, all.end(),
                    [metric](const ScoredRegion& a, const ScoredRegion& b) {
                      return RanksBefore(metric, a, b);
                    });
  all.resize(keep);
  return all;
}

double RecallAt(const std::vector<std::vector<ScoredRegion>>& approx,
                const std::vector<std::vector<ScoredRegion>>& exact,
                size_t at) {
  if (approx.size() != exact.size() || approx.empty()) {
    Fail(ErrorCode::kInvalidRequest, "recall needs matching non-empty runs");
  }
  size_t hits = 0;
  for (size_t q = 0; q < approx.size(); ++q) {
    if (exact[q].empty()) continue;
    const uint64_t truth = exact[q].front().region_id;
    const size_t n = std::min(at, approx[q].size());
    for (size_t i = 0; i < n; ++i) {
      if (approx[q][i].region_id == truth) {
        ++hits;
        break;
      }
    }
  }
  return double(hits) / approx.size();
}

}  // namespace rbir
