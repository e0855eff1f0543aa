#ifndef RBIR_ENGINE_H_
#define RBIR_ENGINE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "rbir/classifier.h"
#include "rbir/constraint.h"
#include "rbir/geometry.h"
#include "rbir/ivfadc.h"

namespace rbir {

// Lookup of trained classifiers by name.
class ClassifierSource {
 public:
  virtual ~ClassifierSource() = default;
  virtual std::optional<LinearClassifier> Find(std::string_view name) const = 0;
};

class CacheClassifierSource : public ClassifierSource {
 public:
  explicit CacheClassifierSource(const ClassifierCache& cache) : cache_(cache) {}
  std::optional<LinearClassifier> Find(std::string_view name) const override {
    return cache_.Find(name);
  }

 private:
  const ClassifierCache& cache_;
};

class InMemoryClassifiers : public ClassifierSource {
 public:
  void Add(LinearClassifier c) {
    std::string key = c.name;
    classifiers_[key] = std::move(c);
  }
  std::optional<LinearClassifier> Find(std::string_view name) const override {
    auto it = classifiers_.find(std::string(name));
    if (it == classifiers_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, LinearClassifier> classifiers_;
};

// Everything a query reads. Borrowed, never mutated.
struct SearchContext {
  const InvertedIndex* index = nullptr;
  const std::unordered_map<std::string, ImageMeta>* images = nullptr;
  const ClassifierSource* classifiers = nullptr;
  // Raw region features (row = region id) if available; otherwise stored
  // regions used as examples are reconstructed from their codes.
  MatrixView<float> features;
};

struct ByExample {
  std::vector<float> vector;
  std::optional<uint64_t> region_id;
};

struct ByCategory {
  std::string name;
};

struct ObjectQuery {
  std::variant<ByExample, ByCategory> target;
  std::vector<std::string> attributes;
};

struct Query {
  std::vector<ObjectQuery> objects;
  ConstraintSet constraints;  // arity = objects.size(); may be empty
  size_t top_k = 20;
  size_t offset = 0;
  size_t shortlist_r = 1000;
  size_t t = 1;
  std::optional<uint32_t> probe;  // k_s override
  bool include_failing = false;
  size_t shortlist_cap = 500;  // images carried in the refinement payload
};

struct QueryPlan {
  Metric metric = Metric::kL2;
  std::vector<float> vector;  // example vector or category weights
  std::vector<std::vector<float>> attribute_weights;
};

inline constexpr double kRelevanceEpsilon = 1e-12;

// Resolves example region references and cached classifiers. Unknown
// classifier names raise not_found naming the classifier.
QueryPlan PreprocessObjectQuery(const ObjectQuery& query,
                                const SearchContext& context);

struct RegionHit {
  uint64_t region_id = 0;
  double score = 0.0;
};

// Per-image top-t regions for one object, best first.
struct ObjectResult {
  std::map<std::string, std::vector<RegionHit>> per_image;
};

// Example plans score 1 / (d^2 + eps) from L2 ADC; classifier plans score
// <w, v> from inner-product ADC. Attribute scores <w_a, v> are added.
ObjectResult SearchRegions(const QueryPlan& plan, const InvertedIndex& index,
                           size_t shortlist_r, size_t probe, size_t t);

struct ObjectNormalization {
  double min = 0.0;
  double max = 0.0;
  double Apply(double score) const {
    return max > min ? (score - min) / (max - min) : 1.0;
  }
};

// Min-max over the per-image maxima of one object's shortlist.
ObjectNormalization NormalizationFor(const ObjectResult& result);

struct MergedImage {
  std::string image_id;
  std::vector<double> object_scores;  // normalized; 0 when missing
  double score = 0.0;
};

// Sums per-object normalized image scores over the union of shortlisted
// images. Ranked by score descending, image id ascending on ties.
std::vector<MergedImage> Merge(const std::vector<ObjectResult>& objects);

struct Combination {
  std::vector<uint64_t> region_ids;  // one per object
  double score = 0.0;                // sum of normalized region scores
};

// All region combinations from the per-object top-t lists of one image, in
// descending score order (lexicographic rank order on ties). Empty when an
// object has no region in the image.
std::vector<Combination> EnumerateCombinations(
    const std::string& image_id, const std::vector<ObjectResult>& objects,
    const std::vector<ObjectNormalization>& norms);

struct ChosenRegion {
  uint64_t region_id = 0;
  RegionRef ref;
  double score = 0.0;  // normalized
};

struct ImageResult {
  std::string image_id;
  std::vector<ChosenRegion> regions;
  std::vector<double> object_scores;
  double image_score = 0.0;
  PositionFeatureVector position_features;
  bool passes = false;
};

// Tests each image's combinations in order and keeps the first one that
// satisfies the constraints. Passing images keep merge order; failing ones
// follow when include_failing is set.
std::vector<ImageResult> FilterAndRank(const std::vector<MergedImage>& merged,
                                       const std::vector<ObjectResult>& objects,
                                       const ConstraintSet& constraints,
                                       const SearchContext& context,
                                       bool include_failing);

// Candidate images with every evaluated combination and its position
// features, enough to re-apply any constraint set without searching again.
struct ShortlistPayload {
  int arity = 1;
  struct Entry {
    Combination combination;
    PositionFeatureVector features;
  };
  struct Image {
    std::string image_id;
    double score = 0.0;
    std::vector<double> object_scores;
    std::vector<Entry> combinations;
  };
  std::vector<Image> images;
};

ShortlistPayload BuildShortlist(const std::vector<MergedImage>& merged,
                                const std::vector<ObjectResult>& objects,
                                const SearchContext& context, size_t cap);

struct RefinedImage {
  std::string image_id;
  int combination = -1;  // index of the passing combination
  bool passes = false;
};

// Constraint-only refinement over a payload; same ordering rule as
// FilterAndRank.
std::vector<RefinedImage> RefineShortlist(const ShortlistPayload& payload,
                                          const ConstraintSet& constraints,
                                          bool include_failing);

struct CanvasBox {
  int object = 0;  // 0-based object index
  Box box;         // fractions of image width/height
};

// Eight constraints per box: 0.9 x <= x <= 1.1 x on left/I.width,
// right/I.width, top/I.height and bottom/I.height.
ConstraintSet CanvasToConstraints(const std::vector<CanvasBox>& boxes);

struct QueryResponse {
  std::vector<ImageResult> results;
  size_t total = 0;  // before pagination
  ShortlistPayload shortlist;
};

// Full pipeline: preprocess, search per object, merge, filter, paginate.
QueryResponse RunQuery(const Query& query, const SearchContext& context);

Query QueryFromJson(const nlohmann::json& j);
nlohmann::json ImageResultToJson(const ImageResult& r);
nlohmann::json ShortlistToJson(const ShortlistPayload& payload);
ShortlistPayload ShortlistFromJson(const nlohmann::json& j);
nlohmann::json ResponseToJson(const QueryResponse& response);
std::vector<CanvasBox> CanvasBoxesFromJson(const nlohmann::json& j);

}  // namespace rbir

#endif  // RBIR_ENGINE_H_
