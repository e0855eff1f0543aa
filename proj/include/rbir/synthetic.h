#ifndef RBIR_SYNTHETIC_H_
#define RBIR_SYNTHETIC_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rbir/geometry.h"
#include "rbir/langrec.h"
#include "rbir/store.h"

namespace rbir {

// Geometric predicates the generator can realize. Each has a defining rule
// (PredicateHolds) that every emitted layout satisfies.
enum class SpatialPredicate {
  kLeftOf,
  kRightOf,
  kAbove,
  kBelow,
  kOnTopOf,
  kInside,
  kOverlaps,
};

std::string_view PredicateName(SpatialPredicate p);
SpatialPredicate ParsePredicate(std::string_view name);

inline constexpr double kOverlapIou = 0.3;

// left_of: s.right + gap <= o.left; above: s.bottom + gap <= o.top (and the
// mirrored right_of/below); on_top_of: s rests on o's top edge within gap/2
// with s.cx over o and s.top + gap <= o.top; inside: s within o by gap on
// every side; overlaps: IoU >= 0.3.
bool PredicateHolds(SpatialPredicate p, const Box& subject, const Box& object,
                    double gap);

struct SyntheticCategory {
  std::string name;
  std::vector<float> prototype;  // generated (unit norm) when empty
  double sigma = 0.1;
};

struct SceneTemplate {
  SpatialPredicate predicate = SpatialPredicate::kLeftOf;
  std::string subject;
  std::string object;
};

struct SyntheticSpec {
  uint64_t seed = 0;
  uint32_t dim = 32;
  std::vector<SyntheticCategory> categories;
  std::vector<SceneTemplate> scenes;  // round-robin over images
  size_t num_images = 50;
  size_t distractors_per_image = 2;
  int image_width = 640;
  int image_height = 480;
  int gap = 8;
};

struct RegionLabel {
  std::string image_id;
  uint32_t region_index = 0;
  std::string category;
};

struct SceneLabel {
  std::string image_id;
  std::string predicate;
  uint32_t subject_index = 0;
  uint32_t object_index = 0;
};

struct SyntheticData {
  Dataset dataset;
  std::vector<SyntheticCategory> categories;  // with generated prototypes
  std::vector<RegionLabel> region_labels;
  std::vector<SceneLabel> scenes;
  TripleDataset triples;
};

// Each image holds one scene (subject and object regions built to satisfy
// the template's predicate, integer pixel coordinates) plus distractors with
// random boxes and features. Region features are normalize(prototype +
// sigma * N(0, I)). Deterministic given the seed.
SyntheticData GenerateSynthetic(const SyntheticSpec& spec);

// Default spec: four categories and three left_of/above/on_top_of scenes.
SyntheticSpec DefaultSyntheticSpec(uint64_t seed, size_t num_images,
                                   uint32_t dim);

// Dataset files plus labels.jsonl and triples.jsonl.
std::filesystem::path WriteSynthetic(const SyntheticData& data,
                                     const std::filesystem::path& dir);

struct TripleSpec {
  uint64_t seed = 0;
  std::map<std::string, size_t> per_predicate;  // predicate name -> count
  size_t num_random = 0;  // pairs with random geometry
  std::string random_predicate = "with";
  int image_width = 640;
  int image_height = 480;
  int gap = 8;
  std::vector<std::string> categories = {"person", "horse", "car", "dog",
                                         "table", "cup"};
};

TripleDataset GenerateRelationshipTriples(const TripleSpec& spec);

// Pairwise layouts jittered around `num_clusters` distinct prototype box
// pairs (jitter is a fraction of the image size). labels[i] is the
// prototype sample i was drawn from.
struct LayoutClusters {
  ImageMeta image;
  std::vector<std::pair<Box, Box>> layouts;
  std::vector<uint32_t> labels;
};

LayoutClusters GenerateLayoutClusters(size_t num_clusters, size_t per_cluster,
                                      double jitter, uint64_t seed);

// Clustered vectors for ANN evaluation: `num_vectors` rows drawn around
// `num_clusters` random centers, and queries that perturb random rows.
struct AnnBenchmark {
  uint32_t dim = 0;
  std::vector<float> database;
  std::vector<float> queries;
};

AnnBenchmark GenerateAnnBenchmark(size_t num_vectors, size_t num_queries,
                                  uint32_t dim, uint64_t seed);

}  // namespace rbir

#endif  // RBIR_SYNTHETIC_H_
