#ifndef RBIR_LANGREC_H_
#define RBIR_LANGREC_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "rbir/constraint.h"
#include "rbir/geometry.h"

namespace rbir {

// Word vectors keyed by lower-cased word.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(size_t dim) : dim_(dim) {}

  // Text format: `word v1 ... vd` per line, optional `count dim` header.
  static EmbeddingTable Load(const std::filesystem::path& path);
  void Save(const std::filesystem::path& path) const;

  size_t dim() const { return dim_; }
  size_t size() const { return vectors_.size(); }
  void Add(std::string_view word, std::vector<float> vector);
  bool Contains(std::string_view word) const;

  // Embeds a category name: the whole (case-folded) phrase if present,
  // otherwise the mean of its whitespace/underscore separated words. Throws
  // oov naming the first missing word.
  std::vector<double> Embed(std::string_view text) const;

 private:
  size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> vectors_;
  std::vector<std::string> order_;
};

std::string FoldCase(std::string_view text);

struct TripleRecord {
  std::string subject;
  std::string object;
  std::string predicate;
  Box subject_box;
  Box object_box;
  double width = 0.0;
  double height = 0.0;

  // Pairwise position features with the subject as O1.
  PositionFeatureVector Features() const;
};

using TripleDataset = std::vector<TripleRecord>;

nlohmann::json TripleToJson(const TripleRecord& t);
// Boxes are clamped into the image. Throws invalid_request on bad records.
TripleRecord TripleFromJson(const nlohmann::json& j);
TripleDataset LoadTriples(const std::filesystem::path& path);
void SaveTriples(const TripleDataset& triples,
                 const std::filesystem::path& path);

// Linear projection of concatenated subject/object embeddings to softmax
// likelihoods over a relationship vocabulary.
struct RelationshipClassifier {
  std::vector<std::string> vocabulary;
  size_t input_dim = 0;         // 2 * d_e
  std::vector<double> weights;  // |V| x input_dim
  std::vector<double> bias;     // |V|

  std::vector<double> Logits(std::span<const double> input) const;
  std::vector<double> Probabilities(std::span<const double> input) const;

  nlohmann::json ToJson() const;
  static RelationshipClassifier FromJson(const nlohmann::json& j);
};

std::vector<double> Softmax(std::span<const double> logits);

// Mean cross-entropy of a multinomial logistic regression; exposed so the
// analytic gradient can be checked independently.
class SoftmaxProblem {
 public:
  SoftmaxProblem(std::vector<double> inputs, std::vector<size_t> labels,
                 size_t input_dim, size_t num_classes);

  size_t num_params() const { return num_classes_ * (input_dim_ + 1); }
  size_t size() const { return labels_.size(); }
  // Parameters are laid out as weights (row-major) followed by biases.
  double Loss(std::span<const double> params) const;
  std::vector<double> Gradient(std::span<const double> params) const;

 private:
  std::vector<double> inputs_;
  std::vector<size_t> labels_;
  size_t input_dim_;
  size_t num_classes_;
};

struct RelationshipTrainParams {
  int epochs = 500;
  double learning_rate = 1.0;
  uint64_t seed = 0;
  // Vocabulary to train over; defaults to the sorted distinct predicates.
  std::vector<std::string> vocabulary;
};

struct RelationshipTrainResult {
  RelationshipClassifier classifier;
  size_t skipped_oov = 0;
  std::vector<double> loss_history;  // one entry per epoch, before the step
};

// Full-batch gradient descent from a small seeded initialization. The step
// is halved whenever it would increase the loss, so the loss is
// non-increasing per epoch.
RelationshipTrainResult TrainRelationshipClassifier(
    const TripleDataset& triples, const EmbeddingTable& table,
    const RelationshipTrainParams& params);

struct PredicateLikelihood {
  std::string predicate;
  double likelihood = 0.0;
};

// Top `top_m` predicates for (subject, object) by likelihood, ties broken
// by vocabulary order.
std::vector<PredicateLikelihood> PredictRelationships(
    std::string_view category1, std::string_view category2,
    const EmbeddingTable& table, const RelationshipClassifier& classifier,
    size_t top_m);

// Per-predicate pairwise constraint sets plus the vocabulary they were
// learned against. Layout on disk: manifest.json + one JSON per predicate.
struct RelationshipConstraintStore {
  std::vector<std::string> vocabulary;
  std::map<std::string, ConstraintSet> sets;

  void Save(const std::filesystem::path& dir) const;
  static RelationshipConstraintStore Load(const std::filesystem::path& dir);
};

inline constexpr size_t kMinRelationshipSamples = 10;

// Cascade separating pairs labeled `predicate` from all other pairs.
ConstraintSet LearnRelationshipConstraints(const TripleDataset& triples,
                                           std::string_view predicate,
                                           const CascadeParams& params,
                                           size_t min_samples =
                                               kMinRelationshipSamples);

struct LanguageRecommendation {
  std::string predicate;
  double likelihood = 0.0;
  ConstraintSet constraints;
};

struct LanguageRecommendationResult {
  std::vector<LanguageRecommendation> recommendations;
  std::vector<std::string> diagnostics;
};

LanguageRecommendationResult RecommendLanguage(
    std::string_view category1, std::string_view category2, size_t top_m,
    const EmbeddingTable& table, const RelationshipClassifier& classifier,
    const RelationshipConstraintStore& store, double min_likelihood = 0.0);

// Default spatial-only predicate list, used when present in the vocabulary.
const std::vector<std::string>& DefaultSpatialPredicates();

struct RelationshipDetectionReport {
  std::map<std::string, DetectionMetrics> per_predicate;
  DetectionMetrics mean_all;
  DetectionMetrics mean_spatial;
  size_t num_spatial = 0;
  std::vector<std::string> excluded;  // fewer than min_test samples or no set
};

RelationshipDetectionReport EvalRelationshipDetection(
    const RelationshipConstraintStore& store, const TripleDataset& test,
    const std::vector<std::string>& spatial_predicates,
    size_t min_test = kMinRelationshipSamples);

nlohmann::json ReportToJson(const RelationshipDetectionReport& report);

}  // namespace rbir

#endif  // RBIR_LANGREC_H_
