#ifndef RBIR_CONSTRAINT_H_
#define RBIR_CONSTRAINT_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rbir/geometry.h"

namespace rbir {

// Threshold test on one position feature. A layout x is rejected when
// sign * x[feature] < sign * threshold; equality passes.
struct PositionConstraint {
  int feature = 0;
  double threshold = 0.0;
  int sign = 1;

  bool Accepts(std::span<const double> x) const {
    return sign * x[feature] >= sign * threshold;
  }
  bool operator==(const PositionConstraint&) const = default;
};

enum class Provenance { kManual, kCanvas, kMining, kLanguage };

std::string_view ProvenanceName(Provenance p);
Provenance ParseProvenance(std::string_view name);

inline constexpr size_t kMaxConstraints = 16;

// Conjunction of constraints. Learned sets are cascades whose stage order is
// the learning order; acceptance does not depend on order.
struct ConstraintSet {
  int arity = 1;
  Provenance provenance = Provenance::kManual;
  std::vector<PositionConstraint> constraints;

  bool empty() const { return constraints.empty(); }
  size_t size() const { return constraints.size(); }
  bool operator==(const ConstraintSet&) const = default;
};

// Checks arity, feature indices, signs, finiteness and length.
void ValidateConstraintSet(const ConstraintSet& set,
                           size_t max_constraints = kMaxConstraints);

bool SatisfiesAll(const ConstraintSet& set, const PositionFeatureVector& x);

// Unchecked variant for hot loops; the caller guarantees matching arity.
inline bool SatisfiesAll(std::span<const PositionConstraint> constraints,
                         std::span<const double> x) {
  for (const auto& c : constraints) {
    if (!c.Accepts(x)) return false;
  }
  return true;
}

struct LabeledFeatureSet {
  int arity = 1;
  std::vector<PositionFeatureVector> positives;
  std::vector<PositionFeatureVector> negatives;
};

struct CascadeParams {
  int num_stages = 3;       // n_c
  double min_recall = 0.96; // r_l, per stage
};

struct StageResult {
  PositionConstraint constraint;
  size_t false_positives = 0;
  size_t kept_positives = 0;
};

// Number of positives a stage must keep: ceil(min_recall * num_positives).
size_t RequiredPositives(double min_recall, size_t num_positives);

// Learns the single constraint that passes the fewest negatives while
// keeping at least RequiredPositives() positives. The threshold sits on an
// observed positive value. Ties: fewer false positives, then more kept
// positives, then lower feature index, then sign +1 before -1.
StageResult LearnStage(const LabeledFeatureSet& data, double min_recall);

// Greedy cascade: learn a stage on the survivors, drop everything it
// rejects, repeat. Stops after params.num_stages stages or as soon as no
// negative survives.
ConstraintSet LearnCascade(const LabeledFeatureSet& data,
                           const CascadeParams& params);

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_value = 0.0;
  double selectivity = 0.0;
  double harmonic = 0.0;
  size_t true_positives = 0;
  size_t false_positives = 0;
};

// 2pr / (p + r), 0 when p + r = 0.
double FValue(double precision, double recall);
// Harmonic mean of recall and 1 - selectivity, 0 when both are 0.
double HarmonicScore(double recall, double selectivity);

// Precision is reported as 1 when nothing is detected. Recall is 0 when
// there are no positives.
DetectionMetrics MetricsFromCounts(size_t true_positives,
                                   size_t false_positives,
                                   size_t num_positives,
                                   size_t num_negatives);

DetectionMetrics EvaluateMetrics(const ConstraintSet& set,
                                 const LabeledFeatureSet& data);

nlohmann::json ConstraintSetToJson(const ConstraintSet& set);
// Validates against the catalog, including the redundant "name" fields.
ConstraintSet ConstraintSetFromJson(const nlohmann::json& j);

nlohmann::json MetricsToJson(const DetectionMetrics& m);

}  // namespace rbir

#endif  // RBIR_CONSTRAINT_H_
