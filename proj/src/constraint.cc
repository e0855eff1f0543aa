#include "rbir/constraint.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <tuple>

#include "rbir/errors.h"

namespace rbir {

std::string_view ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kManual:
      return "manual";
    case Provenance::kCanvas:
      return "canvas";
    case Provenance::kMining:
      return "mining";
    case Provenance::kLanguage:
      return "language";
  }
  return "manual";
}

Provenance ParseProvenance(std::string_view name) {
  if (name == "manual") return Provenance::kManual;
  if (name == "canvas") return Provenance::kCanvas;
  if (name == "mining") return Provenance::kMining;
  if (name == "language") return Provenance::kLanguage;
  Fail(ErrorCode::kInvalidRequest,
       "unknown provenance '" + std::string(name) + "'");
}

void ValidateConstraintSet(const ConstraintSet& set, size_t max_constraints) {
  const FeatureCatalog& catalog = Catalog(set.arity);
  if (set.constraints.size() > max_constraints) {
    Fail(ErrorCode::kInvalidRequest,
         "constraint set has " + std::to_string(set.constraints.size()) +
             " constraints (max " + std::to_string(max_constraints) + ")");
  }
  for (const auto& c : set.constraints) {
    if (c.feature < 0 || static_cast<size_t>(c.feature) >= catalog.size()) {
      Fail(ErrorCode::kInvalidRequest,
           "feature index " + std::to_string(c.feature) +
               " out of range for arity " + std::to_string(set.arity));
    }
    if (c.sign != 1 && c.sign != -1) {
      Fail(ErrorCode::kInvalidRequest, "constraint sign must be +1 or -1");
    }
    if (!std::isfinite(c.threshold)) {
      Fail(ErrorCode::kInvalidRequest, "constraint threshold must be finite");
    }
  }
}

bool SatisfiesAll(const ConstraintSet& set, const PositionFeatureVector& x) {
  if (set.arity != x.arity) {
    Fail(ErrorCode::kInvalidRequest,
         "constraint arity " + std::to_string(set.arity) +
             " does not match feature arity " + std::to_string(x.arity));
  }
  return SatisfiesAll(set.constraints, x.values);
}

size_t RequiredPositives(double min_recall, size_t num_positives) {
  // The epsilon keeps products such as 0.96 * 25 = 24.000000000000004 from
  // rounding up to an extra positive.
  const double m = std::ceil(min_recall * num_positives - 1e-9);
  return std::clamp<size_t>(static_cast<size_t>(std::max(m, 1.0)), 1,
                            num_positives);
}

namespace {

void CheckArity(const LabeledFeatureSet& data) {
  const size_t n_p = Catalog(data.arity).size();
  auto check = [&](const std::vector<PositionFeatureVector>& xs) {
    for (const auto& x : xs) {
      if (x.arity != data.arity || x.size() != n_p) {
        Fail(ErrorCode::kDimensionMismatch,
             "feature vector arity does not match the labeled set");
      }
    }
  };
  check(data.positives);
  check(data.negatives);
}

StageResult LearnStageOn(std::span<const PositionFeatureVector* const> pos,
                         std::span<const PositionFeatureVector* const> neg,
                         size_t num_features, double min_recall) {
  const size_t m = RequiredPositives(min_recall, pos.size());
  StageResult best;
  bool have_best = false;
  std::vector<double> values(pos.size());
  for (size_t f = 0; f < num_features; ++f) {
    for (int sign : {1, -1}) {
      for (size_t i = 0; i < pos.size(); ++i) {
        values[i] = sign * (*pos[i])[f];
      }
      std::nth_element(values.begin(), values.begin() + (m - 1), values.end(),
                       std::greater<>());
      const double cut = values[m - 1];
      size_t kept = 0;
      for (const auto* x : pos) kept += sign * (*x)[f] >= cut;
      size_t fp = 0;
      for (const auto* x : neg) fp += sign * (*x)[f] >= cut;
      const auto key = std::make_tuple(fp, -static_cast<long long>(kept));
      const auto best_key =
          std::make_tuple(best.false_positives,
                          -static_cast<long long>(best.kept_positives));
      if (!have_best || key < best_key) {
        best.constraint = {static_cast<int>(f), sign * cut, sign};
        best.false_positives = fp;
        best.kept_positives = kept;
        have_best = true;
      }
    }
  }
  return best;
}

std::vector<const PositionFeatureVector*> Pointers(
    const std::vector<PositionFeatureVector>& xs) {
  std::vector<const PositionFeatureVector*> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(&x);
  return out;
}

}  // namespace

StageResult LearnStage(const LabeledFeatureSet& data, double min_recall) {
  if (data.positives.empty()) {
    Fail(ErrorCode::kInsufficientData, "cannot learn a stage without positives");
  }
  CheckArity(data);
  return LearnStageOn(Pointers(data.positives), Pointers(data.negatives),
                      Catalog(data.arity).size(), min_recall);
}

ConstraintSet LearnCascade(const LabeledFeatureSet& data,
                           const CascadeParams& params) {
  if (data.positives.empty()) {
    Fail(ErrorCode::kInsufficientData,
         "cannot learn a cascade without positives");
  }
  if (params.num_stages < 1 || !(params.min_recall > 0.0) ||
      params.min_recall > 1.0) {
    Fail(ErrorCode::kInvalidRequest, "invalid cascade parameters");
  }
  CheckArity(data);
  const size_t num_features = Catalog(data.arity).size();
  ConstraintSet set;
  set.arity = data.arity;
  std::vector<const PositionFeatureVector*> pos = Pointers(data.positives);
  std::vector<const PositionFeatureVector*> neg = Pointers(data.negatives);
  while (static_cast<int>(set.constraints.size()) < params.num_stages &&
         !neg.empty()) {
    const StageResult stage =
        LearnStageOn(pos, neg, num_features, params.min_recall);
    set.constraints.push_back(stage.constraint);
    auto rejected = [&](const PositionFeatureVector* x) {
      return !stage.constraint.Accepts(x->values);
    };
    std::erase_if(pos, rejected);
    std::erase_if(neg, rejected);
  }
  return set;
}

double FValue(double precision, double recall) {
  const double den = precision + recall;
  return den > 0.0 ? 2.0 * precision * recall / den : 0.0;
}

double HarmonicScore(double recall, double selectivity) {
  const double rejection = 1.0 - selectivity;
  const double den = recall + rejection;
  return den > 0.0 ? 2.0 * recall * rejection / den : 0.0;
}

DetectionMetrics MetricsFromCounts(size_t true_positives,
                                   size_t false_positives,
                                   size_t num_positives,
                                   size_t num_negatives) {
  const size_t total = num_positives + num_negatives;
  if (total == 0) {
    Fail(ErrorCode::kInsufficientData, "cannot evaluate on empty data");
  }
  DetectionMetrics m;
  m.true_positives = true_positives;
  m.false_positives = false_positives;
  const size_t detected = true_positives + false_positives;
  m.precision = detected == 0 ? 1.0 : double(true_positives) / detected;
  m.recall =
      num_positives == 0 ? 0.0 : double(true_positives) / num_positives;
  m.selectivity = double(detected) / total;
  m.f_value = FValue(m.precision, m.recall);
  m.harmonic = HarmonicScore(m.recall, m.selectivity);
  return m;
}

DetectionMetrics EvaluateMetrics(const ConstraintSet& set,
                                 const LabeledFeatureSet& data) {
  if (set.arity != data.arity) {
    Fail(ErrorCode::kInvalidRequest, "constraint arity does not match data");
  }
  CheckArity(data);
  size_t tp = 0, fp = 0;
  for (const auto& x : data.positives) tp += SatisfiesAll(set.constraints, x.values);
  for (const auto& x : data.negatives) fp += SatisfiesAll(set.constraints, x.values);
  return MetricsFromCounts(tp, fp, data.positives.size(),
                           data.negatives.size());
}

nlohmann::json ConstraintSetToJson(const ConstraintSet& set) {
  const FeatureCatalog& catalog = Catalog(set.arity);
  nlohmann::json constraints = nlohmann::json::array();
  for (const auto& c : set.constraints) {
    constraints.push_back({{"f", c.feature},
                           {"name", catalog[c.feature].name},
                           {"theta", c.threshold},
                           {"sign", c.sign}});
  }
  return {{"arity", set.arity},
          {"provenance", ProvenanceName(set.provenance)},
          {"constraints", std::move(constraints)}};
}

ConstraintSet ConstraintSetFromJson(const nlohmann::json& j) {
  try {
    ConstraintSet set;
    set.arity = j.at("arity").get<int>();
    set.provenance =
        ParseProvenance(j.value("provenance", std::string("manual")));
    const FeatureCatalog& catalog = Catalog(set.arity);
    for (const auto& c : j.at("constraints")) {
      PositionConstraint pc;
      pc.feature = c.at("f").get<int>();
      pc.threshold = c.at("theta").get<double>();
      pc.sign = c.at("sign").get<int>();
      if (pc.feature < 0 || static_cast<size_t>(pc.feature) >= catalog.size()) {
        Fail(ErrorCode::kInvalidRequest,
             "feature index " + std::to_string(pc.feature) + " out of range");
      }
      if (c.contains("name") &&
          c.at("name").get<std::string>() != catalog[pc.feature].name) {
        Fail(ErrorCode::kInvalidRequest,
             "feature name '" + c.at("name").get<std::string>() +
                 "' does not match catalog entry '" +
                 catalog[pc.feature].name + "' at index " +
                 std::to_string(pc.feature));
      }
      set.constraints.push_back(pc);
    }
    ValidateConstraintSet(set);
    return set;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest,
         std::string("malformed constraint set: ") + e.what());
  }
}

nlohmann::json MetricsToJson(const DetectionMetrics& m) {
  return {{"precision", m.precision},     {"recall", m.recall},
          {"f_value", m.f_value},         {"selectivity", m.selectivity},
          {"harmonic", m.harmonic},       {"true_positives", m.true_positives},
          {"false_positives", m.false_positives}};
}

}  // namespace rbir
