#ifndef RBIR_CLASSIFIER_H_
#define RBIR_CLASSIFIER_H_

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbir/matrix.h"

namespace rbir {

enum class ClassifierKind { kCategory, kAttribute };

std::string_view ClassifierKindName(ClassifierKind kind);
ClassifierKind ParseClassifierKind(std::string_view name);

// Linear region scorer. Retrieval ranks by <weights, v>; the bias is kept
// only as a training artifact.
struct LinearClassifier {
  std::string name;
  ClassifierKind kind = ClassifierKind::kCategory;
  std::vector<float> weights;
  float bias = 0.0f;
  size_t num_positives = 0;
  size_t num_negatives = 0;

  size_t dim() const { return weights.size(); }
  double Score(std::span<const float> v) const { return Dot(weights, v); }
};

struct SvmParams {
  double lambda = 1e-3;
  int epochs = 200;
  uint64_t seed = 0;
};

// L2-regularized hinge loss: lambda/2 |w|^2 + mean(max(0, 1 - y(<w,x> + b))).
double SvmObjective(std::span<const double> weights, double bias,
                    MatrixView<float> positives, MatrixView<float> negatives,
                    double lambda);

// Stochastic subgradient descent with step 1/(lambda (t + t0)) over a seeded
// shuffle per epoch; the returned weights average the iterates of the
// second half of the epochs.
LinearClassifier TrainSvm(MatrixView<float> positives,
                          MatrixView<float> negatives, const SvmParams& params,
                          std::string name = {},
                          ClassifierKind kind = ClassifierKind::kCategory);

// Maps a classifier name to a file stem: [A-Za-z0-9._-] kept, everything
// else replaced by '_'. Throws invalid_request for empty or dot-only names.
std::string SanitizeName(std::string_view name);

// Directory of named classifiers: <stem>.json metadata plus <stem>.f32
// weights (little-endian float32, bias appended). Readers run concurrently;
// writers are serialized and replace files atomically.
class ClassifierCache {
 public:
  explicit ClassifierCache(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }

  void Put(const LinearClassifier& classifier);
  std::optional<LinearClassifier> Find(std::string_view name) const;
  // Throws not_found naming the classifier.
  LinearClassifier Get(std::string_view name) const;
  std::vector<std::string> List() const;

 private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

// Writes `contents` to a sibling temp file and renames it over `path`.
void WriteFileAtomically(const std::filesystem::path& path,
                         std::string_view contents);
std::string ReadFile(const std::filesystem::path& path);

}  // namespace rbir

#endif  // RBIR_CLASSIFIER_H_
