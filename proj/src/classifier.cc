#include "rbir/classifier.h"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "rbir/errors.h"
#include "rbir/random.h"

namespace rbir {

namespace fs = std::filesystem;

std::string_view ClassifierKindName(ClassifierKind kind) {
  return kind == ClassifierKind::kCategory ? "category" : "attribute";
}

ClassifierKind ParseClassifierKind(std::string_view name) {
  if (name == "category") return ClassifierKind::kCategory;
  if (name == "attribute") return ClassifierKind::kAttribute;
  Fail(ErrorCode::kInvalidRequest,
       "unknown classifier kind '" + std::string(name) + "'");
}

double SvmObjective(std::span<const double> weights, double bias,
                    MatrixView<float> positives, MatrixView<float> negatives,
                    double lambda) {
  double reg = 0.0;
  for (double w : weights) reg += w * w;
  double loss = 0.0;
  for (size_t i = 0; i < positives.rows(); ++i) {
    loss += std::max(0.0, 1.0 - (Dot(weights, positives.row(i)) + bias));
  }
  for (size_t i = 0; i < negatives.rows(); ++i) {
    loss += std::max(0.0, 1.0 + (Dot(weights, negatives.row(i)) + bias));
  }
  const size_t n = positives.rows() + negatives.rows();
  return 0.5 * lambda * reg + loss / double(n);
}

LinearClassifier TrainSvm(MatrixView<float> positives,
                          MatrixView<float> negatives, const SvmParams& params,
                          std::string name, ClassifierKind kind) {
  if (positives.empty() || negatives.empty()) {
    Fail(ErrorCode::kInsufficientData,
         "SVM training needs at least one positive and one negative");
  }
  if (positives.dim() != negatives.dim()) {
    Fail(ErrorCode::kDimensionMismatch,
         "positive and negative features have different dimensions");
  }
  if (!(params.lambda > 0.0) || params.epochs < 1) {
    Fail(ErrorCode::kInvalidRequest, "SVM needs lambda > 0 and epochs >= 1");
  }
  const size_t dim = positives.dim();
  const size_t n = positives.rows() + negatives.rows();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  // w is stored as scale * v so the shrink step is O(1).
  std::vector<double> v(dim, 0.0);
  double scale = 1.0;
  double bias = 0.0;
  std::vector<double> avg(dim, 0.0);
  double avg_bias = 0.0;
  size_t avg_count = 0;

  const double lambda = params.lambda;
  const double t0 = 1.0 / lambda;
  double t = 0.0;
  Rng rng(params.seed);
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    rng.Shuffle(order);
    for (size_t idx : order) {
      const bool positive = idx < positives.rows();
      const auto x = positive ? positives.row(idx)
                              : negatives.row(idx - positives.rows());
      const double y = positive ? 1.0 : -1.0;
      const double eta = 1.0 / (lambda * (t + t0));
      const double margin = y * (scale * Dot(v, x) + bias);
      scale *= 1.0 - eta * lambda;
      if (margin < 1.0) {
        const double step = eta * y / scale;
        for (size_t d = 0; d < dim; ++d) v[d] += step * x[d];
        bias += eta * y;
      }
      if (scale < 1e-9) {
        for (double& vd : v) vd *= scale;
        scale = 1.0;
      }
      t += 1.0;
      if (epoch >= params.epochs / 2) {
        ++avg_count;
        const double mu = 1.0 / double(avg_count);
        for (size_t d = 0; d < dim; ++d) {
          avg[d] += mu * (scale * v[d] - avg[d]);
        }
        avg_bias += mu * (bias - avg_bias);
      }
    }
  }
  if (avg_count == 0) {
    for (size_t d = 0; d < dim; ++d) avg[d] = scale * v[d];
    avg_bias = bias;
  }

  LinearClassifier c;
  c.name = std::move(name);
  c.kind = kind;
  c.weights.resize(dim);
  for (size_t d = 0; d < dim; ++d) c.weights[d] = static_cast<float>(avg[d]);
  c.bias = static_cast<float>(avg_bias);
  c.num_positives = positives.rows();
  c.num_negatives = negatives.rows();
  for (float w : c.weights) {
    if (!std::isfinite(w)) Fail(ErrorCode::kInternal, "SVM weights diverged");
  }
  return c;
}

std::string SanitizeName(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char ch : name) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' ||
                    ch == '_' || ch == '-';
    out.push_back(ok ? ch : '_');
  }
  if (out.empty() || out.find_first_not_of('.') == std::string::npos) {
    Fail(ErrorCode::kInvalidRequest,
         "invalid classifier name '" + std::string(name) + "'");
  }
  return out;
}

void WriteFileAtomically(const fs::path& path, std::string_view contents) {
  static std::atomic<uint64_t> counter{0};
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) Fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) Fail(ErrorCode::kIo, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    Fail(ErrorCode::kIo, "cannot replace " + path.string());
  }
}

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ClassifierCache::ClassifierCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create cache directory " + dir_.string());
}

void ClassifierCache::Put(const LinearClassifier& classifier) {
  const std::string stem = SanitizeName(classifier.name);
  static_assert(std::endian::native == std::endian::little);
  std::string blob((classifier.weights.size() + 1) * sizeof(float), '\0');
  std::memcpy(blob.data(), classifier.weights.data(),
              classifier.weights.size() * sizeof(float));
  std::memcpy(blob.data() + classifier.weights.size() * sizeof(float),
              &classifier.bias, sizeof(float));
  const nlohmann::json meta = {
      {"name", classifier.name},
      {"kind", ClassifierKindName(classifier.kind)},
      {"D", classifier.weights.size()},
      {"counts",
       {{"positives", classifier.num_positives},
        {"negatives", classifier.num_negatives}}}};
  std::unique_lock lock(mutex_);
  // Weights first: a reader only trusts an entry once its metadata exists.
  WriteFileAtomically(dir_ / (stem + ".f32"), blob);
  WriteFileAtomically(dir_ / (stem + ".json"), meta.dump(2) + "\n");
}

std::optional<LinearClassifier> ClassifierCache::Find(
    std::string_view name) const {
  const std::string stem = SanitizeName(name);
  std::shared_lock lock(mutex_);
  const fs::path meta_path = dir_ / (stem + ".json");
  if (!fs::exists(meta_path)) return std::nullopt;
  LinearClassifier c;
  try {
    const auto meta = nlohmann::json::parse(ReadFile(meta_path));
    c.name = meta.at("name").get<std::string>();
    c.kind = ParseClassifierKind(meta.at("kind").get<std::string>());
    const size_t dim = meta.at("D").get<size_t>();
    c.num_positives = meta.at("counts").at("positives").get<size_t>();
    c.num_negatives = meta.at("counts").at("negatives").get<size_t>();
    const std::string blob = ReadFile(dir_ / (stem + ".f32"));
    if (blob.size() != (dim + 1) * sizeof(float)) {
      Fail(ErrorCode::kIo, "weight file size does not match D for '" +
                               std::string(name) + "'");
    }
    c.weights.resize(dim);
    std::memcpy(c.weights.data(), blob.data(), dim * sizeof(float));
    std::memcpy(&c.bias, blob.data() + dim * sizeof(float), sizeof(float));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, "corrupt classifier metadata for '" +
                             std::string(name) + "': " + e.what());
  }
  if (c.name != name) return std::nullopt;
  return c;
}

LinearClassifier ClassifierCache::Get(std::string_view name) const {
  auto c = Find(name);
  if (!c) {
    Fail(ErrorCode::kNotFound,
         "classifier '" + std::string(name) + "' not found");
  }
  return std::move(*c);
}

std::vector<std::string> ClassifierCache::List() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    try {
      const auto meta = nlohmann::json::parse(ReadFile(entry.path()));
      names.push_back(meta.at("name").get<std::string>());
    } catch (const std::exception&) {
      continue;
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace rbir
