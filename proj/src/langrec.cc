#include "rbir/langrec.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "rbir/classifier.h"
#include "rbir/errors.h"
#include "rbir/random.h"

namespace rbir {

namespace fs = std::filesystem;

std::string FoldCase(std::string_view text) {
  std::string out(text);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

namespace {

std::vector<std::string> SplitWords(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch)) || ch == '_') {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::vector<double> Concat(const std::vector<double>& a,
                           const std::vector<double>& b) {
  std::vector<double> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Box BoxFromJson(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    Fail(ErrorCode::kInvalidRequest, "box must be [left, top, right, bottom]");
  }
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
             j[3].get<double>()};
}

}  // namespace

void EmbeddingTable::Add(std::string_view word, std::vector<float> vector) {
  if (dim_ == 0 && vectors_.empty()) dim_ = vector.size();
  if (vector.size() != dim_) {
    Fail(ErrorCode::kDimensionMismatch,
         "embedding for '" + std::string(word) + "' has dimension " +
             std::to_string(vector.size()) + ", expected " +
             std::to_string(dim_));
  }
  std::string key = FoldCase(word);
  if (!vectors_.contains(key)) order_.push_back(key);
  vectors_[key] = std::move(vector);
}

bool EmbeddingTable::Contains(std::string_view word) const {
  return vectors_.contains(FoldCase(word));
}

EmbeddingTable EmbeddingTable::Load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open embeddings " + path.string());
  EmbeddingTable table;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<float> values;
    std::string token;
    while (ss >> token) {
      try {
        size_t used = 0;
        values.push_back(std::stof(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        Fail(ErrorCode::kInvalidRequest,
             path.string() + ":" + std::to_string(line_no) +
                 ": malformed embedding value '" + token + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 &&
        word.find_first_not_of("0123456789") == std::string::npos) {
      table.dim_ = static_cast<size_t>(values[0]);
      continue;
    }
    try {
      table.Add(word, std::move(values));
    } catch (const Error& e) {
      Fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " +
                         e.what());
    }
  }
  return table;
}

void EmbeddingTable::Save(const fs::path& path) const {
  std::ostringstream out;
  out.precision(9);
  out << order_.size() << ' ' << dim_ << '\n';
  for (const auto& word : order_) {
    out << word;
    for (float v : vectors_.at(word)) out << ' ' << v;
    out << '\n';
  }
  WriteFileAtomically(path, out.str());
}

std::vector<double> EmbeddingTable::Embed(std::string_view text) const {
  const std::string folded = FoldCase(text);
  if (auto it = vectors_.find(folded); it != vectors_.end()) {
    return {it->second.begin(), it->second.end()};
  }
  const auto words = SplitWords(folded);
  if (words.empty()) Fail(ErrorCode::kOov, "empty category name");
  std::vector<double> mean(dim_, 0.0);
  for (const auto& w : words) {
    auto it = vectors_.find(w);
    if (it == vectors_.end()) {
      throw Error(ErrorCode::kOov, "out-of-vocabulary word '" + w + "'", w);
    }
    for (size_t d = 0; d < dim_; ++d) mean[d] += it->second[d];
  }
  for (double& v : mean) v /= double(words.size());
  return mean;
}

PositionFeatureVector TripleRecord::Features() const {
  const ImageMeta image{"", width, height};
  const Box boxes[2] = {subject_box, object_box};
  return ComputePositionFeatures(image, boxes);
}

nlohmann::json TripleToJson(const TripleRecord& t) {
  auto box = [](const Box& b) {
    return nlohmann::json::array({b.left, b.top, b.right, b.bottom});
  };
  return {{"subject", t.subject},         {"object", t.object},
          {"predicate", t.predicate},     {"subject_box", box(t.subject_box)},
          {"object_box", box(t.object_box)}, {"width", t.width},
          {"height", t.height}};
}

TripleRecord TripleFromJson(const nlohmann::json& j) {
  try {
    TripleRecord t;
    t.subject = j.at("subject").get<std::string>();
    t.object = j.at("object").get<std::string>();
    t.predicate = j.at("predicate").get<std::string>();
    t.width = j.at("width").get<double>();
    t.height = j.at("height").get<double>();
    if (!(t.width > 0.0) || !(t.height > 0.0)) {
      Fail(ErrorCode::kInvalidRequest, "image width and height must be positive");
    }
    const ImageMeta image{"", t.width, t.height};
    t.subject_box = ClampToImage(BoxFromJson(j.at("subject_box")), image);
    t.object_box = ClampToImage(BoxFromJson(j.at("object_box")), image);
    return t;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest, std::string("malformed triple: ") + e.what());
  }
}

TripleDataset LoadTriples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open triples " + path.string());
  TripleDataset out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(TripleFromJson(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kInvalidRequest, path.string() + ":" +
                                           std::to_string(line_no) + ": " +
                                           e.what());
    } catch (const Error& e) {
      Fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " +
                         e.what());
    }
  }
  return out;
}

void SaveTriples(const TripleDataset& triples, const fs::path& path) {
  std::string out;
  for (const auto& t : triples) out += TripleToJson(t).dump() + "\n";
  WriteFileAtomically(path, out);
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double max = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - max);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> RelationshipClassifier::Logits(
    std::span<const double> input) const {
  if (input.size() != input_dim) {
    Fail(ErrorCode::kDimensionMismatch, "relationship input dimension mismatch");
  }
  std::vector<double> logits(vocabulary.size());
  for (size_t k = 0; k < vocabulary.size(); ++k) {
    double s = bias[k];
    const double* w = weights.data() + k * input_dim;
    for (size_t d = 0; d < input_dim; ++d) s += w[d] * input[d];
    logits[k] = s;
  }
  return logits;
}

std::vector<double> RelationshipClassifier::Probabilities(
    std::span<const double> input) const {
  return Softmax(Logits(input));
}

nlohmann::json RelationshipClassifier::ToJson() const {
  return {{"vocabulary", vocabulary},
          {"input_dim", input_dim},
          {"weights", weights},
          {"bias", bias}};
}

RelationshipClassifier RelationshipClassifier::FromJson(const nlohmann::json& j) {
  try {
    RelationshipClassifier c;
    c.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    c.input_dim = j.at("input_dim").get<size_t>();
    c.weights = j.at("weights").get<std::vector<double>>();
    c.bias = j.at("bias").get<std::vector<double>>();
    if (c.weights.size() != c.vocabulary.size() * c.input_dim ||
        c.bias.size() != c.vocabulary.size()) {
      Fail(ErrorCode::kInvalidRequest, "relationship classifier shape mismatch");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest,
         std::string("malformed relationship classifier: ") + e.what());
  }
}

SoftmaxProblem::SoftmaxProblem(std::vector<double> inputs,
                               std::vector<size_t> labels, size_t input_dim,
                               size_t num_classes)
    : inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      input_dim_(input_dim),
      num_classes_(num_classes) {
  if (inputs_.size() != labels_.size() * input_dim_) {
    Fail(ErrorCode::kDimensionMismatch, "softmax inputs do not match labels");
  }
}

double SoftmaxProblem::Loss(std::span<const double> params) const {
  const double* bias = params.data() + num_classes_ * input_dim_;
  std::vector<double> logits(num_classes_);
  double loss = 0.0;
  for (size_t i = 0; i < labels_.size(); ++i) {
    const double* x = inputs_.data() + i * input_dim_;
    for (size_t k = 0; k < num_classes_; ++k) {
      const double* w = params.data() + k * input_dim_;
      double s = bias[k];
      for (size_t d = 0; d < input_dim_; ++d) s += w[d] * x[d];
      logits[k] = s;
    }
    const double max = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - max);
    loss += max + std::log(sum) - logits[labels_[i]];
  }
  return loss / double(labels_.size());
}

std::vector<double> SoftmaxProblem::Gradient(
    std::span<const double> params) const {
  std::vector<double> grad(num_params(), 0.0);
  const double* bias = params.data() + num_classes_ * input_dim_;
  double* grad_bias = grad.data() + num_classes_ * input_dim_;
  std::vector<double> logits(num_classes_);
  const double inv_n = 1.0 / double(labels_.size());
  for (size_t i = 0; i < labels_.size(); ++i) {
    const double* x = inputs_.data() + i * input_dim_;
    for (size_t k = 0; k < num_classes_; ++k) {
      const double* w = params.data() + k * input_dim_;
      double s = bias[k];
      for (size_t d = 0; d < input_dim_; ++d) s += w[d] * x[d];
      logits[k] = s;
    }
    const std::vector<double> p = Softmax(logits);
    for (size_t k = 0; k < num_classes_; ++k) {
      const double g = (p[k] - (k == labels_[i] ? 1.0 : 0.0)) * inv_n;
      double* gw = grad.data() + k * input_dim_;
      for (size_t d = 0; d < input_dim_; ++d) gw[d] += g * x[d];
      grad_bias[k] += g;
    }
  }
  return grad;
}

RelationshipTrainResult TrainRelationshipClassifier(
    const TripleDataset& triples, const EmbeddingTable& table,
    const RelationshipTrainParams& params) {
  if (triples.empty()) {
    Fail(ErrorCode::kInsufficientData, "no triples to train on");
  }
  std::vector<std::string> vocab = params.vocabulary;
  if (vocab.empty()) {
    std::set<std::string> distinct;
    for (const auto& t : triples) distinct.insert(t.predicate);
    vocab.assign(distinct.begin(), distinct.end());
  }
  std::map<std::string, size_t> label_of;
  for (size_t k = 0; k < vocab.size(); ++k) {
    if (!label_of.emplace(vocab[k], k).second) {
      Fail(ErrorCode::kInvalidRequest, "duplicate predicate '" + vocab[k] + "'");
    }
  }

  RelationshipTrainResult result;
  const size_t input_dim = 2 * table.dim();
  std::vector<double> inputs;
  std::vector<size_t> labels;
  for (const auto& t : triples) {
    auto label = label_of.find(t.predicate);
    if (label == label_of.end()) {
      Fail(ErrorCode::kInvalidRequest,
           "predicate '" + t.predicate + "' is not in the vocabulary");
    }
    try {
      const auto x = Concat(table.Embed(t.subject), table.Embed(t.object));
      inputs.insert(inputs.end(), x.begin(), x.end());
      labels.push_back(label->second);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOov) throw;
      ++result.skipped_oov;
    }
  }
  if (labels.empty()) {
    Fail(ErrorCode::kInsufficientData,
         "every triple was out of vocabulary (" +
             std::to_string(result.skipped_oov) + " skipped)");
  }

  const SoftmaxProblem problem(std::move(inputs), std::move(labels), input_dim,
                               vocab.size());
  std::vector<double> theta(problem.num_params());
  Rng rng(params.seed);
  for (double& v : theta) v = 0.01 * rng.Normal();

  double lr = params.learning_rate;
  double loss = problem.Loss(theta);
  std::vector<double> trial(theta.size());
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    result.loss_history.push_back(loss);
    const std::vector<double> grad = problem.Gradient(theta);
    for (int attempt = 0; attempt < 30; ++attempt) {
      for (size_t i = 0; i < theta.size(); ++i) {
        trial[i] = theta[i] - lr * grad[i];
      }
      const double next = problem.Loss(trial);
      if (next <= loss) {
        theta.swap(trial);
        loss = next;
        break;
      }
      lr *= 0.5;
    }
  }

  RelationshipClassifier& c = result.classifier;
  c.vocabulary = std::move(vocab);
  c.input_dim = input_dim;
  const size_t nw = c.vocabulary.size() * input_dim;
  c.weights.assign(theta.begin(), theta.begin() + nw);
  c.bias.assign(theta.begin() + nw, theta.end());
  return result;
}

std::vector<PredicateLikelihood> PredictRelationships(
    std::string_view category1, std::string_view category2,
    const EmbeddingTable& table, const RelationshipClassifier& classifier,
    size_t top_m) {
  const auto input = Concat(table.Embed(category1), table.Embed(category2));
  const auto p = classifier.Probabilities(input);
  std::vector<size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return p[a] > p[b]; });
  std::vector<PredicateLikelihood> out;
  for (size_t i = 0; i < std::min(top_m, order.size()); ++i) {
    out.push_back({classifier.vocabulary[order[i]], p[order[i]]});
  }
  return out;
}

void RelationshipConstraintStore::Save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [predicate, set] : sets) {
    const std::string file = SanitizeName(predicate) + ".json";
    WriteFileAtomically(dir / file, ConstraintSetToJson(set).dump(2) + "\n");
    files[predicate] = file;
  }
  const nlohmann::json manifest = {{"vocabulary", vocabulary},
                                   {"sets", std::move(files)}};
  WriteFileAtomically(dir / "manifest.json", manifest.dump(2) + "\n");
}

RelationshipConstraintStore RelationshipConstraintStore::Load(
    const fs::path& dir) {
  RelationshipConstraintStore store;
  try {
    const auto manifest = nlohmann::json::parse(ReadFile(dir / "manifest.json"));
    store.vocabulary = manifest.at("vocabulary").get<std::vector<std::string>>();
    for (const auto& [predicate, file] : manifest.at("sets").items()) {
      ConstraintSet set = ConstraintSetFromJson(
          nlohmann::json::parse(ReadFile(dir / file.get<std::string>())));
      if (set.arity != 2) {
        Fail(ErrorCode::kInvalidRequest,
             "relationship set '" + predicate + "' is not pairwise");
      }
      store.sets.emplace(predicate, std::move(set));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kIo, "corrupt relationship store in " + dir.string() +
                             ": " + e.what());
  }
  return store;
}

ConstraintSet LearnRelationshipConstraints(const TripleDataset& triples,
                                           std::string_view predicate,
                                           const CascadeParams& params,
                                           size_t min_samples) {
  LabeledFeatureSet data;
  data.arity = 2;
  for (const auto& t : triples) {
    (t.predicate == predicate ? data.positives : data.negatives)
        .push_back(t.Features());
  }
  if (data.positives.size() < min_samples) {
    Fail(ErrorCode::kInsufficientData,
         "predicate '" + std::string(predicate) + "' has " +
             std::to_string(data.positives.size()) + " examples (need " +
             std::to_string(min_samples) + ")");
  }
  ConstraintSet set = LearnCascade(data, params);
  set.provenance = Provenance::kLanguage;
  return set;
}

LanguageRecommendationResult RecommendLanguage(
    std::string_view category1, std::string_view category2, size_t top_m,
    const EmbeddingTable& table, const RelationshipClassifier& classifier,
    const RelationshipConstraintStore& store, double min_likelihood) {
  LanguageRecommendationResult result;
  if (store.sets.empty()) {
    result.diagnostics.push_back("relationship constraint store is empty");
    return result;
  }
  for (auto& p : PredictRelationships(category1, category2, table, classifier,
                                      top_m)) {
    if (p.likelihood < min_likelihood) continue;
    auto it = store.sets.find(p.predicate);
    if (it == store.sets.end()) {
      result.diagnostics.push_back("no constraint set stored for '" +
                                   p.predicate + "'");
      continue;
    }
    result.recommendations.push_back(
        {std::move(p.predicate), p.likelihood, it->second});
  }
  return result;
}

const std::vector<std::string>& DefaultSpatialPredicates() {
  static const std::vector<std::string> kPredicates = {
      "on the left of", "on the right of", "above",  "below", "behind",
      "in the front of", "on the top of",  "under",  "near",  "inside"};
  return kPredicates;
}

RelationshipDetectionReport EvalRelationshipDetection(
    const RelationshipConstraintStore& store, const TripleDataset& test,
    const std::vector<std::string>& spatial_predicates, size_t min_test) {
  if (test.empty()) Fail(ErrorCode::kInsufficientData, "empty test set");
  std::vector<PositionFeatureVector> features;
  features.reserve(test.size());
  for (const auto& t : test) features.push_back(t.Features());

  std::map<std::string, size_t> counts;
  for (const auto& t : test) ++counts[t.predicate];

  RelationshipDetectionReport report;
  const std::set<std::string> spatial(spatial_predicates.begin(),
                                      spatial_predicates.end());
  auto accumulate = [](DetectionMetrics& acc, const DetectionMetrics& m) {
    acc.precision += m.precision;
    acc.recall += m.recall;
    acc.f_value += m.f_value;
    acc.selectivity += m.selectivity;
    acc.harmonic += m.harmonic;
    acc.true_positives += m.true_positives;
    acc.false_positives += m.false_positives;
  };
  for (const auto& [predicate, count] : counts) {
    auto it = store.sets.find(predicate);
    if (count < min_test || it == store.sets.end()) {
      report.excluded.push_back(predicate);
      continue;
    }
    size_t tp = 0, fp = 0;
    for (size_t i = 0; i < test.size(); ++i) {
      if (!SatisfiesAll(it->second, features[i])) continue;
      (test[i].predicate == predicate ? tp : fp) += 1;
    }
    const DetectionMetrics m =
        MetricsFromCounts(tp, fp, count, test.size() - count);
    report.per_predicate[predicate] = m;
    accumulate(report.mean_all, m);
    if (spatial.contains(predicate)) {
      accumulate(report.mean_spatial, m);
      ++report.num_spatial;
    }
  }
  auto finish = [](DetectionMetrics& acc, size_t n) {
    if (n == 0) return;
    acc.precision /= n;
    acc.recall /= n;
    acc.f_value /= n;
    acc.selectivity /= n;
    acc.harmonic /= n;
  };
  finish(report.mean_all, report.per_predicate.size());
  finish(report.mean_spatial, report.num_spatial);
  return report;
}

nlohmann::json ReportToJson(const RelationshipDetectionReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [p, m] : report.per_predicate) per[p] = MetricsToJson(m);
  return {{"per_predicate", std::move(per)},
          {"mean_all", MetricsToJson(report.mean_all)},
          {"mean_spatial", MetricsToJson(report.mean_spatial)},
          {"num_spatial", report.num_spatial},
          {"excluded", report.excluded}};
}

}  // namespace rbir
