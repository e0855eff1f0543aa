#include "rbir/state.h"

#include <chrono>
#include <optional>

#include "rbir/errors.h"

namespace rbir {

namespace fs = std::filesystem;

namespace {

const char kDatasetDir[] = "dataset";
const char kIndexFile[] = "index.ivf";
const char kClassifierDir[] = "classifiers";
const char kRelationshipDir[] = "relationships";
const char kRelationshipClassifier[] = "classifier.json";
const char kEmbeddings[] = "embeddings.txt";

void CheckDim(const std::string& what_a, size_t a, const std::string& what_b,
              size_t b) {
  if (a != b) {
    Fail(ErrorCode::kDimensionMismatch,
         what_a + " D=" + std::to_string(a) + " but " + what_b +
             " D=" + std::to_string(b));
  }
}

}  // namespace

void ValidateStateDims(const EngineState& state) {
  std::optional<std::pair<std::string, size_t>> ref;
  if (state.index) {
    ref = {"index", state.index->dim()};
  } else if (state.dataset) {
    ref = {"dataset", state.dataset->dim};
  }
  if (!ref) return;
  if (state.index && state.dataset) {
    CheckDim("index", state.index->dim(), "dataset", state.dataset->dim);
  }
  for (const auto& [name, c] : state.classifiers) {
    CheckDim(ref->first, ref->second, "classifier '" + name + "'", c.dim());
  }
}

void SaveState(const EngineState& state, const fs::path& dir) {
  ValidateStateDims(state);
  const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
  fs::path target = dir;
  if (!target.has_filename()) target = target.parent_path();
  const fs::path tmp = target.parent_path() /
                       (target.filename().string() + ".tmp-" + std::to_string(stamp));
  const fs::path old = target.parent_path() /
                       (target.filename().string() + ".old-" + std::to_string(stamp));
  try {
    fs::create_directories(tmp);
    if (state.dataset) WriteDataset(*state.dataset, tmp / kDatasetDir);
    if (state.index) state.index->Save(tmp / kIndexFile);
    if (!state.classifiers.empty()) {
      ClassifierCache cache(tmp / kClassifierDir);
      for (const auto& [name, c] : state.classifiers) cache.Put(c);
    }
    if (state.relationships) state.relationships->Save(tmp / kRelationshipDir);
    if (state.relationship_classifier) {
      fs::create_directories(tmp / kRelationshipDir);
      WriteFileAtomically(tmp / kRelationshipDir / kRelationshipClassifier,
                          state.relationship_classifier->ToJson().dump() + "\n");
    }
    if (state.embeddings) {
      fs::create_directories(tmp / kRelationshipDir);
      state.embeddings->Save(tmp / kRelationshipDir / kEmbeddings);
    }
    if (fs::exists(target)) {
      // Entries the state does not own (staged datasets, notes) carry over.
      for (const auto& entry : fs::directory_iterator(target)) {
        const std::string name = entry.path().filename().string();
        if (name != kDatasetDir && name != kIndexFile && name != kClassifierDir &&
            name != kRelationshipDir) {
          fs::rename(entry.path(), tmp / name);
        }
      }
      fs::rename(target, old);
    }
    fs::rename(tmp, target);
    fs::remove_all(old);
  } catch (const fs::filesystem_error& e) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    Fail(ErrorCode::kIo, std::string("saving state failed: ") + e.what());
  }
}

LoadedState LoadState(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    Fail(ErrorCode::kNotFound, "state directory " + dir.string() + " does not exist");
  }
  LoadedState out;
  EngineState& s = out.state;
  auto missing = [&](const std::string& what, const fs::path& p) {
    out.warnings.push_back(what + " missing (" + p.string() + ")");
  };

  const fs::path manifest = dir / kDatasetDir / "manifest.json";
  if (fs::exists(manifest)) {
    s.dataset = std::make_shared<const Dataset>(LoadDataset(manifest));
  } else {
    missing("dataset", manifest);
  }
  if (fs::exists(dir / kIndexFile)) {
    s.index = std::make_shared<const InvertedIndex>(InvertedIndex::Load(dir / kIndexFile));
  } else {
    missing("index", dir / kIndexFile);
  }
  if (fs::is_directory(dir / kClassifierDir)) {
    const ClassifierCache cache(dir / kClassifierDir);
    for (const auto& name : cache.List()) s.classifiers.emplace(name, cache.Get(name));
  } else {
    missing("classifier cache", dir / kClassifierDir);
  }
  const fs::path rel = dir / kRelationshipDir;
  if (fs::exists(rel / "manifest.json")) {
    s.relationships = std::make_shared<const RelationshipConstraintStore>(
        RelationshipConstraintStore::Load(rel));
  } else {
    missing("relationship constraint store", rel / "manifest.json");
  }
  if (fs::exists(rel / kRelationshipClassifier)) {
    try {
      s.relationship_classifier = std::make_shared<const RelationshipClassifier>(
          RelationshipClassifier::FromJson(
              nlohmann::json::parse(ReadFile(rel / kRelationshipClassifier))));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kIo, "corrupt relationship classifier: " + std::string(e.what()));
    }
  } else {
    missing("relationship classifier", rel / kRelationshipClassifier);
  }
  if (fs::exists(rel / kEmbeddings)) {
    s.embeddings = std::make_shared<const EmbeddingTable>(EmbeddingTable::Load(rel / kEmbeddings));
  } else {
    missing("embedding table", rel / kEmbeddings);
  }
  ValidateStateDims(s);
  if (s.index && s.dataset && s.index->size() != s.dataset->regions.size()) {
    Fail(ErrorCode::kInvalidRequest,
         "index holds " + std::to_string(s.index->size()) + " regions but dataset holds " +
             std::to_string(s.dataset->regions.size()));
  }
  return out;
}

}  // namespace rbir
