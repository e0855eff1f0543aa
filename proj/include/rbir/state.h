#ifndef RBIR_STATE_H_
#define RBIR_STATE_H_

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rbir/classifier.h"
#include "rbir/ivfadc.h"
#include "rbir/langrec.h"
#include "rbir/store.h"

namespace rbir {

// Everything a service needs to answer queries. Any part may be absent.
//
// On disk:
//   dataset/                 dataset files (manifest.json)
//   index.ivf
//   classifiers/             classifier cache
//   relationships/           constraint store (manifest.json + sets)
//   relationships/classifier.json
//   relationships/embeddings.txt
// Components are immutable once published, so states share them freely.
struct EngineState {
  std::shared_ptr<const Dataset> dataset;
  std::shared_ptr<const InvertedIndex> index;
  std::map<std::string, LinearClassifier> classifiers;
  std::shared_ptr<const RelationshipConstraintStore> relationships;
  std::shared_ptr<const RelationshipClassifier> relationship_classifier;
  std::shared_ptr<const EmbeddingTable> embeddings;
};

struct LoadedState {
  EngineState state;
  std::vector<std::string> warnings;  // one per missing component
};

// Throws dimension_mismatch naming both dimensions when the dataset, index
// and classifiers disagree on D.
void ValidateStateDims(const EngineState& state);

// Writes into a sibling temp directory, then swaps it in place of `dir`.
// Other entries already in `dir` are moved across unchanged.
void SaveState(const EngineState& state, const std::filesystem::path& dir);

// Missing components become warnings; present but broken ones throw.
LoadedState LoadState(const std::filesystem::path& dir);

}  // namespace rbir

#endif  // RBIR_STATE_H_
