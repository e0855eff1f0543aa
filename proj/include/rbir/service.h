#ifndef RBIR_SERVICE_H_
#define RBIR_SERVICE_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "rbir/constraint.h"
#include "rbir/engine.h"
#include "rbir/ivfadc.h"
#include "rbir/mining.h"
#include "rbir/state.h"

namespace rbir {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path state_dir;  // empty: nothing is persisted
  IndexParams index_params;
  CascadeParams cascade;
  MiningParams mining;
  size_t shortlist_r = 1000;
  size_t page_size = 20;
  size_t mining_results = 500;  // merged results fed to mining
  std::vector<std::string> cors_origins;
  uint64_t seed = 0;
};

// One published, immutable version of the engine state.
struct Snapshot {
  uint64_t id = 0;
  EngineState state;
  std::unordered_map<std::string, ImageMeta> images;
  InMemoryClassifiers classifiers;

  SearchContext context() const;
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

// HTTP status for an error code.
int HttpStatus(ErrorCode code);
nlohmann::json ErrorJson(const Error& e);

// Request handling over snapshots. Reads take the current snapshot (or a
// pinned one) and never block each other; mutations are serialized, build a
// new snapshot and swap it in.
class Service {
 public:
  // Loads the state directory when it exists. Throws when it cannot.
  explicit Service(ServiceConfig config);

  const ServiceConfig& config() const { return config_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::shared_ptr<const Snapshot> Current() const;
  // Not found once the snapshot has been evicted.
  std::shared_ptr<const Snapshot> Pinned(uint64_t id) const;

  // Routes one request; errors become ApiError bodies. `target` may carry a
  // query string.
  HttpResponse Handle(const std::string& method, const std::string& target,
                      const std::string& body);

  // Endpoint implementations; throw Error.
  nlohmann::json Ingest(const nlohmann::json& request);
  nlohmann::json BuildIndex(const nlohmann::json& request);
  nlohmann::json IndexStats() const;
  nlohmann::json TrainClassifier(const nlohmann::json& request);
  nlohmann::json ListClassifiers() const;
  nlohmann::json Search(const nlohmann::json& request) const;
  nlohmann::json RecommendMining(const nlohmann::json& request) const;
  nlohmann::json RecommendLanguage(const nlohmann::json& request) const;
  nlohmann::json Evaluate(const std::string& protocol,
                          const nlohmann::json& request) const;
  // Offline steps without an HTTP route.
  nlohmann::json TrainRelationships(const nlohmann::json& request);
  nlohmann::json LearnRelationshipConstraintStore(const nlohmann::json& request);

  // Blocks serving HTTP until Stop().
  void Serve();
  void Stop();

 private:
  std::shared_ptr<const Snapshot> Publish(EngineState state);
  void Persist(const EngineState& state);

  ServiceConfig config_;
  std::vector<std::string> warnings_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> current_;
  std::deque<std::shared_ptr<const Snapshot>> recent_;  // pin window
  uint64_t next_snapshot_id_ = 1;

  std::mutex write_mutex_;  // ingest/build/train are exclusive
  std::map<std::string, std::shared_ptr<const Dataset>> datasets_;

  std::mutex server_mutex_;
  void* server_ = nullptr;  // httplib::Server while serving
};

inline constexpr size_t kPinnedSnapshots = 8;

// Deterministic id derived from dataset contents.
std::string DatasetId(const Dataset& dataset);

// Canvas, catalog and query helpers shared with the CLI.
nlohmann::json CatalogJson(int arity);

}  // namespace rbir

#endif  // RBIR_SERVICE_H_
