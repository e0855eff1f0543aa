#include "rbir/service.h"

#include <algorithm>
#include <set>

#include "httplib.h"
#include "rbir/evaluation.h"
#include "rbir/random.h"

namespace rbir {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char kStagedDatasets[] = "datasets";

// Hash of ids, boxes and features; identical ingests get identical ids.
uint64_t DatasetDigest(const Dataset& d) {
  std::string bytes = EncodeFeatures(d.dim, d.features);
  for (const auto& image : d.images) bytes += image.image_id + '\n';
  for (const auto& r : d.regions) {
    bytes.append(reinterpret_cast<const char*>(&r.box), sizeof(Box));
  }
  return Fnv1a64(bytes);
}

template <typename T>
T Field(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  return j.at(key).get<T>();
}

const json& Required(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) {
    Fail(ErrorCode::kInvalidRequest, std::string("missing field '") + key + "'");
  }
  return j.at(key);
}

json ParamsJson(const IndexParams& p) {
  return {{"D", p.dim},
          {"k_prime", p.coarse_size},
          {"M", p.num_subquantizers},
          {"nbits", p.nbits},
          {"k_s", p.probe}};
}

std::vector<float> FeatureRow(const Snapshot& snap, uint64_t region_id) {
  if (snap.state.dataset) {
    const auto view = snap.state.dataset->feature_view();
    if (region_id >= view.rows()) {
      Fail(ErrorCode::kNotFound, "region " + std::to_string(region_id) + " not found");
    }
    const auto row = view.row(region_id);
    return {row.begin(), row.end()};
  }
  if (!snap.state.index) Fail(ErrorCode::kNotFound, "no dataset or index loaded");
  const auto rec = snap.state.index->Reconstruct(region_id);
  return {rec.begin(), rec.end()};
}

// Vectors from a list of region ids or explicit vectors.
std::vector<float> CollectRows(const Snapshot& snap, const json& request,
                               const std::string& prefix, uint32_t dim,
                               std::vector<uint64_t>* ids_out) {
  std::vector<float> rows;
  const std::string ids_key = prefix + "_region_ids";
  const std::string vec_key = prefix + "_vectors";
  if (request.contains(ids_key)) {
    for (uint64_t id : request.at(ids_key).get<std::vector<uint64_t>>()) {
      const auto row = FeatureRow(snap, id);
      rows.insert(rows.end(), row.begin(), row.end());
      if (ids_out) ids_out->push_back(id);
    }
  }
  if (request.contains(vec_key)) {
    for (const auto& v : request.at(vec_key)) {
      auto row = v.get<std::vector<float>>();
      if (dim != 0 && row.size() != dim) {
        Fail(ErrorCode::kDimensionMismatch,
             "vector has D=" + std::to_string(row.size()) + " but index D=" +
                 std::to_string(dim));
      }
      rows.insert(rows.end(), row.begin(), row.end());
    }
  }
  return rows;
}

std::string QueryValue(const std::string& query, const std::string& key) {
  size_t pos = 0;
  while (pos <= query.size()) {
    const size_t amp = std::min(query.find('&', pos), query.size());
    const std::string pair = query.substr(pos, amp - pos);
    const size_t eq = pair.find('=');
    if (pair.substr(0, eq) == key) {
      return eq == std::string::npos ? "" : pair.substr(eq + 1);
    }
    pos = amp + 1;
  }
  return {};
}

}  // namespace

int HttpStatus(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidRequest:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kDimensionMismatch:
    case ErrorCode::kOov:
    case ErrorCode::kInsufficientData:
      return 422;
    case ErrorCode::kIo:
    case ErrorCode::kInternal:
      return 500;
  }
  return 500;
}

json ErrorJson(const Error& e) {
  json out = {{"code", ErrorCodeName(e.code())}, {"message", e.what()}};
  if (!e.detail().empty()) out["detail"] = e.detail();
  return out;
}

std::string DatasetId(const Dataset& dataset) {
  return "ds-" + DigestHex(DatasetDigest(dataset));
}

json CatalogJson(int arity) {
  json out = json::array();
  for (const auto& d : Catalog(arity).descriptors()) {
    out.push_back({{"index", d.index},
                   {"name", d.name},
                   {"unit", FeatureUnitName(d.unit)}});
  }
  return out;
}

SearchContext Snapshot::context() const {
  SearchContext ctx;
  ctx.index = state.index.get();
  ctx.images = &images;
  ctx.classifiers = &classifiers;
  if (state.dataset && state.dataset->dim != 0) {
    ctx.features = state.dataset->feature_view();
  }
  return ctx;
}

Service::Service(ServiceConfig config) : config_(std::move(config)) {
  EngineState state;
  if (!config_.state_dir.empty() && fs::exists(config_.state_dir)) {
    LoadedState loaded = LoadState(config_.state_dir);
    state = std::move(loaded.state);
    warnings_ = std::move(loaded.warnings);
    const fs::path staged = config_.state_dir / kStagedDatasets;
    if (fs::is_directory(staged)) {
      for (const auto& entry : fs::directory_iterator(staged)) {
        const fs::path manifest = entry.path() / "manifest.json";
        if (!fs::exists(manifest)) continue;
        datasets_[entry.path().filename().string()] =
            std::make_shared<const Dataset>(LoadDataset(manifest));
      }
    }
  }
  if (state.dataset) datasets_.emplace(DatasetId(*state.dataset), state.dataset);
  Publish(std::move(state));
}

std::shared_ptr<const Snapshot> Service::Current() const {
  std::lock_guard lock(snapshot_mutex_);
  return current_;
}

std::shared_ptr<const Snapshot> Service::Pinned(uint64_t id) const {
  std::lock_guard lock(snapshot_mutex_);
  for (const auto& s : recent_) {
    if (s->id == id) return s;
  }
  Fail(ErrorCode::kNotFound, "snapshot " + std::to_string(id) + " is not available");
}

std::shared_ptr<const Snapshot> Service::Publish(EngineState state) {
  auto snap = std::make_shared<Snapshot>();
  snap->state = std::move(state);
  if (snap->state.dataset) {
    for (const auto& image : snap->state.dataset->images) {
      snap->images.emplace(image.image_id, image);
    }
  } else if (snap->state.index) {
    for (const auto& r : snap->state.index->regions()) {
      snap->images.emplace(r.image_id, ImageMeta{r.image_id, 0.0, 0.0});
    }
  }
  for (const auto& [name, c] : snap->state.classifiers) snap->classifiers.Add(c);
  std::lock_guard lock(snapshot_mutex_);
  snap->id = next_snapshot_id_++;
  current_ = snap;
  recent_.push_back(snap);
  while (recent_.size() > kPinnedSnapshots) recent_.pop_front();
  return snap;
}

void Service::Persist(const EngineState& state) {
  if (!config_.state_dir.empty()) SaveState(state, config_.state_dir);
}

json Service::Ingest(const json& request) {
  const fs::path manifest = Required(request, "manifest_path").get<std::string>();
  auto dataset = std::make_shared<const Dataset>(LoadDataset(manifest));
  const std::string id = DatasetId(*dataset);
  std::lock_guard lock(write_mutex_);
  if (!config_.state_dir.empty() && !datasets_.contains(id)) {
    WriteDataset(*dataset, config_.state_dir / kStagedDatasets / id);
  }
  datasets_[id] = dataset;
  return {{"dataset_id", id},
          {"counts",
           {{"images", dataset->images.size()},
            {"regions", dataset->regions.size()}}},
          {"D", dataset->dim}};
}

json Service::BuildIndex(const json& request) {
  std::lock_guard lock(write_mutex_);
  std::shared_ptr<const Dataset> dataset;
  if (request.contains("dataset_id")) {
    const auto id = request.at("dataset_id").get<std::string>();
    auto it = datasets_.find(id);
    if (it == datasets_.end()) Fail(ErrorCode::kNotFound, "dataset '" + id + "' not found");
    dataset = it->second;
  } else if (datasets_.size() == 1) {
    dataset = datasets_.begin()->second;
  } else {
    Fail(ErrorCode::kInvalidRequest,
         datasets_.empty() ? "no dataset has been ingested"
                           : "several datasets are staged; pass dataset_id");
  }
  if (dataset->regions.empty()) {
    Fail(ErrorCode::kInsufficientData, "dataset has no regions to index");
  }
  IndexParams params = config_.index_params;
  params.dim = dataset->dim;
  const json p = Field(request, "params", json::object());
  params.coarse_size = Field(p, "k_prime", params.coarse_size);
  params.num_subquantizers = Field(p, "M", params.num_subquantizers);
  params.probe = Field(p, "k_s", params.probe);
  params.kmeans_iters = Field(p, "kmeans_iters", params.kmeans_iters);
  params.seed = Field(p, "seed", Field(request, "seed", params.seed));
  params.training_sample_cap = Field(p, "training_sample_cap", params.training_sample_cap);
  params.Validate();

  auto index = std::make_shared<const InvertedIndex>(
      InvertedIndex::Build(dataset->feature_view(), dataset->regions, params));
  EngineState state = Current()->state;
  state.dataset = dataset;
  state.index = index;
  ValidateStateDims(state);
  Persist(state);
  const auto snap = Publish(std::move(state));
  json stats = IndexStats();
  return {{"snapshot_id", snap->id}, {"stats", stats}};
}

json Service::IndexStats() const {
  const auto snap = Current();
  const auto& s = snap->state;
  json out = {{"snapshot_id", snap->id},
              {"regions", s.index ? s.index->size() : 0},
              {"images", s.index ? s.index->CountImages() : 0},
              {"D", s.index ? s.index->dim() : (s.dataset ? s.dataset->dim : 0)},
              {"classifiers", s.classifiers.size()}};
  out["params"] = s.index ? ParamsJson(s.index->params()) : json(nullptr);
  return out;
}

json Service::TrainClassifier(const json& request) {
  std::lock_guard lock(write_mutex_);
  const auto snap = Current();
  const std::string name = Required(request, "name").get<std::string>();
  SanitizeName(name);
  const ClassifierKind kind =
      ParseClassifierKind(Field<std::string>(request, "kind", "category"));
  const uint32_t dim = snap->state.index ? snap->state.index->dim()
                       : snap->state.dataset ? snap->state.dataset->dim
                                              : 0;
  std::vector<uint64_t> positive_ids;
  const auto positives = CollectRows(*snap, request, "positive", dim, &positive_ids);
  std::vector<float> negatives = CollectRows(*snap, request, "negative", dim, nullptr);
  size_t row_dim = dim;
  if (row_dim == 0) {
    if (!request.contains("positive_vectors") || request.at("positive_vectors").empty()) {
      Fail(ErrorCode::kInvalidRequest, "no positives given");
    }
    row_dim = request.at("positive_vectors")[0].size();
  }
  if (positives.empty()) Fail(ErrorCode::kInsufficientData, "no positives given");
  const uint64_t seed = Field(request, "seed", config_.seed);
  if (negatives.empty()) {
    // Seeded random sample of regions that are not positives.
    if (!snap->state.dataset) {
      Fail(ErrorCode::kInsufficientData, "no negatives given and no dataset to sample");
    }
    const size_t total = snap->state.dataset->regions.size();
    const std::set<uint64_t> exclude(positive_ids.begin(), positive_ids.end());
    std::vector<uint64_t> pool;
    for (uint64_t id = 0; id < total; ++id) {
      if (!exclude.contains(id)) pool.push_back(id);
    }
    Rng rng(seed ^ 0x6e656761746976ULL);
    rng.Shuffle(pool);
    const size_t positives_count = positives.size() / row_dim;
    const size_t want = Field<size_t>(request, "num_negatives",
                                      std::max<size_t>(100, 10 * positives_count));
    pool.resize(std::min(pool.size(), want));
    std::sort(pool.begin(), pool.end());
    for (uint64_t id : pool) {
      const auto row = FeatureRow(*snap, id);
      negatives.insert(negatives.end(), row.begin(), row.end());
    }
  }
  if (negatives.empty()) Fail(ErrorCode::kInsufficientData, "no negatives available");
  SvmParams svm;
  svm.lambda = Field(request, "lambda", svm.lambda);
  svm.epochs = Field(request, "epochs", svm.epochs);
  svm.seed = seed;
  LinearClassifier c = TrainSvm(MatrixView<float>(positives, row_dim),
                                MatrixView<float>(negatives, row_dim), svm, name, kind);
  EngineState state = snap->state;
  state.classifiers[name] = c;
  ValidateStateDims(state);
  Persist(state);
  const auto published = Publish(std::move(state));
  return {{"name", name},
          {"kind", ClassifierKindName(kind)},
          {"D", c.dim()},
          {"counts", {{"positives", c.num_positives}, {"negatives", c.num_negatives}}},
          {"snapshot_id", published->id}};
}

json Service::ListClassifiers() const {
  json out = json::array();
  for (const auto& [name, c] : Current()->state.classifiers) out.push_back(name);
  return out;
}

json Service::Search(const json& request) const {
  const auto snap = request.contains("snapshot_id")
                        ? Pinned(request.at("snapshot_id").get<uint64_t>())
                        : Current();
  if (!snap->state.index) Fail(ErrorCode::kNotFound, "no index has been built");
  Query query = QueryFromJson(request);
  if (!request.contains("shortlist_r")) query.shortlist_r = config_.shortlist_r;
  if (!request.contains("top_k")) query.top_k = config_.page_size;
  json out = ResponseToJson(RunQuery(query, snap->context()));
  out["snapshot_id"] = snap->id;
  return out;
}

json Service::RecommendMining(const json& request) const {
  const auto snap = request.contains("snapshot_id")
                        ? Pinned(request.at("snapshot_id").get<uint64_t>())
                        : Current();
  if (!snap->state.index) Fail(ErrorCode::kNotFound, "no index has been built");
  json query_json = {{"objects", Required(request, "objects")}};
  Query query = QueryFromJson(query_json);
  query.constraints = ConstraintSet{static_cast<int>(query.objects.size()),
                                    Provenance::kManual, {}};
  query.top_k = Field(request, "N", config_.mining_results);
  query.shortlist_r = Field(request, "shortlist_r", config_.shortlist_r);
  query.t = Field<size_t>(request, "t", 1);
  query.shortlist_cap = 0;
  const QueryResponse response = RunQuery(query, snap->context());

  std::vector<LayoutSample> samples;
  for (const auto& r : response.results) {
    LayoutSample s;
    s.image_id = r.image_id;
    for (const auto& c : r.regions) s.boxes.push_back(c.ref.box);
    s.features = r.position_features;
    samples.push_back(std::move(s));
  }
  MiningParams params = config_.mining;
  params.num_clusters = Field(request, "K", params.num_clusters);
  params.min_cluster = Field(request, "min_cluster", params.min_cluster);
  params.cascade.num_stages = Field(request, "n_c", params.cascade.num_stages);
  params.cascade.min_recall = Field(request, "r_l", params.cascade.min_recall);
  params.seed = Field(request, "seed", config_.seed);
  if (samples.empty()) return json::array();
  const MiningOutcome outcome = MineRecommendations(samples, params);
  json out = json::array();
  for (const auto& rec : outcome.recommendations) {
    out.push_back(RecommendationToJson(rec));
  }
  return out;
}

json Service::RecommendLanguage(const json& request) const {
  const auto snap = Current();
  const auto& s = snap->state;
  if (!s.embeddings || !s.relationship_classifier) {
    Fail(ErrorCode::kNotFound, "no relationship model has been trained");
  }
  const RelationshipConstraintStore empty;
  const auto result = rbir::RecommendLanguage(
      Required(request, "category1").get<std::string>(),
      Required(request, "category2").get<std::string>(),
      Field<size_t>(request, "top_m", 5), *s.embeddings, *s.relationship_classifier,
      s.relationships ? *s.relationships : empty,
      Field(request, "min_likelihood", 0.0));
  json out = json::array();
  for (const auto& r : result.recommendations) {
    out.push_back({{"predicate", r.predicate},
                   {"likelihood", r.likelihood},
                   {"constraints", ConstraintSetToJson(r.constraints)}});
  }
  return out;
}

json Service::Evaluate(const std::string& protocol, const json& request) const {
  const uint64_t seed = Field(request, "seed", config_.seed);
  if (protocol == "cluster-reproduction") {
    ClusterReproductionParams p;
    p.seed = seed;
    p.trials = Field(request, "trials", p.trials);
    p.per_cluster = Field(request, "per_cluster", p.per_cluster);
    p.stage_counts = Field(request, "n_c", p.stage_counts);
    p.min_recall = Field(request, "r_l", p.min_recall);
    return ClusterReproductionToJson(RunClusterReproduction(p));
  }
  if (protocol == "ann-recall") {
    AnnRecallParams p;
    p.seed = seed;
    p.num_vectors = Field(request, "n", p.num_vectors);
    p.num_queries = Field(request, "queries", p.num_queries);
    p.dim = Field(request, "D", p.dim);
    p.num_subquantizers = Field(request, "M", p.num_subquantizers);
    p.coarse_size = Field(request, "k_prime", p.coarse_size);
    p.probes = Field(request, "ks", p.probes);
    return AnnRecallToJson(RunAnnRecall(p));
  }
  if (protocol == "relationship-detection") {
    if (request.contains("test_triples")) {
      const auto snap = Current();
      if (!snap->state.relationships) {
        Fail(ErrorCode::kNotFound, "no relationship constraint store loaded");
      }
      const TripleDataset test =
          LoadTriples(request.at("test_triples").get<std::string>());
      const auto spatial = Field(request, "spatial_predicates",
                                 DefaultSpatialPredicates());
      return ReportToJson(EvalRelationshipDetection(
          *snap->state.relationships, test, spatial,
          Field(request, "min_test", kMinRelationshipSamples)));
    }
    RelationshipBenchmarkParams p;
    p.seed = seed;
    p.stages = Field(request, "n_c", p.stages);
    p.train_per_predicate = Field(request, "per_predicate", p.train_per_predicate);
    p.train_negatives = Field(request, "negatives", p.train_negatives);
    return RelationshipBenchmarkToJson(RunRelationshipBenchmark(p));
  }
  Fail(ErrorCode::kNotFound, "unknown evaluation protocol '" + protocol + "'");
}

json Service::TrainRelationships(const json& request) {
  std::lock_guard lock(write_mutex_);
  const TripleDataset triples = LoadTriples(Required(request, "triples").get<std::string>());
  auto table = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::Load(Required(request, "embeddings").get<std::string>()));
  RelationshipTrainParams params;
  params.epochs = Field(request, "epochs", params.epochs);
  params.learning_rate = Field(request, "learning_rate", params.learning_rate);
  params.seed = Field(request, "seed", config_.seed);
  params.vocabulary = Field(request, "vocabulary", params.vocabulary);
  RelationshipTrainResult result = TrainRelationshipClassifier(triples, *table, params);
  EngineState state = Current()->state;
  state.embeddings = table;
  state.relationship_classifier =
      std::make_shared<const RelationshipClassifier>(result.classifier);
  Persist(state);
  const auto snap = Publish(std::move(state));
  return {{"vocabulary", result.classifier.vocabulary},
          {"skipped_oov", result.skipped_oov},
          {"final_loss", result.loss_history.empty() ? 0.0 : result.loss_history.back()},
          {"snapshot_id", snap->id}};
}

json Service::LearnRelationshipConstraintStore(const json& request) {
  std::lock_guard lock(write_mutex_);
  const TripleDataset triples = LoadTriples(Required(request, "triples").get<std::string>());
  CascadeParams cascade = config_.cascade;
  cascade.num_stages = Field(request, "n_c", cascade.num_stages);
  cascade.min_recall = Field(request, "r_l", cascade.min_recall);
  const size_t min_samples = Field(request, "min_samples", kMinRelationshipSamples);
  std::map<std::string, size_t> counts;
  for (const auto& t : triples) ++counts[t.predicate];
  auto store = std::make_shared<RelationshipConstraintStore>();
  json skipped = json::array();
  for (const auto& [predicate, n] : counts) {
    store->vocabulary.push_back(predicate);
    if (n < min_samples || n == triples.size()) {
      skipped.push_back(predicate);
      continue;
    }
    store->sets[predicate] =
        LearnRelationshipConstraints(triples, predicate, cascade, min_samples);
  }
  EngineState state = Current()->state;
  state.relationships = store;
  Persist(state);
  const auto snap = Publish(std::move(state));
  json learned = json::array();
  for (const auto& [predicate, set] : store->sets) learned.push_back(predicate);
  return {{"learned", learned}, {"skipped", skipped}, {"snapshot_id", snap->id}};
}

HttpResponse Service::Handle(const std::string& method, const std::string& target,
                             const std::string& body) {
  const size_t q = target.find('?');
  const std::string path = target.substr(0, q);
  const std::string query = q == std::string::npos ? "" : target.substr(q + 1);
  try {
    json request = json::object();
    if (method == "POST" && body.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        request = json::parse(body);
      } catch (const json::exception& e) {
        Fail(ErrorCode::kInvalidRequest, std::string("malformed JSON body: ") + e.what());
      }
    }
    auto route = [&]() -> json {
      if (method == "GET") {
        if (path == "/index/stats") return IndexStats();
        if (path == "/classifiers") return ListClassifiers();
        if (path == "/catalog") {
          const std::string arity = QueryValue(query, "arity");
          if (arity.empty() || arity.find_first_not_of("0123456789") != std::string::npos) {
            Fail(ErrorCode::kInvalidRequest, "arity must be 1, 2 or 3");
          }
          return CatalogJson(std::stoi(arity.substr(0, 3)));
        }
      } else if (method == "POST") {
        if (path == "/datasets/ingest") return Ingest(request);
        if (path == "/index/build") return BuildIndex(request);
        if (path == "/classifiers/train") return TrainClassifier(request);
        if (path == "/search") return Search(request);
        if (path == "/recommend/mining") return RecommendMining(request);
        if (path == "/recommend/language") return RecommendLanguage(request);
        if (path == "/canvas/constraints") {
          return ConstraintSetToJson(CanvasToConstraints(CanvasBoxesFromJson(request)));
        }
        const std::string eval = "/eval/";
        if (path.starts_with(eval)) return Evaluate(path.substr(eval.size()), request);
      }
      Fail(ErrorCode::kNotFound, "no route for " + method + " " + path);
    };
    return {200, route().dump()};
  } catch (const Error& e) {
    return {HttpStatus(e.code()), ErrorJson(e).dump()};
  } catch (const json::exception& e) {
    return {400, ErrorJson(Error(ErrorCode::kInvalidRequest,
                                 std::string("malformed request: ") + e.what()))
                     .dump()};
  } catch (const std::exception& e) {
    return {500, ErrorJson(Error(ErrorCode::kInternal, e.what())).dump()};
  }
}

void Service::Serve() {
  httplib::Server server;
  auto cors = [this](const httplib::Request& req, httplib::Response& res) {
    const std::string origin = req.get_header_value("Origin");
    if (!origin.empty() &&
        std::find(config_.cors_origins.begin(), config_.cors_origins.end(), origin) !=
            config_.cors_origins.end()) {
      res.set_header("Access-Control-Allow-Origin", origin);
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    }
  };
  auto handler = [this, cors](const httplib::Request& req, httplib::Response& res) {
    std::string target = req.path;
    bool first = true;
    for (const auto& [key, value] : req.params) {
      target += (first ? "?" : "&") + key + "=" + value;
      first = false;
    }
    const HttpResponse out = Handle(req.method, target, req.body);
    res.status = out.status;
    res.set_content(out.body, "application/json");
    cors(req, res);
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  server.Options(".*", [cors](const httplib::Request& req, httplib::Response& res) {
    res.status = 204;
    cors(req, res);
  });
  {
    std::lock_guard lock(server_mutex_);
    server_ = &server;
  }
  const bool ok = server.listen(config_.host, config_.port);
  {
    std::lock_guard lock(server_mutex_);
    server_ = nullptr;
  }
  if (!ok) {
    Fail(ErrorCode::kIo, "cannot listen on " + config_.host + ":" +
                             std::to_string(config_.port));
  }
}

void Service::Stop() {
  std::lock_guard lock(server_mutex_);
  if (server_) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace rbir
