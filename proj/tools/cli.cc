#include "cli.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rbir/classifier.h"
#include "rbir/errors.h"
#include "rbir/geometry.h"
#include "rbir/service.h"
#include "rbir/synthetic.h"

namespace rbir {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json ReadJsonFile(const std::string& path) {
  try {
    return json::parse(ReadFile(path));
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidRequest, path + ": malformed JSON: " + e.what());
  }
}

void Emit(const json& value, const std::string& out_path, std::ostream& out) {
  const std::string text = value.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    WriteFileAtomically(out_path, text);
  }
}

ServiceConfig ConfigFor(const std::string& state_dir, uint64_t seed) {
  ServiceConfig config;
  config.state_dir = state_dir;
  config.seed = seed;
  return config;
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Region-based image retrieval with spatial constraints"};
  app.require_subcommand(1);

  std::string state_dir = "rbir-state";
  std::string out_path;
  uint64_t seed = 0;
  auto add_state = [&](CLI::App* cmd) {
    cmd->add_option("--state", state_dir, "State directory")->capture_default_str();
  };
  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
  };
  auto add_out = [&](CLI::App* cmd) {
    cmd->add_option("--out", out_path, "Write JSON here instead of stdout");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_dir;
  size_t synth_images = 50, synth_distractors = 2;
  uint32_t synth_dim = 32;
  double synth_sigma = 0.15;
  synth->add_option("--dir", synth_dir, "Output directory")->required();
  synth->add_option("--images", synth_images)->capture_default_str();
  synth->add_option("--dim", synth_dim)->capture_default_str();
  synth->add_option("--distractors", synth_distractors)->capture_default_str();
  synth->add_option("--sigma", synth_sigma)->capture_default_str();
  add_seed(synth);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Stage a dataset from its manifest");
  std::string manifest;
  ingest->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  add_state(ingest);

  // build-index
  auto* build = app.add_subcommand("build-index", "Build the region index");
  std::string dataset_id;
  uint32_t k_prime = 256, subquantizers = 16, probe = 64;
  build->add_option("--dataset-id", dataset_id);
  build->add_option("--k-prime", k_prime)->capture_default_str();
  build->add_option("--m", subquantizers, "Sub-quantizers")->capture_default_str();
  build->add_option("--k-s", probe, "Lists probed per query")->capture_default_str();
  add_state(build);
  add_seed(build);

  // train-classifier
  auto* train = app.add_subcommand("train-classifier", "Train a linear SVM");
  std::string clf_name, clf_kind = "category", request_file;
  std::vector<uint64_t> positive_ids, negative_ids;
  double lambda = 1e-3;
  int epochs = SvmParams{}.epochs;
  train->add_option("--name", clf_name)->required();
  train->add_option("--kind", clf_kind)
      ->check(CLI::IsMember({"category", "attribute"}))
      ->capture_default_str();
  train->add_option("--positive-ids", positive_ids)->delimiter(',');
  train->add_option("--negative-ids", negative_ids)->delimiter(',');
  train->add_option("--request", request_file,
                    "JSON with positive_/negative_ region_ids or vectors")
      ->check(CLI::ExistingFile);
  train->add_option("--lambda", lambda)->capture_default_str();
  train->add_option("--epochs", epochs)->capture_default_str();
  add_state(train);
  add_seed(train);

  // train-relationships
  auto* train_rel = app.add_subcommand("train-relationships",
                                       "Train the predicate classifier");
  std::string triples_path, embeddings_path;
  int rel_epochs = 500;
  double learning_rate = 1.0;
  train_rel->add_option("--triples", triples_path)->required()->check(CLI::ExistingFile);
  train_rel->add_option("--embeddings", embeddings_path)
      ->required()
      ->check(CLI::ExistingFile);
  train_rel->add_option("--epochs", rel_epochs)->capture_default_str();
  train_rel->add_option("--lr", learning_rate)->capture_default_str();
  add_state(train_rel);
  add_seed(train_rel);

  // learn-rel-constraints
  auto* learn_rel = app.add_subcommand("learn-rel-constraints",
                                       "Learn per-predicate constraint sets");
  int stages = 3;
  double min_recall = 0.96;
  size_t min_samples = kMinRelationshipSamples;
  learn_rel->add_option("--triples", triples_path)->required()->check(CLI::ExistingFile);
  learn_rel->add_option("--n-c", stages)->capture_default_str();
  learn_rel->add_option("--r-l", min_recall)->capture_default_str();
  learn_rel->add_option("--min-samples", min_samples)->capture_default_str();
  add_state(learn_rel);

  // search
  auto* search = app.add_subcommand("search", "Run a query from a JSON file");
  std::string query_path;
  search->add_option("--query", query_path)->required()->check(CLI::ExistingFile);
  add_state(search);
  add_out(search);

  // recommend
  auto* recommend = app.add_subcommand("recommend", "Constraint recommendations");
  recommend->require_subcommand(1);
  auto* rec_mining = recommend->add_subcommand("mining", "Cluster search results");
  size_t k_clusters = 10;
  rec_mining->add_option("--query", query_path)->required()->check(CLI::ExistingFile);
  rec_mining->add_option("--k", k_clusters)->capture_default_str();
  rec_mining->add_option("--n-c", stages)->capture_default_str();
  add_state(rec_mining);
  add_seed(rec_mining);
  add_out(rec_mining);
  auto* rec_language = recommend->add_subcommand("language", "Predicate suggestions");
  std::string category1, category2;
  size_t top_m = 5;
  rec_language->add_option("--category1", category1)->required();
  rec_language->add_option("--category2", category2)->required();
  rec_language->add_option("--top-m", top_m)->capture_default_str();
  add_state(rec_language);
  add_out(rec_language);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluation protocols");
  eval->require_subcommand(1);
  auto* eval_cluster = eval->add_subcommand("cluster-reproduction",
                                            "Per-cluster P/R/F over n_c");
  std::vector<int> stage_counts = {1, 2, 3, 4, 5};
  size_t trials = 10;
  eval_cluster->add_option("--n-c", stage_counts)->delimiter(',')->capture_default_str();
  eval_cluster->add_option("--trials", trials)->capture_default_str();
  add_seed(eval_cluster);
  add_out(eval_cluster);
  auto* eval_rel = eval->add_subcommand("relationship-detection",
                                        "Recall, selectivity and harmonic score");
  std::string test_triples;
  int rel_stages = 2;
  eval_rel->add_option("--test-triples", test_triples,
                       "Evaluate the stored sets on these triples")
      ->check(CLI::ExistingFile);
  eval_rel->add_option("--n-c", rel_stages)->capture_default_str();
  add_state(eval_rel);
  add_seed(eval_rel);
  add_out(eval_rel);
  auto* eval_ann = eval->add_subcommand("ann-recall", "Index recall against exact search");
  std::string ann_dataset = "synth";
  std::vector<uint32_t> ks = {1, 8, 64, 256};
  size_t ann_n = 10000, ann_queries = 200;
  uint32_t ann_dim = 64, ann_m = 8, ann_k_prime = 256;
  eval_ann->add_option("--dataset", ann_dataset)
      ->check(CLI::IsMember({"synth"}))
      ->capture_default_str();
  eval_ann->add_option("--ks", ks)->delimiter(',')->capture_default_str();
  eval_ann->add_option("--n", ann_n)->capture_default_str();
  eval_ann->add_option("--queries", ann_queries)->capture_default_str();
  eval_ann->add_option("--dim", ann_dim)->capture_default_str();
  eval_ann->add_option("--m", ann_m)->capture_default_str();
  eval_ann->add_option("--k-prime", ann_k_prime)->capture_default_str();
  add_seed(eval_ann);
  add_out(eval_ann);

  // catalog
  auto* catalog = app.add_subcommand("catalog", "Print the position feature catalog");
  int arity = 1;
  catalog->add_option("--arity", arity)->required()->check(CLI::Range(1, 3));

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP JSON service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::vector<std::string> cors;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->check(CLI::Range(1, 65535))->capture_default_str();
  serve->add_option("--cors-origin", cors, "Allowed UI origin (repeatable)");
  add_state(serve);
  add_seed(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  }

  try {
    if (synth->parsed()) {
      SyntheticSpec spec = DefaultSyntheticSpec(seed, synth_images, synth_dim);
      spec.distractors_per_image = synth_distractors;
      for (auto& c : spec.categories) c.sigma = synth_sigma;
      const SyntheticData data = GenerateSynthetic(spec);
      const fs::path m = WriteSynthetic(data, synth_dir);
      Emit({{"manifest", m.string()},
            {"images", data.dataset.images.size()},
            {"regions", data.dataset.regions.size()},
            {"D", data.dataset.dim}},
           "", out);
    } else if (ingest->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      Emit(service.Ingest({{"manifest_path", manifest}}), "", out);
    } else if (build->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      if (build->count("--k-s") == 0) probe = std::min(probe, k_prime);
      json request = {{"params", {{"k_prime", k_prime}, {"M", subquantizers},
                                  {"k_s", probe}, {"seed", seed}}}};
      if (!dataset_id.empty()) request["dataset_id"] = dataset_id;
      Emit(service.BuildIndex(request), "", out);
    } else if (train->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      json request = request_file.empty() ? json::object() : ReadJsonFile(request_file);
      request["name"] = clf_name;
      request["kind"] = clf_kind;
      request["lambda"] = lambda;
      request["epochs"] = epochs;
      request["seed"] = seed;
      if (!positive_ids.empty()) request["positive_region_ids"] = positive_ids;
      if (!negative_ids.empty()) request["negative_region_ids"] = negative_ids;
      Emit(service.TrainClassifier(request), "", out);
    } else if (train_rel->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      Emit(service.TrainRelationships({{"triples", triples_path},
                                       {"embeddings", embeddings_path},
                                       {"epochs", rel_epochs},
                                       {"learning_rate", learning_rate},
                                       {"seed", seed}}),
           "", out);
    } else if (learn_rel->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      Emit(service.LearnRelationshipConstraintStore({{"triples", triples_path},
                                                     {"n_c", stages},
                                                     {"r_l", min_recall},
                                                     {"min_samples", min_samples}}),
           "", out);
    } else if (search->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      Emit(service.Search(ReadJsonFile(query_path)), out_path, out);
    } else if (rec_mining->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      json request = ReadJsonFile(query_path);
      request["K"] = k_clusters;
      request["n_c"] = stages;
      request["seed"] = seed;
      Emit(service.RecommendMining(request), out_path, out);
    } else if (rec_language->parsed()) {
      Service service(ConfigFor(state_dir, seed));
      Emit(service.RecommendLanguage({{"category1", category1},
                                      {"category2", category2},
                                      {"top_m", top_m}}),
           out_path, out);
    } else if (eval_cluster->parsed()) {
      Service service(ConfigFor("", seed));
      Emit(service.Evaluate("cluster-reproduction",
                            {{"seed", seed}, {"trials", trials}, {"n_c", stage_counts}}),
           out_path, out);
    } else if (eval_rel->parsed()) {
      json request = {{"seed", seed}, {"n_c", rel_stages}};
      if (!test_triples.empty()) request["test_triples"] = test_triples;
      Service service(ConfigFor(test_triples.empty() ? "" : state_dir, seed));
      Emit(service.Evaluate("relationship-detection", request), out_path, out);
    } else if (eval_ann->parsed()) {
      Service service(ConfigFor("", seed));
      Emit(service.Evaluate("ann-recall", {{"seed", seed},
                                           {"ks", ks},
                                           {"n", ann_n},
                                           {"queries", ann_queries},
                                           {"D", ann_dim},
                                           {"M", ann_m},
                                           {"k_prime", ann_k_prime}}),
           out_path, out);
    } else if (catalog->parsed()) {
      for (const auto& line : CatalogJson(arity)) out << line.dump() << "\n";
    } else if (serve->parsed()) {
      ServiceConfig config = ConfigFor(state_dir, seed);
      config.host = host;
      config.port = port;
      config.cors_origins = cors;
      Service service(config);
      for (const auto& w : service.warnings()) err << "warning: " << w << "\n";
      err << "listening on " << host << ":" << port << "\n";
      service.Serve();
    }
  } catch (const Error& e) {
    err << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rbir
