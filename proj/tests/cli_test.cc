#include "cli.h"

#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "rbir/classifier.h"
#include "test_util.h"

namespace rbir {
namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult RunArgs(std::vector<std::string> args) {
  args.insert(args.begin(), "rbir");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

size_t Lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

TEST(CliTest, CatalogPrintsOneLinePerFeature) {
  const auto r = RunArgs({"catalog", "--arity", "2"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(Lines(r.out), 82u);
  EXPECT_EQ(Lines(RunArgs({"catalog", "--arity", "3"}).out), 213u);
  EXPECT_NE(RunArgs({"catalog", "--arity", "4"}).code, 0);
}

TEST(CliTest, MissingQueryFileExitsOne) {
  testing::TempDir dir;
  const auto r = RunArgs({"search", "--query", (dir / "missing.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
}

TEST(CliTest, NoSubcommandFails) { EXPECT_NE(RunArgs({}).code, 0); }

TEST(CliTest, AnnRecallGrowsWithProbes) {
  auto recall10 = [](const std::string& ks) {
    const auto r = RunArgs({"eval", "ann-recall", "--dataset", "synth", "--ks", ks, "--n", "2000", "--queries", "50",
                        "--dim", "32", "--m", "8", "--k-prime", "64"});
    EXPECT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    return j[0]["recall"]["recall@10"].get<double>();
  };
  EXPECT_LE(recall10("8"), recall10("64"));
}

TEST(CliTest, EndToEndThroughStateDirectory) {
  testing::TempDir dir;
  const std::string state = (dir / "state").string();
  auto r = RunArgs({"synth", "--dir", (dir / "data").string(), "--images", "30", "--dim", "32"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string manifest = nlohmann::json::parse(r.out)["manifest"];

  r = RunArgs({"ingest", "--manifest", manifest, "--state", state});
  ASSERT_EQ(r.code, 0) << r.err;
  r = RunArgs({"build-index", "--state", state, "--k-prime", "4", "--m", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["stats"]["images"], 30);

  // Region ids follow the label file order.
  std::string labels = ReadFile(dir / "data" / "labels.jsonl");
  std::istringstream in(labels);
  std::string line;
  size_t region = 0;
  std::string person_ids;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    if (!j.contains("category")) continue;
    if (j["category"] == "person") {
      person_ids += (person_ids.empty() ? "" : ",") + std::to_string(region);
    }
    ++region;
  }
  r = RunArgs({"train-classifier", "--state", state, "--name", "person", "--positive-ids",
           person_ids, "--epochs", "50"});
  ASSERT_EQ(r.code, 0) << r.err;

  WriteFileAtomically(dir / "q.json", R"({"objects":[{"by_category":"person"}],"top_k":3})");
  r = RunArgs({"search", "--state", state, "--query", (dir / "q.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["results"].size(), 3u);

  WriteFileAtomically(dir / "bad.json", R"({"objects":[{"by_category":"zebra"}]})");
  r = RunArgs({"search", "--state", state, "--query", (dir / "bad.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("not_found"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace rbir
