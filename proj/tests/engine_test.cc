#include "rbir/engine.h"

#include <algorithm>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "rbir/errors.h"
#include "rbir/langrec.h"
#include "rbir/synthetic.h"
#include "engine_oracle.h"
#include "test_util.h"

namespace rbir {
namespace {

using testing::Fixture;
using testing::OracleObject;
using testing::OraclePipeline;
using testing::Row;

// ---- preprocessing --------------------------------------------------------

TEST(PreprocessTest, ExampleAndCategoryPlans) {
  Fixture fx(1, 10);
  fx.classifiers.Add({"person", ClassifierKind::kCategory, std::vector<float>(32, 0.5f), 0, 1, 1});
  fx.classifiers.Add({"red", ClassifierKind::kAttribute, std::vector<float>(32, -1.0f), 0, 1, 1});
  const auto ctx = fx.context();

  ObjectQuery q{ByExample{Row(fx.data.dataset, 3), std::nullopt}, {}};
  auto plan = PreprocessObjectQuery(q, ctx);
  EXPECT_EQ(plan.metric, Metric::kL2);
  EXPECT_EQ(plan.vector, Row(fx.data.dataset, 3));

  q = {ByExample{{}, 5}, {}};
  EXPECT_EQ(PreprocessObjectQuery(q, ctx).vector, Row(fx.data.dataset, 5));

  q = {ByCategory{"person"}, {"red"}};
  plan = PreprocessObjectQuery(q, ctx);
  EXPECT_EQ(plan.metric, Metric::kInnerProduct);
  EXPECT_EQ(plan.vector, std::vector<float>(32, 0.5f));
  ASSERT_EQ(plan.attribute_weights.size(), 1u);

  for (ObjectQuery bad : {ObjectQuery{ByCategory{"unicorn"}, {}},
                          ObjectQuery{ByCategory{"person"}, {"striped"}}}) {
    try {
      PreprocessObjectQuery(bad, ctx);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kNotFound);
      const std::string msg = e.what();
      EXPECT_TRUE(msg.find("unicorn") != std::string::npos ||
                  msg.find("striped") != std::string::npos);
    }
  }
  q = {ByExample{std::vector<float>(7, 0.0f), std::nullopt}, {}};
  EXPECT_THROW(PreprocessObjectQuery(q, ctx), Error);
}

// ---- region search --------------------------------------------------------

TEST(SearchRegionsTest, ZeroDistanceGivesInverseEpsilon) {
  const std::vector<float> v = {0.25f, -1.0f, 0.5f, 2.0f};
  IndexParams p{.dim = 4, .coarse_size = 1, .num_subquantizers = 2, .probe = 1};
  const RegionRef ref{"a", 0, {0, 0, 1, 1}};
  const auto index = InvertedIndex::Build(MatrixView<float>(v, 4), {ref}, p);
  const auto r = SearchRegions({Metric::kL2, v, {}}, index, 10, 1, 1);
  ASSERT_EQ(r.per_image.at("a").size(), 1u);
  EXPECT_DOUBLE_EQ(r.per_image.at("a")[0].score, 1.0 / kRelevanceEpsilon);
}

TEST(SearchRegionsTest, ClassifierSignCase) {
  const std::vector<float> db = {1, 2, -1, -2};
  IndexParams p{.dim = 2, .coarse_size = 1, .num_subquantizers = 1, .probe = 1};
  const auto index = InvertedIndex::Build(MatrixView<float>(db, 2),
                                          {{"pos", 0, {}}, {"neg", 0, {}}}, p);
  const auto r = SearchRegions({Metric::kInnerProduct, {0.2f, 0.4f}, {}}, index, 10, 1, 1);
  const auto merged = Merge({r});
  EXPECT_EQ(merged.front().image_id, "pos");
}

TEST(SearchRegionsTest, AttributeScoresMatchExactRecomputation) {
  Fixture fx(2, 40, 2);
  Rng rng(3);
  const auto F = fx.data.dataset.feature_view();
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<float> w(32), a(32);
    for (float& x : w) x = float(rng.Normal());
    for (float& x : a) x = float(rng.Normal() * rng.Uniform(0, 2));
    const auto cat_only = SearchRegions({Metric::kInnerProduct, w, {}}, fx.index, 10000, 1, 1);
    const auto combined = SearchRegions({Metric::kInnerProduct, w, {a}}, fx.index, 10000, 1, 1);
    // Exact per-image argmax of the category score and of the combined score.
    std::map<std::string, std::pair<double, uint64_t>> cat_best, comb_best;
    for (uint64_t i = 0; i < F.rows(); ++i) {
      const auto& im = fx.data.dataset.regions[i].image_id;
      const double c = Dot(w, F.row(i)), s = c + Dot(a, F.row(i));
      if (!cat_best.count(im) || c > cat_best[im].first) cat_best[im] = {c, i};
      if (!comb_best.count(im) || s > comb_best[im].first) comb_best[im] = {s, i};
    }
    for (const auto& [im, hits] : combined.per_image) {
      EXPECT_EQ(hits[0].region_id, comb_best[im].second);
      EXPECT_NEAR(hits[0].score, comb_best[im].first, 1e-4 * (1 + std::abs(comb_best[im].first)));
      EXPECT_EQ(cat_only.per_image.at(im)[0].region_id, cat_best[im].second);
    }
  }
}

TEST(SearchRegionsTest, AttributeFlipsTopOnlyWhenItsMarginIsLarger) {
  // Two regions in one image; the category prefers region 0 by 1.0.
  const std::vector<float> db = {2, 0, 1, 1};
  IndexParams p{.dim = 2, .coarse_size = 1, .num_subquantizers = 1, .probe = 1};
  const auto index =
      InvertedIndex::Build(MatrixView<float>(db, 2), {{"i", 0, {}}, {"i", 1, {}}}, p);
  const std::vector<float> w = {1, 0};
  for (double attr_margin : {0.5, 0.99, 1.01, 3.0}) {
    // Attribute scores: region 0 -> 0, region 1 -> attr_margin.
    const std::vector<float> a = {0, float(attr_margin)};
    const auto r = SearchRegions({Metric::kInnerProduct, w, {a}}, index, 10, 1, 1);
    EXPECT_EQ(r.per_image.at("i")[0].region_id, attr_margin > 1.0 ? 1u : 0u) << attr_margin;
  }
}

TEST(SearchRegionsTest, KeepsTopTPerImage) {
  Fixture fx(4, 20, 4);
  const auto q = Row(fx.data.dataset, 0);
  const auto r = SearchRegions({Metric::kL2, q, {}}, fx.index, 10000, 1, 3);
  for (const auto& [im, hits] : r.per_image) {
    EXPECT_LE(hits.size(), 3u);
    for (size_t i = 1; i < hits.size(); ++i) EXPECT_GE(hits[i - 1].score, hits[i].score);
  }
  EXPECT_THROW(SearchRegions({Metric::kL2, q, {}}, fx.index, 10, 1, 0), Error);
}

// ---- merge ---------------------------------------------------------------

ObjectResult Result(std::map<std::string, double> best) {
  ObjectResult r;
  uint64_t id = 0;
  for (const auto& [im, s] : best) r.per_image[im] = {{id++, s}};
  return r;
}

TEST(MergeTest, DominanceAndMissingObjects) {
  const auto a = Result({{"A", 10}, {"B", 2}, {"C", 0}});
  const auto b = Result({{"A", 5}, {"B", 5}, {"D", 1}});
  const auto m = Merge({a, b});
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[0].image_id, "A");
  EXPECT_DOUBLE_EQ(m[0].score, 2.0);
  const auto& d = *std::find_if(m.begin(), m.end(), [](auto& x) { return x.image_id == "D"; });
  EXPECT_EQ(d.object_scores[0], 0.0);
  EXPECT_EQ(d.object_scores[1], 0.0);
  EXPECT_THROW(Merge({}), Error);
}

TEST(MergeTest, TiesBrokenByImageId) {
  const auto m = Merge({Result({{"b", 1}, {"a", 1}, {"c", 1}})});
  EXPECT_EQ(m[0].image_id, "a");
  EXPECT_EQ(m[1].image_id, "b");
  EXPECT_EQ(m[2].image_id, "c");
  EXPECT_EQ(m[0].score, 1.0);  // zero range normalizes to 1
}

TEST(MergeTest, DominanceProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ObjectResult> objs;
    for (int l = 0; l < 3; ++l) {
      std::map<std::string, double> best;
      for (int i = 0; i < 12; ++i) best["im" + std::to_string(i)] = std::round(rng.Uniform(0, 4));
      objs.push_back(Result(best));
    }
    const auto m = Merge(objs);
    std::map<std::string, size_t> pos;
    for (size_t i = 0; i < m.size(); ++i) pos[m[i].image_id] = i;
    for (const auto& x : m) {
      for (const auto& y : m) {
        bool ge = true, gt = false;
        for (int l = 0; l < 3; ++l) {
          ge &= x.object_scores[l] >= y.object_scores[l];
          gt |= x.object_scores[l] > y.object_scores[l];
        }
        if (ge && gt) EXPECT_LT(pos[x.image_id], pos[y.image_id]);
      }
    }
  }
}

TEST(MergeTest, SingleObjectMatchesRegionRanking) {
  Fixture fx(6, 30, 3);
  const auto q = Row(fx.data.dataset, 17);
  const auto r = SearchRegions({Metric::kL2, q, {}}, fx.index, 10000, 1, 1);
  const auto m = Merge({r});
  const auto exact = ExactSearch(fx.data.dataset.feature_view(), q, Metric::kL2, 10000);
  std::vector<std::string> collapsed;
  std::set<std::string> seen;
  for (const auto& h : exact) {
    const auto& im = fx.data.dataset.regions[h.region_id].image_id;
    if (seen.insert(im).second) collapsed.push_back(im);
  }
  ASSERT_EQ(m.size(), collapsed.size());
  for (size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m[i].image_id, collapsed[i]) << i;
}

// ---- full pipeline vs oracle -------------------------------------------------

TEST(RunQueryTest, MatchesBruteForcePipeline) {
  Fixture fx(7, 50, 3);
  ASSERT_LE(fx.data.dataset.regions.size(), 256u);
  Rng rng(8);
  const auto& ds = fx.data.dataset;
  for (int trial = 0; trial < 20; ++trial) {
    const size_t n_o = 1 + trial % 3;
    Query q;
    std::vector<OracleObject> oracle;
    for (size_t l = 0; l < n_o; ++l) {
      if (rng.Index(2) == 0) {
        auto v = Row(ds, rng.Index(ds.regions.size()));
        for (float& x : v) x += 0.05f * float(rng.Normal());
        q.objects.push_back({ByExample{v, std::nullopt}, {}});
        oracle.push_back({v, false});
      } else {
        const std::string name = "c" + std::to_string(trial) + "_" + std::to_string(l);
        std::vector<float> w(32);
        for (float& x : w) x = float(rng.Normal());
        fx.classifiers.Add({name, ClassifierKind::kCategory, w, 0, 1, 1});
        q.objects.push_back({ByCategory{name}, {}});
        oracle.push_back({w, true});
      }
    }
    q.constraints.arity = int(n_o);
    q.top_k = 10;
    q.shortlist_r = trial % 2 == 0 ? 1000 : 60;
    const auto got = RunQuery(q, fx.context());
    const auto want = OraclePipeline(ds, oracle, q.shortlist_r);
    ASSERT_EQ(got.total, want.size());
    for (size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(got.results[i].image_id, want[i].image_id) << trial << " rank " << i;
      EXPECT_NEAR(got.results[i].image_score, want[i].score, 1e-6);
      for (size_t l = 0; l < got.results[i].regions.size(); ++l) {
        EXPECT_EQ(got.results[i].regions[l].region_id, want[i].best[l]);
      }
    }
  }
}

TEST(RunQueryTest, DeterministicAndValidated) {
  Fixture fx(9, 20);
  Query q;
  q.objects.push_back({ByExample{Row(fx.data.dataset, 4), std::nullopt}, {}});
  q.constraints.arity = 1;
  const auto a = ResponseToJson(RunQuery(q, fx.context())).dump();
  const auto b = ResponseToJson(RunQuery(q, fx.context())).dump();
  EXPECT_EQ(a, b);

  q.constraints.arity = 2;
  EXPECT_THROW(RunQuery(q, fx.context()), Error);
  q.constraints.arity = 1;
  q.t = 0;
  EXPECT_THROW(RunQuery(q, fx.context()), Error);
  q.t = 1;
  q.objects.assign(4, q.objects[0]);
  q.constraints.arity = 4;
  EXPECT_THROW(RunQuery(q, fx.context()), Error);
}

TEST(RunQueryTest, PaginationAndTopKNearest) {
  Fixture fx(10, 30);
  Query q;
  const auto v = Row(fx.data.dataset, 11);
  q.objects.push_back({ByExample{v, std::nullopt}, {}});
  q.constraints.arity = 1;
  q.top_k = 5;
  const auto first = RunQuery(q, fx.context());
  EXPECT_EQ(first.results[0].image_id, fx.data.dataset.regions[11].image_id);
  q.offset = 5;
  const auto second = RunQuery(q, fx.context());
  EXPECT_EQ(second.total, first.total);
  q.offset = 0;
  q.top_k = 10;
  const auto both = RunQuery(q, fx.context());
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(both.results[i].image_id, first.results[i].image_id);
    EXPECT_EQ(both.results[5 + i].image_id, second.results[i].image_id);
  }
}

TEST(RunQueryTest, ClassifierScaleInvariance) {
  Fixture fx(11, 40);
  Rng rng(12);
  std::vector<float> w(32), w2;
  for (float& x : w) x = float(rng.Normal());
  for (float x : w) w2.push_back(4.0f * x);
  fx.classifiers.Add({"a", ClassifierKind::kCategory, w, 0, 1, 1});
  fx.classifiers.Add({"a4", ClassifierKind::kCategory, w2, 0, 1, 1});
  Query q;
  q.objects = {{ByCategory{"a"}, {}}, {ByExample{Row(fx.data.dataset, 2), std::nullopt}, {}}};
  q.constraints.arity = 2;
  q.top_k = 40;
  const auto r1 = RunQuery(q, fx.context());
  q.objects[0] = {ByCategory{"a4"}, {}};
  const auto r2 = RunQuery(q, fx.context());
  ASSERT_EQ(r1.results.size(), r2.results.size());
  for (size_t i = 0; i < r1.results.size(); ++i) {
    EXPECT_EQ(r1.results[i].image_id, r2.results[i].image_id);
  }
}

// ---- filtering and refinement ------------------------------------------------

ConstraintSet RandomConstraints(Rng& rng, int arity, const ShortlistPayload& payload) {
  ConstraintSet set;
  set.arity = arity;
  const size_t k = rng.Index(4);
  for (size_t i = 0; i < k; ++i) {
    const int f = int(rng.Index(Catalog(arity).size()));
    // Threshold drawn from observed values so the constraint bites.
    double theta = 0.0;
    for (const auto& im : payload.images) {
      if (!im.combinations.empty()) {
        theta = im.combinations[rng.Index(im.combinations.size())].features[f];
        if (rng.Index(3) == 0) break;
      }
    }
    set.constraints.push_back({f, theta, rng.Index(2) ? 1 : -1});
  }
  return set;
}

TEST(FilterTest, EmptySetKeepsMergeOrder) {
  Fixture fx(13, 30);
  Query q;
  q.objects = {{ByExample{Row(fx.data.dataset, 0), std::nullopt}, {}},
               {ByExample{Row(fx.data.dataset, 1), std::nullopt}, {}}};
  q.constraints.arity = 2;
  q.top_k = 1000;
  const auto ctx = fx.context();
  const auto r = RunQuery(q, ctx);
  ASSERT_EQ(r.results.size(), r.shortlist.images.size());
  for (size_t i = 0; i < r.results.size(); ++i) {
    EXPECT_TRUE(r.results[i].passes);
    EXPECT_EQ(r.results[i].image_id, r.shortlist.images[i].image_id);
  }
}

TEST(FilterTest, RefineParityAndMonotonicity) {
  Fixture fx(14, 50, 3);
  Rng rng(15);
  const auto ctx = fx.context();
  for (int trial = 0; trial < 30; ++trial) {
    const size_t n_o = 1 + trial % 3;
    Query q;
    for (size_t l = 0; l < n_o; ++l) {
      q.objects.push_back(
          {ByExample{Row(fx.data.dataset, rng.Index(fx.data.dataset.regions.size())), std::nullopt},
           {}});
    }
    q.t = 1 + trial % 2;
    q.top_k = 1000;
    q.include_failing = trial % 4 == 0;
    q.constraints.arity = int(n_o);
    const auto base = RunQuery(q, ctx);
    q.constraints = RandomConstraints(rng, int(n_o), base.shortlist);
    const auto server = RunQuery(q, ctx);
    // Refinement runs on the payload from the unconstrained search, after a
    // JSON round trip as a client would see it.
    const auto payload = ShortlistFromJson(ShortlistToJson(base.shortlist));
    const auto client = RefineShortlist(payload, q.constraints, q.include_failing);
    ASSERT_EQ(client.size(), server.results.size()) << trial;
    for (size_t i = 0; i < client.size(); ++i) {
      EXPECT_EQ(client[i].image_id, server.results[i].image_id);
      EXPECT_EQ(client[i].passes, server.results[i].passes);
    }
    // Adding a constraint never grows the passing set.
    auto tighter = q.constraints;
    ConstraintSet extra;
    while (extra.empty()) extra = RandomConstraints(rng, int(n_o), base.shortlist);
    tighter.constraints.push_back(extra.constraints[0]);
    std::set<std::string> loose, tight;
    for (const auto& r : RefineShortlist(payload, q.constraints, false)) loose.insert(r.image_id);
    for (const auto& r : RefineShortlist(payload, tighter, false)) tight.insert(r.image_id);
    EXPECT_TRUE(std::includes(loose.begin(), loose.end(), tight.begin(), tight.end()));
  }
}

TEST(FilterTest, TOneTestsOnlyTheArgmaxLayout) {
  Fixture fx(16, 30, 3);
  Query q;
  q.objects = {{ByExample{Row(fx.data.dataset, 0), std::nullopt}, {}},
               {ByExample{Row(fx.data.dataset, 1), std::nullopt}, {}}};
  q.constraints.arity = 2;
  q.top_k = 1000;
  const auto r = RunQuery(q, fx.context());
  for (const auto& im : r.shortlist.images) EXPECT_LE(im.combinations.size(), 1u);
  q.t = 2;
  const auto r2 = RunQuery(q, fx.context());
  size_t multi = 0;
  for (const auto& im : r2.shortlist.images) {
    EXPECT_LE(im.combinations.size(), 4u);
    multi += im.combinations.size() > 1;
    for (size_t c = 1; c < im.combinations.size(); ++c) {
      EXPECT_GE(im.combinations[c - 1].combination.score, im.combinations[c].combination.score);
    }
  }
  EXPECT_GT(multi, 0u);
}

TEST(FilterTest, IncludeFailingAppendsInMergeOrder) {
  Fixture fx(17, 30);
  Query q;
  q.objects = {{ByExample{Row(fx.data.dataset, 0), std::nullopt}, {}},
               {ByExample{Row(fx.data.dataset, 1), std::nullopt}, {}}};
  q.constraints.arity = 2;
  q.constraints.constraints = {{Catalog(2).IndexOf("O1.cx-O2.cx"), 0.0, -1}};
  q.top_k = 1000;
  q.include_failing = true;
  const auto r = RunQuery(q, fx.context());
  bool seen_fail = false;
  for (const auto& x : r.results) {
    if (!x.passes) seen_fail = true;
    if (seen_fail) EXPECT_FALSE(x.passes);
    if (x.passes && x.regions.size() == 2) {
      EXPECT_LE(x.regions[0].ref.box.cx(), x.regions[1].ref.box.cx());
    }
  }
}

TEST(FilterTest, LeftOfScenesHavePrecisionAtTen) {
  auto spec = DefaultSyntheticSpec(18, 60, 32);
  spec.scenes = {{SpatialPredicate::kLeftOf, "person", "horse"},
                 {SpatialPredicate::kRightOf, "person", "horse"},
                 {SpatialPredicate::kAbove, "person", "horse"}};
  const auto data = GenerateSynthetic(spec);
  std::unordered_map<std::string, ImageMeta> images;
  for (const auto& im : data.dataset.images) images[im.image_id] = im;
  IndexParams p{.dim = 32, .coarse_size = 8, .num_subquantizers = 8, .probe = 8, .seed = 1};
  const auto index = InvertedIndex::Build(data.dataset.feature_view(), data.dataset.regions, p);
  InMemoryClassifiers classifiers;
  for (const auto& c : data.categories) {
    classifiers.Add({c.name, ClassifierKind::kCategory, c.prototype, 0, 1, 1});
  }
  const SearchContext ctx{&index, &images, &classifiers, data.dataset.feature_view()};

  TripleSpec ts;
  ts.seed = 19;
  ts.per_predicate = {{"left_of", 200}, {"right_of", 200}, {"above", 200}};
  const auto set = LearnRelationshipConstraints(GenerateRelationshipTriples(ts), "left_of", {});

  Query q;
  q.objects = {{ByCategory{"person"}, {}}, {ByCategory{"horse"}, {}}};
  q.constraints = set;
  q.top_k = 10;
  const auto r = RunQuery(q, ctx);
  ASSERT_EQ(r.results.size(), 10u);
  std::map<std::string, std::string> truth;
  for (const auto& s : data.scenes) truth[s.image_id] = s.predicate;
  size_t hits = 0;
  for (const auto& x : r.results) hits += truth[x.image_id] == "left_of";
  EXPECT_GE(hits, 9u);
}

// ---- canvas --------------------------------------------------------------

TEST(CanvasTest, EightConstraintsPerBox) {
  const auto set = CanvasToConstraints({{0, {0.2, 0.1, 0.5, 0.6}}});
  EXPECT_EQ(set.arity, 1);
  EXPECT_EQ(set.provenance, Provenance::kCanvas);
  ASSERT_EQ(set.size(), 8u);
  const int left = Catalog(1).IndexOf("O1.left/I.width");
  bool lo = false, hi = false;
  for (const auto& c : set.constraints) {
    if (c.feature != left) continue;
    if (c.sign == 1) lo = std::abs(c.threshold - 0.18) < 1e-12;
    if (c.sign == -1) hi = std::abs(c.threshold - 0.22) < 1e-12;
  }
  EXPECT_TRUE(lo);
  EXPECT_TRUE(hi);
}

TEST(CanvasTest, ZeroEdgeAndThreeBoxes) {
  auto set = CanvasToConstraints({{0, {0.0, 0.0, 0.5, 0.5}}});
  const int left = Catalog(1).IndexOf("O1.left/I.width");
  for (const auto& c : set.constraints) {
    if (c.feature == left) EXPECT_EQ(c.threshold, 0.0);
  }
  set = CanvasToConstraints(
      {{0, {0.1, 0.1, 0.2, 0.2}}, {2, {0.5, 0.5, 0.9, 0.9}}, {1, {0.3, 0.3, 0.4, 0.4}}});
  EXPECT_EQ(set.arity, 3);
  EXPECT_EQ(set.size(), 24u);
  EXPECT_NO_THROW(ValidateConstraintSet(set, 24));
  EXPECT_THROW(CanvasToConstraints({{0, {0, 0, 1, 1}}, {0, {0, 0, 1, 1}}}), Error);
  EXPECT_THROW(CanvasToConstraints({}), Error);
}

TEST(CanvasTest, LayoutMatchingTheCanvasPasses) {
  Rng rng(20);
  for (int trial = 0; trial < 50; ++trial) {
    const double W = rng.Uniform(100, 1000), H = rng.Uniform(100, 1000);
    std::vector<CanvasBox> canvas;
    std::vector<Box> boxes;
    for (int l = 0; l < 2; ++l) {
      const double x0 = rng.Uniform(0, 0.5), y0 = rng.Uniform(0, 0.5);
      const Box frac{x0, y0, x0 + rng.Uniform(0.05, 0.5), y0 + rng.Uniform(0.05, 0.5)};
      canvas.push_back({l, frac});
      boxes.push_back({frac.left * W, frac.top * H, frac.right * W, frac.bottom * H});
    }
    const auto set = CanvasToConstraints(canvas);
    EXPECT_TRUE(SatisfiesAll(set, ComputePositionFeatures({"i", W, H}, boxes)));
    boxes[0].left += 0.2 * W + 1;
    boxes[0].right += 0.2 * W + 1;
    EXPECT_FALSE(SatisfiesAll(set, ComputePositionFeatures({"i", W, H}, boxes)));
  }
}

TEST(CanvasTest, JsonForms) {
  const auto a = CanvasBoxesFromJson(nlohmann::json::parse(R"([{"box":[0.1,0.2,0.3,0.4]}])"));
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].object, 0);
  const auto b = CanvasBoxesFromJson(
      nlohmann::json::parse(R"({"boxes":[{"object":1,"box":[0.1,0.2,0.3,0.4]}]})"));
  EXPECT_EQ(b[0].object, 1);
  EXPECT_EQ(b[0].box, (Box{0.1, 0.2, 0.3, 0.4}));
  EXPECT_THROW(CanvasBoxesFromJson(nlohmann::json::parse(R"({"boxes":[{"box":[1,2]}]})")), Error);
}

// ---- JSON ---------------------------------------------------------------

TEST(QueryJsonTest, ParsesAllObjectForms) {
  const auto q = QueryFromJson(nlohmann::json::parse(R"({
    "objects": [
      {"by_example": [1, 2, 3]},
      {"by_example": {"region_id": 7}},
      {"by_category": "person", "attributes": ["running"]}
    ],
    "constraints": {"arity": 3, "constraints": []},
    "top_k": 5, "t": 2, "include_failing": true
  })"));
  ASSERT_EQ(q.objects.size(), 3u);
  EXPECT_EQ(std::get<ByExample>(q.objects[0].target).vector, (std::vector<float>{1, 2, 3}));
  EXPECT_EQ(std::get<ByExample>(q.objects[1].target).region_id, 7u);
  EXPECT_EQ(std::get<ByCategory>(q.objects[2].target).name, "person");
  EXPECT_EQ(q.objects[2].attributes, std::vector<std::string>{"running"});
  EXPECT_EQ(q.top_k, 5u);
  EXPECT_EQ(q.t, 2u);
  EXPECT_TRUE(q.include_failing);
  EXPECT_THROW(QueryFromJson(nlohmann::json::parse(R"({"objects": [{}]})")), Error);
  EXPECT_THROW(QueryFromJson(nlohmann::json::parse(R"({"nothing": 1})")), Error);
}

}  // namespace
}  // namespace rbir
