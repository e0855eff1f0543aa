#include "rbir/engine.h"

#include <algorithm>
#include <set>

#include "rbir/errors.h"

namespace rbir {

namespace {

std::vector<float> ClassifierWeights(const SearchContext& context,
                                     const std::string& name,
                                     std::string_view what) {
  if (context.classifiers == nullptr) {
    Fail(ErrorCode::kNotFound, std::string(what) + " classifier '" + name +
                                   "' not found (no classifier cache)");
  }
  auto c = context.classifiers->Find(name);
  if (!c) {
    throw Error(ErrorCode::kNotFound,
                std::string(what) + " classifier '" + name + "' not found",
                name);
  }
  if (c->dim() != context.index->dim()) {
    Fail(ErrorCode::kDimensionMismatch,
         "classifier '" + name + "' has D=" + std::to_string(c->dim()) +
             " but the index has D=" + std::to_string(context.index->dim()));
  }
  return std::move(c->weights);
}

const ImageMeta& LookupImage(const SearchContext& context,
                             const std::string& image_id) {
  auto it = context.images->find(image_id);
  if (it == context.images->end()) {
    Fail(ErrorCode::kNotFound, "image '" + image_id + "' has no metadata");
  }
  return it->second;
}

PositionFeatureVector LayoutFeatures(const Combination& combination,
                                     const SearchContext& context,
                                     const std::string& image_id) {
  std::vector<Box> boxes;
  boxes.reserve(combination.region_ids.size());
  for (uint64_t id : combination.region_ids) {
    boxes.push_back(context.index->region(id).box);
  }
  return ComputePositionFeatures(LookupImage(context, image_id), boxes);
}

bool HitBefore(const RegionHit& a, const RegionHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.region_id < b.region_id;
}

}  // namespace

QueryPlan PreprocessObjectQuery(const ObjectQuery& query,
                                const SearchContext& context) {
  QueryPlan plan;
  const InvertedIndex& index = *context.index;
  if (const auto* example = std::get_if<ByExample>(&query.target)) {
    plan.metric = Metric::kL2;
    if (example->region_id) {
      const uint64_t id = *example->region_id;
      index.region(id);
      if (!context.features.empty()) {
        auto row = context.features.row(id);
        plan.vector.assign(row.begin(), row.end());
      } else {
        const auto rec = index.Reconstruct(id);
        plan.vector.assign(rec.begin(), rec.end());
      }
    } else {
      plan.vector = example->vector;
    }
    if (plan.vector.size() != index.dim()) {
      Fail(ErrorCode::kDimensionMismatch,
           "example vector has dimension " + std::to_string(plan.vector.size()) +
               ", index has " + std::to_string(index.dim()));
    }
  } else {
    const auto& category = std::get<ByCategory>(query.target);
    plan.metric = Metric::kInnerProduct;
    plan.vector = ClassifierWeights(context, category.name, "category");
  }
  for (const auto& name : query.attributes) {
    plan.attribute_weights.push_back(
        ClassifierWeights(context, name, "attribute"));
  }
  return plan;
}

ObjectResult SearchRegions(const QueryPlan& plan, const InvertedIndex& index,
                           size_t shortlist_r, size_t probe, size_t t) {
  if (t == 0) Fail(ErrorCode::kInvalidRequest, "t must be at least 1");
  const auto shortlist = index.Search(plan.vector, plan.metric, probe,
                                      shortlist_r);
  std::vector<RegionHit> hits(shortlist.size());
  for (size_t i = 0; i < shortlist.size(); ++i) {
    hits[i].region_id = shortlist[i].region_id;
    hits[i].score = plan.metric == Metric::kL2
                        ? 1.0 / (shortlist[i].score + kRelevanceEpsilon)
                        : shortlist[i].score;
  }
  if (!plan.attribute_weights.empty() && !hits.empty()) {
    std::vector<uint64_t> ids(hits.size());
    for (size_t i = 0; i < hits.size(); ++i) ids[i] = hits[i].region_id;
    for (const auto& w : plan.attribute_weights) {
      const auto attr = index.AdcScores(w, Metric::kInnerProduct, ids);
      for (size_t i = 0; i < hits.size(); ++i) hits[i].score += attr[i];
    }
  }
  ObjectResult result;
  for (const auto& hit : hits) {
    result.per_image[index.region(hit.region_id).image_id].push_back(hit);
  }
  for (auto& [image, list] : result.per_image) {
    std::sort(list.begin(), list.end(), HitBefore);
    if (list.size() > t) list.resize(t);
  }
  return result;
}

ObjectNormalization NormalizationFor(const ObjectResult& result) {
  ObjectNormalization norm;
  bool first = true;
  for (const auto& [image, hits] : result.per_image) {
    const double s = hits.front().score;
    if (first) {
      norm.min = norm.max = s;
      first = false;
    } else {
      norm.min = std::min(norm.min, s);
      norm.max = std::max(norm.max, s);
    }
  }
  return norm;
}

std::vector<MergedImage> Merge(const std::vector<ObjectResult>& objects) {
  if (objects.empty()) {
    Fail(ErrorCode::kInvalidRequest, "merge needs at least one object");
  }
  std::set<std::string> images;
  for (const auto& o : objects) {
    for (const auto& [image, hits] : o.per_image) images.insert(image);
  }
  std::vector<ObjectNormalization> norms;
  for (const auto& o : objects) norms.push_back(NormalizationFor(o));
  std::vector<MergedImage> merged;
  merged.reserve(images.size());
  for (const auto& image : images) {
    MergedImage m;
    m.image_id = image;
    m.object_scores.assign(objects.size(), 0.0);
    for (size_t l = 0; l < objects.size(); ++l) {
      auto it = objects[l].per_image.find(image);
      if (it == objects[l].per_image.end()) continue;
      m.object_scores[l] = norms[l].Apply(it->second.front().score);
      m.score += m.object_scores[l];
    }
    merged.push_back(std::move(m));
  }
  std::stable_sort(merged.begin(), merged.end(),
                   [](const MergedImage& a, const MergedImage& b) {
                     return a.score > b.score;
                   });
  return merged;
}

std::vector<Combination> EnumerateCombinations(
    const std::string& image_id, const std::vector<ObjectResult>& objects,
    const std::vector<ObjectNormalization>& norms) {
  std::vector<const std::vector<RegionHit>*> lists;
  for (const auto& o : objects) {
    auto it = o.per_image.find(image_id);
    if (it == o.per_image.end() || it->second.empty()) return {};
    lists.push_back(&it->second);
  }
  // Odometer over rank tuples; generated in lexicographic order, then
  // stably sorted by score.
  std::vector<Combination> combos;
  std::vector<size_t> ranks(lists.size(), 0);
  while (true) {
    Combination c;
    for (size_t l = 0; l < lists.size(); ++l) {
      const RegionHit& hit = (*lists[l])[ranks[l]];
      c.region_ids.push_back(hit.region_id);
      c.score += norms[l].Apply(hit.score);
    }
    combos.push_back(std::move(c));
    size_t l = lists.size();
    while (l > 0) {
      --l;
      if (++ranks[l] < lists[l]->size()) break;
      ranks[l] = 0;
      if (l == 0) {
        l = lists.size() + 1;
        break;
      }
    }
    if (l == lists.size() + 1 || lists.empty()) break;
  }
  std::stable_sort(combos.begin(), combos.end(),
                   [](const Combination& a, const Combination& b) {
                     return a.score > b.score;
                   });
  return combos;
}

std::vector<ImageResult> FilterAndRank(const std::vector<MergedImage>& merged,
                                       const std::vector<ObjectResult>& objects,
                                       const ConstraintSet& constraints,
                                       const SearchContext& context,
                                       bool include_failing) {
  const int arity = static_cast<int>(objects.size());
  if (constraints.arity != arity) {
    Fail(ErrorCode::kInvalidRequest,
         "constraint arity " + std::to_string(constraints.arity) +
             " does not match the " + std::to_string(arity) + " queried objects");
  }
  std::vector<ObjectNormalization> norms;
  for (const auto& o : objects) norms.push_back(NormalizationFor(o));

  std::vector<ImageResult> passing, failing;
  for (const auto& m : merged) {
    ImageResult r;
    r.image_id = m.image_id;
    r.object_scores = m.object_scores;
    r.image_score = m.score;
    const auto combos = EnumerateCombinations(m.image_id, objects, norms);
    const Combination* chosen = nullptr;
    for (const auto& c : combos) {
      PositionFeatureVector x = LayoutFeatures(c, context, m.image_id);
      if (SatisfiesAll(constraints.constraints, x.values)) {
        chosen = &c;
        r.position_features = std::move(x);
        break;
      }
    }
    if (combos.empty() && constraints.empty()) r.passes = true;
    if (chosen == nullptr && !combos.empty()) {
      // Report the top combination's layout for display.
      chosen = &combos.front();
      r.position_features = LayoutFeatures(*chosen, context, m.image_id);
      r.passes = false;
    } else if (chosen != nullptr) {
      r.passes = true;
    }
    if (chosen != nullptr) {
      for (size_t l = 0; l < chosen->region_ids.size(); ++l) {
        const uint64_t id = chosen->region_ids[l];
        const auto& hits = objects[l].per_image.at(m.image_id);
        double score = 0.0;
        for (const auto& h : hits) {
          if (h.region_id == id) score = norms[l].Apply(h.score);
        }
        r.regions.push_back({id, context.index->region(id), score});
      }
    }
    (r.passes ? passing : failing).push_back(std::move(r));
  }
  if (include_failing) {
    for (auto& r : failing) passing.push_back(std::move(r));
  }
  return passing;
}

ShortlistPayload BuildShortlist(const std::vector<MergedImage>& merged,
                                const std::vector<ObjectResult>& objects,
                                const SearchContext& context, size_t cap) {
  ShortlistPayload payload;
  payload.arity = static_cast<int>(objects.size());
  std::vector<ObjectNormalization> norms;
  for (const auto& o : objects) norms.push_back(NormalizationFor(o));
  const size_t n = std::min(cap, merged.size());
  for (size_t i = 0; i < n; ++i) {
    const MergedImage& m = merged[i];
    ShortlistPayload::Image image;
    image.image_id = m.image_id;
    image.score = m.score;
    image.object_scores = m.object_scores;
    for (auto& c : EnumerateCombinations(m.image_id, objects, norms)) {
      PositionFeatureVector x = LayoutFeatures(c, context, m.image_id);
      image.combinations.push_back({std::move(c), std::move(x)});
    }
    payload.images.push_back(std::move(image));
  }
  return payload;
}

std::vector<RefinedImage> RefineShortlist(const ShortlistPayload& payload,
                                          const ConstraintSet& constraints,
                                          bool include_failing) {
  if (constraints.arity != payload.arity) {
    Fail(ErrorCode::kInvalidRequest, "constraint arity does not match payload");
  }
  std::vector<RefinedImage> passing, failing;
  for (const auto& image : payload.images) {
    RefinedImage r;
    r.image_id = image.image_id;
    for (size_t c = 0; c < image.combinations.size(); ++c) {
      if (SatisfiesAll(constraints.constraints,
                       image.combinations[c].features.values)) {
        r.combination = static_cast<int>(c);
        r.passes = true;
        break;
      }
    }
    if (image.combinations.empty() && constraints.empty()) r.passes = true;
    (r.passes ? passing : failing).push_back(std::move(r));
  }
  if (include_failing) {
    for (auto& r : failing) passing.push_back(std::move(r));
  }
  return passing;
}

ConstraintSet CanvasToConstraints(const std::vector<CanvasBox>& boxes) {
  if (boxes.empty()) {
    Fail(ErrorCode::kInvalidRequest, "canvas needs at least one box");
  }
  std::set<int> seen;
  int arity = 0;
  for (const auto& b : boxes) {
    if (b.object < 0 || b.object >= kMaxObjects) {
      Fail(ErrorCode::kInvalidRequest,
           "canvas object index " + std::to_string(b.object) + " out of range");
    }
    if (!seen.insert(b.object).second) {
      Fail(ErrorCode::kInvalidRequest,
           "duplicate canvas object index " + std::to_string(b.object));
    }
    arity = std::max(arity, b.object + 1);
  }
  const FeatureCatalog& catalog = Catalog(arity);
  ConstraintSet set;
  set.arity = arity;
  set.provenance = Provenance::kCanvas;
  for (const auto& b : boxes) {
    const Box unit{0, 0, 1, 1};
    const Box clamped = ClampToImage(b.box, ImageMeta{"", unit.right, unit.bottom});
    const std::string o = "O" + std::to_string(b.object + 1);
    const std::pair<const char*, double> features[] = {
        {".left/I.width", clamped.left},
        {".right/I.width", clamped.right},
        {".top/I.height", clamped.top},
        {".bottom/I.height", clamped.bottom},
    };
    for (const auto& [suffix, value] : features) {
      const int f = catalog.IndexOf(o + suffix);
      const double lo = std::min(0.9 * value, 1.1 * value);
      const double hi = std::max(0.9 * value, 1.1 * value);
      set.constraints.push_back({f, lo, 1});
      set.constraints.push_back({f, hi, -1});
    }
  }
  return set;
}

QueryResponse RunQuery(const Query& query, const SearchContext& context) {
  if (context.index == nullptr || context.images == nullptr) {
    Fail(ErrorCode::kInternal, "search context is incomplete");
  }
  const size_t n_o = query.objects.size();
  if (n_o < 1 || n_o > static_cast<size_t>(kMaxObjects)) {
    Fail(ErrorCode::kInvalidRequest,
         "a query needs 1 to 3 objects, got " + std::to_string(n_o));
  }
  if (query.constraints.arity != static_cast<int>(n_o)) {
    Fail(ErrorCode::kInvalidRequest,
         "constraint arity " + std::to_string(query.constraints.arity) +
             " does not match the " + std::to_string(n_o) + " queried objects");
  }
  ValidateConstraintSet(query.constraints);
  if (query.t == 0) Fail(ErrorCode::kInvalidRequest, "t must be at least 1");
  const InvertedIndex& index = *context.index;
  const size_t probe = query.probe.value_or(
      std::min<uint32_t>(index.params().probe, index.num_lists()));

  std::vector<ObjectResult> objects;
  for (const auto& o : query.objects) {
    const QueryPlan plan = PreprocessObjectQuery(o, context);
    objects.push_back(
        SearchRegions(plan, index, query.shortlist_r, probe, query.t));
  }
  QueryResponse response;
  const auto merged = Merge(objects);
  auto results = FilterAndRank(merged, objects, query.constraints, context,
                               query.include_failing);
  response.total = results.size();
  const size_t begin = std::min(query.offset, results.size());
  const size_t end = std::min(results.size(), begin + query.top_k);
  response.results.assign(std::make_move_iterator(results.begin() + begin),
                          std::make_move_iterator(results.begin() + end));
  response.shortlist =
      BuildShortlist(merged, objects, context, query.shortlist_cap);
  return response;
}

namespace {

nlohmann::json BoxJson(const Box& b) {
  return nlohmann::json::array({b.left, b.top, b.right, b.bottom});
}

Box ParseBox(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) {
    Fail(ErrorCode::kInvalidRequest, "box must be [left, top, right, bottom]");
  }
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
             j[3].get<double>()};
}

}  // namespace

Query QueryFromJson(const nlohmann::json& j) {
  try {
    Query q;
    for (const auto& o : j.at("objects")) {
      ObjectQuery oq;
      if (o.contains("by_example")) {
        const auto& ex = o.at("by_example");
        ByExample by;
        if (ex.is_array()) {
          by.vector = ex.get<std::vector<float>>();
        } else if (ex.contains("region_id")) {
          by.region_id = ex.at("region_id").get<uint64_t>();
        } else {
          by.vector = ex.at("vector").get<std::vector<float>>();
        }
        oq.target = std::move(by);
      } else if (o.contains("by_category")) {
        const auto& cat = o.at("by_category");
        oq.target = ByCategory{cat.is_string() ? cat.get<std::string>()
                                               : cat.at("name").get<std::string>()};
      } else {
        Fail(ErrorCode::kInvalidRequest,
             "object query needs by_example or by_category");
      }
      if (o.contains("attributes")) {
        oq.attributes = o.at("attributes").get<std::vector<std::string>>();
      }
      q.objects.push_back(std::move(oq));
    }
    if (j.contains("constraints") && !j.at("constraints").is_null()) {
      q.constraints = ConstraintSetFromJson(j.at("constraints"));
    } else {
      q.constraints.arity = static_cast<int>(
          std::clamp<size_t>(q.objects.size(), 1, kMaxObjects));
    }
    q.top_k = j.value("top_k", q.top_k);
    q.offset = j.value("offset", q.offset);
    q.shortlist_r = j.value("shortlist_r", q.shortlist_r);
    q.t = j.value("t", q.t);
    q.include_failing = j.value("include_failing", q.include_failing);
    q.shortlist_cap = j.value("shortlist_cap", q.shortlist_cap);
    if (j.contains("k_s") && !j.at("k_s").is_null()) {
      q.probe = j.at("k_s").get<uint32_t>();
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest, std::string("malformed query: ") + e.what());
  }
}

nlohmann::json ImageResultToJson(const ImageResult& r) {
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& c : r.regions) {
    regions.push_back({{"region_id", c.region_id},
                       {"region_index", c.ref.region_index},
                       {"box", BoxJson(c.ref.box)},
                       {"score", c.score}});
  }
  return {{"image_id", r.image_id},
          {"image_score", r.image_score},
          {"object_scores", r.object_scores},
          {"regions", std::move(regions)},
          {"position_features", r.position_features.values},
          {"passes", r.passes}};
}

nlohmann::json ShortlistToJson(const ShortlistPayload& payload) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& image : payload.images) {
    nlohmann::json combos = nlohmann::json::array();
    for (const auto& e : image.combinations) {
      combos.push_back({{"region_ids", e.combination.region_ids},
                        {"score", e.combination.score},
                        {"features", e.features.values}});
    }
    images.push_back({{"image_id", image.image_id},
                      {"score", image.score},
                      {"object_scores", image.object_scores},
                      {"combinations", std::move(combos)}});
  }
  return {{"arity", payload.arity}, {"images", std::move(images)}};
}

ShortlistPayload ShortlistFromJson(const nlohmann::json& j) {
  try {
    ShortlistPayload payload;
    payload.arity = j.at("arity").get<int>();
    for (const auto& im : j.at("images")) {
      ShortlistPayload::Image image;
      image.image_id = im.at("image_id").get<std::string>();
      image.score = im.at("score").get<double>();
      image.object_scores = im.at("object_scores").get<std::vector<double>>();
      for (const auto& c : im.at("combinations")) {
        ShortlistPayload::Entry e;
        e.combination.region_ids = c.at("region_ids").get<std::vector<uint64_t>>();
        e.combination.score = c.at("score").get<double>();
        e.features.arity = payload.arity;
        e.features.values = c.at("features").get<std::vector<double>>();
        image.combinations.push_back(std::move(e));
      }
      payload.images.push_back(std::move(image));
    }
    return payload;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest, std::string("malformed shortlist: ") + e.what());
  }
}

nlohmann::json ResponseToJson(const QueryResponse& response) {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& r : response.results) results.push_back(ImageResultToJson(r));
  return {{"results", std::move(results)},
          {"total", response.total},
          {"shortlist", ShortlistToJson(response.shortlist)}};
}

std::vector<CanvasBox> CanvasBoxesFromJson(const nlohmann::json& j) {
  try {
    std::vector<CanvasBox> boxes;
    const auto& arr = j.is_array() ? j : j.at("boxes");
    for (size_t i = 0; i < arr.size(); ++i) {
      CanvasBox b;
      b.object = arr[i].value("object", static_cast<int>(i));
      b.box = ParseBox(arr[i].at("box"));
      boxes.push_back(b);
    }
    return boxes;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest, std::string("malformed canvas boxes: ") + e.what());
  }
}

}  // namespace rbir
