#include "rbir/synthetic.h"

#include <algorithm>
#include <array>
#include <cmath>

#include "json.hpp"
#include "rbir/classifier.h"
#include "rbir/errors.h"
#include "rbir/random.h"

namespace rbir {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<SpatialPredicate, std::string_view> kPredicateNames[] = {
    {SpatialPredicate::kLeftOf, "left_of"},
    {SpatialPredicate::kRightOf, "right_of"},
    {SpatialPredicate::kAbove, "above"},
    {SpatialPredicate::kBelow, "below"},
    {SpatialPredicate::kOnTopOf, "on_top_of"},
    {SpatialPredicate::kInside, "inside"},
    {SpatialPredicate::kOverlaps, "overlaps"},
};

// Uniform integer in [lo, hi]; requires lo <= hi.
int RandInt(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.Index(static_cast<uint64_t>(hi - lo + 1)));
}

std::vector<double> RandomUnit(Rng& rng, size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& x : v) {
      x = rng.Normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

std::vector<float> NoisyUnit(Rng& rng, std::span<const float> prototype,
                             double sigma) {
  if (sigma == 0.0) return {prototype.begin(), prototype.end()};
  std::vector<double> v(prototype.size());
  double norm = 0.0;
  for (size_t d = 0; d < v.size(); ++d) {
    v[d] = prototype[d] + sigma * rng.Normal();
    norm += v[d] * v[d];
  }
  norm = std::sqrt(std::max(norm, 1e-300));
  std::vector<float> out(v.size());
  for (size_t d = 0; d < v.size(); ++d) out[d] = static_cast<float>(v[d] / norm);
  return out;
}

Box RandomBox(Rng& rng, int width, int height) {
  const int w = RandInt(rng, std::max(1, width / 10), std::max(1, width / 3));
  const int h = RandInt(rng, std::max(1, height / 10), std::max(1, height / 3));
  const int x = RandInt(rng, 0, width - w);
  const int y = RandInt(rng, 0, height - h);
  return Box{double(x), double(y), double(x + w), double(y + h)};
}

[[noreturn]] void Impossible(SpatialPredicate p, int width, int height) {
  Fail(ErrorCode::kInvalidRequest,
       "cannot fit template '" + std::string(PredicateName(p)) + "' into a " +
           std::to_string(width) + "x" + std::to_string(height) + " image");
}

// Two extents a, b with a + gap + b <= span, placed in order along one axis.
// Returns {a_lo, a_hi, b_lo, b_hi}.
std::array<int, 4> Separated(Rng& rng, int span, int gap, SpatialPredicate p,
                             int w, int h) {
  const int min_len = std::max(1, span / 10);
  const int max_len = std::max(min_len, (span - gap) / 2 - 1);
  if (2 * min_len + gap > span) Impossible(p, w, h);
  const int a = RandInt(rng, min_len, max_len);
  const int b = RandInt(rng, min_len, std::max(min_len, std::min(max_len, span - gap - a)));
  const int a_lo = RandInt(rng, 0, span - (a + gap + b));
  const int b_lo = RandInt(rng, a_lo + a + gap, span - b);
  return {a_lo, a_lo + a, b_lo, b_lo + b};
}

std::pair<int, int> Extent(Rng& rng, int span) {
  const int len = RandInt(rng, std::max(1, span / 10), std::max(1, span / 3));
  const int lo = RandInt(rng, 0, span - len);
  return {lo, lo + len};
}

std::pair<Box, Box> BuildLayout(Rng& rng, SpatialPredicate p, int width,
                                int height, int gap) {
  auto box = [](int l, int t, int r, int b) {
    return Box{double(l), double(t), double(r), double(b)};
  };
  switch (p) {
    case SpatialPredicate::kLeftOf:
    case SpatialPredicate::kRightOf: {
      const auto x = Separated(rng, width, gap, p, width, height);
      const auto ys = Extent(rng, height);
      const auto yo = Extent(rng, height);
      Box first = box(x[0], ys.first, x[1], ys.second);
      Box second = box(x[2], yo.first, x[3], yo.second);
      if (p == SpatialPredicate::kLeftOf) return {first, second};
      return {second, first};
    }
    case SpatialPredicate::kAbove:
    case SpatialPredicate::kBelow: {
      const auto y = Separated(rng, height, gap, p, width, height);
      const auto xs = Extent(rng, width);
      const auto xo = Extent(rng, width);
      Box first = box(xs.first, y[0], xs.second, y[1]);
      Box second = box(xo.first, y[2], xo.second, y[3]);
      if (p == SpatialPredicate::kAbove) return {first, second};
      return {second, first};
    }
    case SpatialPredicate::kOnTopOf: {
      const int min_w = std::max(2, width / 8);
      const int min_h = std::max(gap + 1, height / 10);
      if (2 * min_h > height || min_w > width) Impossible(p, width, height);
      const int ow = RandInt(rng, min_w, std::max(min_w, width / 2));
      const int oh = RandInt(rng, min_h, std::max(min_h, height / 3));
      const int sh = RandInt(rng, min_h, std::max(min_h, std::min(height / 3, height - oh)));
      const int sw = RandInt(rng, std::max(1, ow / 4), ow);
      const int ol = RandInt(rng, 0, width - ow);
      const int ot = RandInt(rng, sh, height - oh);
      const int sl = RandInt(rng, ol, ol + ow - sw);
      return {box(sl, ot - sh, sl + sw, ot), box(ol, ot, ol + ow, ot + oh)};
    }
    case SpatialPredicate::kInside: {
      const int min_w = 2 * gap + 2, min_h = 2 * gap + 2;
      if (min_w > width || min_h > height) Impossible(p, width, height);
      const int ow = RandInt(rng, std::max(min_w, width / 3), width);
      const int oh = RandInt(rng, std::max(min_h, height / 3), height);
      const int ol = RandInt(rng, 0, width - ow);
      const int ot = RandInt(rng, 0, height - oh);
      const int sw = RandInt(rng, 1, ow - 2 * gap);
      const int sh = RandInt(rng, 1, oh - 2 * gap);
      const int sl = RandInt(rng, ol + gap, ol + ow - gap - sw);
      const int st = RandInt(rng, ot + gap, ot + oh - gap - sh);
      return {box(sl, st, sl + sw, st + sh), box(ol, ot, ol + ow, ot + oh)};
    }
    case SpatialPredicate::kOverlaps: {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const Box s = RandomBox(rng, width, height);
        const int sw = static_cast<int>(s.width()), sh = static_cast<int>(s.height());
        const int ow = std::clamp(RandInt(rng, sw * 4 / 5, sw * 6 / 5), 1, width);
        const int oh = std::clamp(RandInt(rng, sh * 4 / 5, sh * 6 / 5), 1, height);
        const int ol = std::clamp(static_cast<int>(s.left) + RandInt(rng, -sw / 4, sw / 4),
                                  0, width - ow);
        const int ot = std::clamp(static_cast<int>(s.top) + RandInt(rng, -sh / 4, sh / 4),
                                  0, height - oh);
        const Box o = box(ol, ot, ol + ow, ot + oh);
        if (PredicateHolds(p, s, o, gap)) return {s, o};
      }
      Impossible(p, width, height);
    }
  }
  Impossible(p, width, height);
}

}  // namespace

std::string_view PredicateName(SpatialPredicate p) {
  for (const auto& [value, name] : kPredicateNames) {
    if (value == p) return name;
  }
  return "left_of";
}

SpatialPredicate ParsePredicate(std::string_view name) {
  for (const auto& [value, n] : kPredicateNames) {
    if (n == name) return value;
  }
  Fail(ErrorCode::kInvalidRequest,
       "unknown spatial predicate '" + std::string(name) + "'");
}

bool PredicateHolds(SpatialPredicate p, const Box& s, const Box& o, double gap) {
  switch (p) {
    case SpatialPredicate::kLeftOf:
      return s.right + gap <= o.left;
    case SpatialPredicate::kRightOf:
      return o.right + gap <= s.left;
    case SpatialPredicate::kAbove:
      return s.bottom + gap <= o.top;
    case SpatialPredicate::kBelow:
      return o.bottom + gap <= s.top;
    case SpatialPredicate::kOnTopOf:
      return std::abs(s.bottom - o.top) <= gap / 2 && s.cx() >= o.left &&
             s.cx() <= o.right && s.top + gap <= o.top;
    case SpatialPredicate::kInside:
      return s.left >= o.left + gap && s.right <= o.right - gap &&
             s.top >= o.top + gap && s.bottom <= o.bottom - gap;
    case SpatialPredicate::kOverlaps:
      return ComputeBoxGeometry(s, o).iou >= kOverlapIou;
  }
  return false;
}

SyntheticData GenerateSynthetic(const SyntheticSpec& spec) {
  if (spec.dim == 0) Fail(ErrorCode::kInvalidRequest, "dimension must be positive");
  if (spec.categories.empty() || spec.scenes.empty()) {
    Fail(ErrorCode::kInvalidRequest, "spec needs categories and scene templates");
  }
  Rng rng(spec.seed);
  SyntheticData data;
  data.categories = spec.categories;
  std::map<std::string, size_t> category_index;
  for (size_t c = 0; c < data.categories.size(); ++c) {
    auto& cat = data.categories[c];
    if (!(cat.sigma >= 0.0)) {
      Fail(ErrorCode::kInvalidRequest, "category sigma must be non-negative");
    }
    if (cat.prototype.empty()) {
      const auto unit = RandomUnit(rng, spec.dim);
      cat.prototype.assign(unit.begin(), unit.end());
    } else if (cat.prototype.size() != spec.dim) {
      Fail(ErrorCode::kDimensionMismatch,
           "prototype for '" + cat.name + "' has the wrong dimension");
    }
    category_index[cat.name] = c;
  }
  for (const auto& s : spec.scenes) {
    for (const auto* name : {&s.subject, &s.object}) {
      if (!category_index.contains(*name)) {
        Fail(ErrorCode::kInvalidRequest,
             "scene template uses unknown category '" + *name + "'");
      }
    }
  }

  Dataset& ds = data.dataset;
  ds.name = "synthetic";
  ds.dim = spec.dim;
  for (size_t i = 0; i < spec.num_images; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "img%05zu", i);
    const ImageMeta image{id, double(spec.image_width), double(spec.image_height)};
    const SceneTemplate& scene = spec.scenes[i % spec.scenes.size()];
    const auto [subject_box, object_box] = BuildLayout(
        rng, scene.predicate, spec.image_width, spec.image_height, spec.gap);

    std::vector<std::pair<Box, std::string>> regions = {
        {subject_box, scene.subject}, {object_box, scene.object}};
    for (size_t d = 0; d < spec.distractors_per_image; ++d) {
      regions.push_back(
          {RandomBox(rng, spec.image_width, spec.image_height), "background"});
    }
    for (uint32_t k = 0; k < regions.size(); ++k) {
      const auto& [box, category] = regions[k];
      ds.regions.push_back({image.image_id, k, box});
      std::vector<float> feature;
      if (category == "background") {
        const auto unit = RandomUnit(rng, spec.dim);
        feature.assign(unit.begin(), unit.end());
      } else {
        const auto& cat = data.categories[category_index.at(category)];
        feature = NoisyUnit(rng, cat.prototype, cat.sigma);
      }
      ds.features.insert(ds.features.end(), feature.begin(), feature.end());
      data.region_labels.push_back({image.image_id, k, category});
    }
    data.scenes.push_back(
        {image.image_id, std::string(PredicateName(scene.predicate)), 0, 1});
    data.triples.push_back({scene.subject, scene.object,
                            std::string(PredicateName(scene.predicate)),
                            subject_box, object_box, image.width, image.height});
    ds.images.push_back(image);
  }
  return data;
}

SyntheticSpec DefaultSyntheticSpec(uint64_t seed, size_t num_images,
                                   uint32_t dim) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.dim = dim;
  spec.num_images = num_images;
  spec.categories = {{"person", {}, 0.15}, {"horse", {}, 0.15},
                     {"table", {}, 0.15}, {"cup", {}, 0.15}};
  spec.scenes = {{SpatialPredicate::kLeftOf, "person", "horse"},
                 {SpatialPredicate::kAbove, "person", "horse"},
                 {SpatialPredicate::kOnTopOf, "cup", "table"}};
  return spec;
}

fs::path WriteSynthetic(const SyntheticData& data, const fs::path& dir) {
  const fs::path manifest = WriteDataset(data.dataset, dir);
  std::string labels;
  for (const auto& l : data.region_labels) {
    labels += nlohmann::json{{"image_id", l.image_id},
                             {"region_index", l.region_index},
                             {"category", l.category}}
                  .dump() +
              "\n";
  }
  for (const auto& s : data.scenes) {
    labels += nlohmann::json{{"image_id", s.image_id},
                             {"predicate", s.predicate},
                             {"subject_index", s.subject_index},
                             {"object_index", s.object_index}}
                  .dump() +
              "\n";
  }
  WriteFileAtomically(dir / "labels.jsonl", labels);
  SaveTriples(data.triples, dir / "triples.jsonl");
  return manifest;
}

TripleDataset GenerateRelationshipTriples(const TripleSpec& spec) {
  Rng rng(spec.seed);
  TripleDataset out;
  auto category = [&] {
    return spec.categories[rng.Index(spec.categories.size())];
  };
  for (const auto& [name, count] : spec.per_predicate) {
    const SpatialPredicate p = ParsePredicate(name);
    for (size_t i = 0; i < count; ++i) {
      const auto [s, o] =
          BuildLayout(rng, p, spec.image_width, spec.image_height, spec.gap);
      out.push_back({category(), category(), name, s, o,
                     double(spec.image_width), double(spec.image_height)});
    }
  }
  for (size_t i = 0; i < spec.num_random; ++i) {
    const Box s = RandomBox(rng, spec.image_width, spec.image_height);
    const Box o = RandomBox(rng, spec.image_width, spec.image_height);
    out.push_back({category(), category(), spec.random_predicate, s, o,
                   double(spec.image_width), double(spec.image_height)});
  }
  rng.Shuffle(out);
  return out;
}

LayoutClusters GenerateLayoutClusters(size_t num_clusters, size_t per_cluster,
                                      double jitter, uint64_t seed) {
  if (num_clusters == 0) Fail(ErrorCode::kInvalidRequest, "need at least one cluster");
  Rng rng(seed);
  LayoutClusters out;
  out.image = {"layout", 640.0, 480.0};
  const double w = out.image.width, h = out.image.height;
  // Prototypes: one box pair per cluster, drawn far apart in layout space by
  // cycling through side-by-side, stacked and nested arrangements.
  std::vector<std::pair<Box, Box>> prototypes;
  for (size_t c = 0; c < num_clusters; ++c) {
    const SpatialPredicate p = std::array{SpatialPredicate::kLeftOf,
                                          SpatialPredicate::kAbove,
                                          SpatialPredicate::kInside,
                                          SpatialPredicate::kRightOf,
                                          SpatialPredicate::kBelow}[c % 5];
    prototypes.push_back(BuildLayout(rng, p, 640, 480, 32));
  }
  auto jittered = [&](const Box& b) {
    Box out_box{b.left + jitter * w * rng.Normal(), b.top + jitter * h * rng.Normal(),
                b.right + jitter * w * rng.Normal(), b.bottom + jitter * h * rng.Normal()};
    if (out_box.right <= out_box.left + 1.0) out_box.right = out_box.left + 1.0;
    if (out_box.bottom <= out_box.top + 1.0) out_box.bottom = out_box.top + 1.0;
    return ClampToImage(out_box, out.image);
  };
  for (size_t c = 0; c < num_clusters; ++c) {
    for (size_t i = 0; i < per_cluster; ++i) {
      out.layouts.push_back({jittered(prototypes[c].first),
                             jittered(prototypes[c].second)});
      out.labels.push_back(static_cast<uint32_t>(c));
    }
  }
  return out;
}

AnnBenchmark GenerateAnnBenchmark(size_t num_vectors, size_t num_queries,
                                  uint32_t dim, uint64_t seed) {
  constexpr size_t kClusters = 100;
  constexpr double kSpread = 0.3;
  constexpr double kQueryNoise = 0.05;
  Rng rng(seed);
  AnnBenchmark bench;
  bench.dim = dim;
  std::vector<double> centers(kClusters * dim);
  for (double& c : centers) c = rng.Normal();
  bench.database.resize(num_vectors * dim);
  for (size_t i = 0; i < num_vectors; ++i) {
    const size_t c = rng.Index(kClusters);
    for (size_t d = 0; d < dim; ++d) {
      bench.database[i * dim + d] =
          static_cast<float>(centers[c * dim + d] + kSpread * rng.Normal());
    }
  }
  bench.queries.resize(num_queries * dim);
  for (size_t q = 0; q < num_queries; ++q) {
    const size_t i = num_vectors == 0 ? 0 : rng.Index(num_vectors);
    for (size_t d = 0; d < dim; ++d) {
      const double base = num_vectors == 0 ? 0.0 : bench.database[i * dim + d];
      bench.queries[q * dim + d] = static_cast<float>(base + kQueryNoise * rng.Normal());
    }
  }
  return bench;
}

}  // namespace rbir
