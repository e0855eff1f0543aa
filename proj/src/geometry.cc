#include "rbir/geometry.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>

#include "rbir/errors.h"

namespace rbir {

Box BoxFromXywh(double x, double y, double w, double h) {
  return Box{x, y, x + std::max(0.0, w), y + std::max(0.0, h)};
}

Box ClampToImage(const Box& box, const ImageMeta& image) {
  auto clamp = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
  Box out{clamp(std::min(box.left, box.right), image.width),
          clamp(std::min(box.top, box.bottom), image.height),
          clamp(std::max(box.left, box.right), image.width),
          clamp(std::max(box.top, box.bottom), image.height)};
  return out;
}

namespace {

double IntersectionArea(const Box& a, const Box& b) {
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  return std::max(0.0, w) * std::max(0.0, h);
}

Box UnionBox(std::span<const Box> boxes) {
  Box u = boxes.front();
  for (const Box& b : boxes.subspan(1)) {
    u.left = std::min(u.left, b.left);
    u.top = std::min(u.top, b.top);
    u.right = std::max(u.right, b.right);
    u.bottom = std::max(u.bottom, b.bottom);
  }
  return u;
}

double SafeDiv(double num, double den) {
  return num / std::max(den, kDenominatorFloor);
}

// Signed differences can legitimately be negative; only the magnitude of the
// denominator is floored.
double CenterDistance(const Box& a, const Box& b) {
  return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

std::string Obj(int i) { return "O" + std::to_string(i + 1); }

// Walks the catalog in order. The same walk produces descriptor names (for
// the catalog) and values (for a concrete layout) so the two cannot drift.
template <typename Sink>
void WalkFeatures(const ImageMeta& image, std::span<const Box> boxes,
                  Sink& sink) {
  const double iw = image.width;
  const double ih = image.height;
  const double iarea = iw * ih;
  const int n = static_cast<int>(boxes.size());
  using enum FeatureUnit;
  constexpr FeatureAxis kNone = FeatureAxis::kNone;
  constexpr FeatureAxis kX = FeatureAxis::kX;
  constexpr FeatureAxis kY = FeatureAxis::kY;

  for (int i = 0; i < n; ++i) {
    const Box& b = boxes[i];
    const std::string o = Sink::kNames ? Obj(i) : std::string();
    sink.Add(kPx, kNone, b.width(), [&] { return o + ".width"; });
    sink.Add(kPx, kNone, b.height(), [&] { return o + ".height"; });
    sink.Add(kPx2, kNone, b.area(), [&] { return o + ".area"; });
    sink.Add(kRatio, kNone, SafeDiv(b.width(), iw),
             [&] { return o + ".width/I.width"; });
    sink.Add(kRatio, kNone, SafeDiv(b.height(), ih),
             [&] { return o + ".height/I.height"; });
    sink.Add(kRatio, kNone, SafeDiv(b.area(), iarea),
             [&] { return o + ".area/I.area"; });
    sink.Add(kPx, kX, b.left, [&] { return o + ".left"; });
    sink.Add(kPx, kX, b.right, [&] { return o + ".right"; });
    sink.Add(kPx, kY, b.top, [&] { return o + ".top"; });
    sink.Add(kPx, kY, b.bottom, [&] { return o + ".bottom"; });
    sink.Add(kPx, kX, b.cx(), [&] { return o + ".cx"; });
    sink.Add(kPx, kY, b.cy(), [&] { return o + ".cy"; });
    sink.Add(kRatio, kX, SafeDiv(b.left, iw),
             [&] { return o + ".left/I.width"; });
    sink.Add(kRatio, kX, SafeDiv(b.right, iw),
             [&] { return o + ".right/I.width"; });
    sink.Add(kRatio, kY, SafeDiv(b.top, ih),
             [&] { return o + ".top/I.height"; });
    sink.Add(kRatio, kY, SafeDiv(b.bottom, ih),
             [&] { return o + ".bottom/I.height"; });
    sink.Add(kRatio, kX, SafeDiv(b.cx(), iw),
             [&] { return o + ".cx/I.width"; });
    sink.Add(kRatio, kY, SafeDiv(b.cy(), ih),
             [&] { return o + ".cy/I.height"; });
    sink.Add(kRatio, kNone, SafeDiv(b.height(), b.width()),
             [&] { return o + ".height/" + o + ".width"; });
  }

  // Unordered pairs in lexicographic order; both directions per pair.
  std::vector<std::pair<int, int>> directed;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      directed.emplace_back(i, j);
      directed.emplace_back(j, i);
    }
  }
  for (const auto& [ia, ib] : directed) {
    const Box& a = boxes[ia];
    const Box& b = boxes[ib];
    const std::string oa = Sink::kNames ? Obj(ia) : std::string();
    const std::string ob = Sink::kNames ? Obj(ib) : std::string();
    const double gap_x = a.left - b.right;
    const double gap_y = a.top - b.bottom;
    const double dcx = a.cx() - b.cx();
    const double dcy = a.cy() - b.cy();
    sink.Add(kPx, kNone, gap_x,
             [&] { return oa + ".left-" + ob + ".right"; });
    sink.Add(kPx, kNone, gap_y,
             [&] { return oa + ".top-" + ob + ".bottom"; });
    sink.Add(kRatio, kNone, SafeDiv(gap_x, iw),
             [&] { return "(" + oa + ".left-" + ob + ".right)/I.width"; });
    sink.Add(kRatio, kNone, SafeDiv(gap_y, ih),
             [&] { return "(" + oa + ".top-" + ob + ".bottom)/I.height"; });
    sink.Add(kPx, kNone, dcx, [&] { return oa + ".cx-" + ob + ".cx"; });
    sink.Add(kPx, kNone, dcy, [&] { return oa + ".cy-" + ob + ".cy"; });
    sink.Add(kRatio, kNone, SafeDiv(dcx, iw),
             [&] { return "(" + oa + ".cx-" + ob + ".cx)/I.width"; });
    sink.Add(kRatio, kNone, SafeDiv(dcy, ih),
             [&] { return "(" + oa + ".cy-" + ob + ".cy)/I.height"; });
    sink.Add(kRatio, kNone, SafeDiv(a.width(), b.width()),
             [&] { return oa + ".width/" + ob + ".width"; });
    sink.Add(kRatio, kNone, SafeDiv(a.height(), b.height()),
             [&] { return oa + ".height/" + ob + ".height"; });
    sink.Add(kRatio, kNone, SafeDiv(a.area(), b.area()),
             [&] { return oa + ".area/" + ob + ".area"; });
    sink.Add(kRatio, kNone, SafeDiv(IntersectionArea(a, b), a.area()),
             [&] { return "inter(" + oa + "," + ob + ")/" + oa + ".area"; });
    const std::array<std::pair<const char*, double>, 4> edges = {{
        {"left", a.left - b.left},
        {"right", a.right - b.right},
        {"top", a.top - b.top},
        {"bottom", a.bottom - b.bottom},
    }};
    for (const auto& [edge, diff] : edges) {
      sink.Add(kPx, kNone, diff, [&, edge = edge] {
        return oa + "." + edge + "-" + ob + "." + edge;
      });
    }
    for (size_t e = 0; e < edges.size(); ++e) {
      const auto& [edge, diff] = edges[e];
      const bool horizontal = e < 2;
      sink.Add(kRatio, kNone, SafeDiv(diff, horizontal ? iw : ih),
               [&, edge = edge] {
                 return "(" + oa + "." + edge + "-" + ob + "." + edge + ")/" +
                        (horizontal ? "I.width" : "I.height");
               });
    }
    const double b_diag = std::hypot(b.width(), b.height());
    sink.Add(kRatio, kNone, SafeDiv(CenterDistance(a, b), b_diag),
             [&] { return "dist(" + oa + "," + ob + ")/" + ob + ".diag"; });
    const Box pair_union = UnionBox(std::array<Box, 2>{a, b});
    sink.Add(kRatio, kNone, SafeDiv(pair_union.area(), a.area()),
             [&] { return "union(" + oa + "," + ob + ").area/" + oa + ".area"; });
  }

  if (n == 3) {
    const Box u = UnionBox(boxes);
    const std::string t = "O1O2O3";
    sink.Add(kPx, kNone, u.width(), [&] { return "union(" + t + ").width"; });
    sink.Add(kPx, kNone, u.height(),
             [&] { return "union(" + t + ").height"; });
    sink.Add(kPx2, kNone, u.area(), [&] { return "union(" + t + ").area"; });
    sink.Add(kRatio, kNone, SafeDiv(u.width(), iw),
             [&] { return "union(" + t + ").width/I.width"; });
    sink.Add(kRatio, kNone, SafeDiv(u.height(), ih),
             [&] { return "union(" + t + ").height/I.height"; });
    sink.Add(kRatio, kNone, SafeDiv(u.area(), iarea),
             [&] { return "union(" + t + ").area/I.area"; });

    double mean_cx = 0.0, mean_cy = 0.0;
    for (const Box& b : boxes) {
      mean_cx += b.cx() / 3.0;
      mean_cy += b.cy() / 3.0;
    }
    sink.Add(kPx, kX, mean_cx, [&] { return "mean(" + t + ".cx)"; });
    sink.Add(kPx, kY, mean_cy, [&] { return "mean(" + t + ".cy)"; });
    sink.Add(kRatio, kX, SafeDiv(mean_cx, iw),
             [&] { return "mean(" + t + ".cx)/I.width"; });
    sink.Add(kRatio, kY, SafeDiv(mean_cy, ih),
             [&] { return "mean(" + t + ".cy)/I.height"; });

    const std::array<double, 3> dists = {CenterDistance(boxes[0], boxes[1]),
                                         CenterDistance(boxes[0], boxes[2]),
                                         CenterDistance(boxes[1], boxes[2])};
    const double max_d = *std::max_element(dists.begin(), dists.end());
    const double min_d = *std::min_element(dists.begin(), dists.end());
    const double idiag = std::hypot(iw, ih);
    sink.Add(kPx, kNone, max_d, [&] { return "maxdist(" + t + ")"; });
    sink.Add(kPx, kNone, min_d, [&] { return "mindist(" + t + ")"; });
    sink.Add(kRatio, kNone, SafeDiv(max_d, idiag),
             [&] { return "maxdist(" + t + ")/I.diag"; });
    sink.Add(kRatio, kNone, SafeDiv(min_d, idiag),
             [&] { return "mindist(" + t + ")/I.diag"; });

    const double area_sum = boxes[0].area() + boxes[1].area() + boxes[2].area();
    sink.Add(kPx2, kNone, area_sum, [&] { return "sumarea(" + t + ")"; });
    sink.Add(kRatio, kNone, SafeDiv(area_sum, iarea),
             [&] { return "sumarea(" + t + ")/I.area"; });
    sink.Add(kRatio, kNone, SafeDiv(area_sum, u.area()),
             [&] { return "sumarea(" + t + ")/union(" + t + ").area"; });

    Box inter = boxes[0];
    for (const Box& b : boxes.subspan(1)) {
      inter.left = std::max(inter.left, b.left);
      inter.top = std::max(inter.top, b.top);
      inter.right = std::min(inter.right, b.right);
      inter.bottom = std::min(inter.bottom, b.bottom);
    }
    const double inter_area = std::max(0.0, inter.width()) *
                              std::max(0.0, inter.height());
    sink.Add(kPx2, kNone, inter_area, [&] { return "inter(" + t + ")"; });
    sink.Add(kRatio, kNone, SafeDiv(inter_area, u.area()),
             [&] { return "inter(" + t + ")/union(" + t + ").area"; });

    double var_x = 0.0, var_y = 0.0;
    for (const Box& b : boxes) {
      var_x += (b.cx() - mean_cx) * (b.cx() - mean_cx) / 3.0;
      var_y += (b.cy() - mean_cy) * (b.cy() - mean_cy) / 3.0;
    }
    sink.Add(kRatio, kNone, SafeDiv(std::sqrt(var_x), iw),
             [&] { return "std(" + t + ".cx)/I.width"; });
    sink.Add(kRatio, kNone, SafeDiv(std::sqrt(var_y), ih),
             [&] { return "std(" + t + ".cy)/I.height"; });
    sink.Add(kRatio, kNone, SafeDiv(u.height(), u.width()),
             [&] { return "union(" + t + ").height/union(" + t + ").width"; });
    double mean_aspect = 0.0;
    for (const Box& b : boxes) mean_aspect += SafeDiv(b.height(), b.width()) / 3.0;
    sink.Add(kRatio, kNone, mean_aspect,
             [&] { return "mean(" + t + ".height/width)"; });
    double max_area = boxes[0].area(), min_area = boxes[0].area();
    for (const Box& b : boxes) {
      max_area = std::max(max_area, b.area());
      min_area = std::min(min_area, b.area());
    }
    sink.Add(kRatio, kNone, SafeDiv(max_area, min_area),
             [&] { return "maxarea(" + t + ")/minarea(" + t + ")"; });
  }
}

struct DescriptorSink {
  static constexpr bool kNames = true;
  std::vector<FeatureDescriptor> descriptors;

  template <typename NameFn>
  void Add(FeatureUnit unit, FeatureAxis axis, double, NameFn name) {
    descriptors.push_back({static_cast<int>(descriptors.size()), name(), unit,
                           axis});
  }
};

struct ValueSink {
  static constexpr bool kNames = false;
  std::vector<double>* values;

  template <typename NameFn>
  void Add(FeatureUnit, FeatureAxis, double value, NameFn) {
    values->push_back(value);
  }
};

size_t ExpectedSize(int arity) {
  const size_t pairs = static_cast<size_t>(arity) * (arity - 1);
  return arity * kPerObjectFeatures + pairs * kDirectedPairFeatures +
         (arity == 3 ? kTripleFeatures : 0);
}

FeatureCatalog BuildCatalog(int arity) {
  const ImageMeta unit_image{"", 1.0, 1.0};
  std::vector<Box> boxes(arity, Box{0, 0, 1, 1});
  DescriptorSink sink;
  WalkFeatures(unit_image, boxes, sink);
  return FeatureCatalog(arity, std::move(sink.descriptors));
}

}  // namespace

BoxGeometry ComputeBoxGeometry(const Box& a, const Box& b) {
  BoxGeometry g;
  g.area_a = std::max(0.0, a.width()) * std::max(0.0, a.height());
  g.area_b = std::max(0.0, b.width()) * std::max(0.0, b.height());
  g.intersection_area = IntersectionArea(a, b);
  g.union_box = UnionBox(std::array<Box, 2>{a, b});
  const double den = g.area_a + g.area_b - g.intersection_area;
  g.iou = den > 0.0 ? g.intersection_area / den : 0.0;
  return g;
}

std::string_view FeatureUnitName(FeatureUnit unit) {
  switch (unit) {
    case FeatureUnit::kPx:
      return "px";
    case FeatureUnit::kPx2:
      return "px2";
    case FeatureUnit::kRatio:
      return "ratio";
  }
  return "ratio";
}

FeatureCatalog::FeatureCatalog(int arity,
                               std::vector<FeatureDescriptor> descriptors)
    : arity_(arity), descriptors_(std::move(descriptors)) {}

int FeatureCatalog::IndexOf(std::string_view name) const {
  for (const auto& d : descriptors_) {
    if (d.name == name) return d.index;
  }
  return -1;
}

const FeatureCatalog& Catalog(int arity) {
  static const std::array<FeatureCatalog, 3> catalogs = {
      BuildCatalog(1), BuildCatalog(2), BuildCatalog(3)};
  if (arity < 1 || arity > kMaxObjects) {
    Fail(ErrorCode::kInvalidRequest,
         "invalid arity " + std::to_string(arity) + " (expected 1, 2 or 3)");
  }
  return catalogs[arity - 1];
}

PositionFeatureVector ComputePositionFeatures(const ImageMeta& image,
                                              std::span<const Box> boxes) {
  const int arity = static_cast<int>(boxes.size());
  if (arity < 1 || arity > kMaxObjects) {
    Fail(ErrorCode::kInvalidRequest,
         "invalid arity " + std::to_string(arity) + " (expected 1, 2 or 3)");
  }
  PositionFeatureVector out;
  out.arity = arity;
  out.values.reserve(ExpectedSize(arity));
  ValueSink sink{&out.values};
  WalkFeatures(image, boxes, sink);
  for (double v : out.values) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kInvalidRequest, "non-finite position feature");
    }
  }
  return out;
}

}  // namespace rbir
