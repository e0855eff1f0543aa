#ifndef RBIR_GEOMETRY_H_
#define RBIR_GEOMETRY_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbir {

// Pixel-space rectangle in corner form, origin at the top-left.
struct Box {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (left + right); }
  double cy() const { return 0.5 * (top + bottom); }

  bool operator==(const Box&) const = default;
};

// Converts [x, y, w, h] to corner form. Negative extents collapse to zero.
Box BoxFromXywh(double x, double y, double w, double h);

struct ImageMeta {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;

  bool operator==(const ImageMeta&) const = default;
};

// Clamps a box into [0, width] x [0, height] and restores left <= right,
// top <= bottom.
Box ClampToImage(const Box& box, const ImageMeta& image);

struct RegionRef {
  std::string image_id;
  uint32_t region_index = 0;
  Box box;

  bool operator==(const RegionRef&) const = default;
};

struct BoxGeometry {
  double area_a = 0.0;
  double area_b = 0.0;
  double intersection_area = 0.0;
  Box union_box;
  double iou = 0.0;
};

BoxGeometry ComputeBoxGeometry(const Box& a, const Box& b);

enum class FeatureUnit { kPx, kPx2, kRatio };

std::string_view FeatureUnitName(FeatureUnit unit);

// Which image axis a feature is an absolute coordinate along. Such features
// move under translation; every other feature is translation invariant.
enum class FeatureAxis { kNone, kX, kY };

struct FeatureDescriptor {
  int index = 0;
  std::string name;
  FeatureUnit unit = FeatureUnit::kPx;
  FeatureAxis axis = FeatureAxis::kNone;
};

// Ordered schema of position features for a given number of objects.
class FeatureCatalog {
 public:
  FeatureCatalog(int arity, std::vector<FeatureDescriptor> descriptors);

  int arity() const { return arity_; }
  size_t size() const { return descriptors_.size(); }
  const FeatureDescriptor& operator[](size_t i) const {
    return descriptors_[i];
  }
  const std::vector<FeatureDescriptor>& descriptors() const {
    return descriptors_;
  }

  // Returns -1 when the name is not part of the catalog.
  int IndexOf(std::string_view name) const;

 private:
  int arity_;
  std::vector<FeatureDescriptor> descriptors_;
};

inline constexpr int kMaxObjects = 3;
inline constexpr int kPerObjectFeatures = 19;
inline constexpr int kDirectedPairFeatures = 22;
inline constexpr int kTripleFeatures = 24;

// Smallest denominator used by any ratio feature.
inline constexpr double kDenominatorFloor = 1e-6;

// Catalog for 1, 2 or 3 objects (19, 82 and 213 features). Throws
// invalid_request for any other arity.
const FeatureCatalog& Catalog(int arity);

struct PositionFeatureVector {
  int arity = 0;
  std::vector<double> values;

  size_t size() const { return values.size(); }
  double operator[](size_t i) const { return values[i]; }
};

// Position features of the layout `boxes` (one box per object, O1 first)
// inside `image`, in catalog order.
PositionFeatureVector ComputePositionFeatures(const ImageMeta& image,
                                              std::span<const Box> boxes);

}  // namespace rbir

#endif  // RBIR_GEOMETRY_H_
