#ifndef RBIR_STORE_H_
#define RBIR_STORE_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rbir/geometry.h"
#include "rbir/matrix.h"

namespace rbir {

// Regions and their feature rows, aligned by order: region k of image i is
// row (offset of image i) + k.
struct Dataset {
  std::string name;
  uint32_t dim = 0;
  std::vector<ImageMeta> images;
  std::vector<RegionRef> regions;
  std::vector<float> features;  // regions.size() x dim

  MatrixView<float> feature_view() const {
    return dim == 0 ? MatrixView<float>() : MatrixView<float>(features, dim);
  }
};

// 64-bit FNV-1a.
uint64_t Fnv1a64(std::string_view bytes);
std::string DigestHex(uint64_t digest);

// Writes regions.jsonl, features.bin and manifest.json into `dir` and
// returns the manifest path.
std::filesystem::path WriteDataset(const Dataset& dataset,
                                   const std::filesystem::path& dir);

// Loads a manifest and the files it names (paths relative to the
// manifest). Verifies digests and row counts; clamps boxes into images.
Dataset LoadDataset(const std::filesystem::path& manifest_path);

// Features file: "RBIRFEAT", u32 version, u32 D, u64 rows, rows x D float32.
std::string EncodeFeatures(uint32_t dim, std::span<const float> features);
void DecodeFeatures(std::string_view bytes, uint32_t* dim,
                    std::vector<float>* features);

}  // namespace rbir

#endif  // RBIR_STORE_H_
