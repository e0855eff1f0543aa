#include "rbir/store.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "rbir/classifier.h"
#include "rbir/errors.h"

namespace rbir {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little);

namespace {

constexpr char kFeatureMagic[8] = {'R', 'B', 'I', 'R', 'F', 'E', 'A', 'T'};
constexpr uint32_t kFeatureVersion = 1;
constexpr size_t kFeatureHeader = 8 + 4 + 4 + 8;

template <typename T>
void Append(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T ReadAt(std::string_view bytes, size_t offset) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  return value;
}

std::string ManifestRelative(const fs::path& p) { return p.filename().string(); }

}  // namespace

uint64_t Fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string DigestHex(uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(digest));
  return buf;
}

std::string EncodeFeatures(uint32_t dim, std::span<const float> features) {
  if (dim == 0 && !features.empty()) {
    Fail(ErrorCode::kInvalidRequest, "feature dimension must be positive");
  }
  std::string out;
  out.reserve(kFeatureHeader + features.size_bytes());
  out.append(kFeatureMagic, sizeof(kFeatureMagic));
  Append(out, kFeatureVersion);
  Append(out, dim);
  Append(out, static_cast<uint64_t>(dim == 0 ? 0 : features.size() / dim));
  out.append(reinterpret_cast<const char*>(features.data()),
             features.size_bytes());
  return out;
}

void DecodeFeatures(std::string_view bytes, uint32_t* dim,
                    std::vector<float>* features) {
  if (bytes.size() < kFeatureHeader ||
      std::memcmp(bytes.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0) {
    Fail(ErrorCode::kInvalidRequest, "features file has bad magic");
  }
  if (ReadAt<uint32_t>(bytes, 8) != kFeatureVersion) {
    Fail(ErrorCode::kInvalidRequest, "unsupported features file version");
  }
  *dim = ReadAt<uint32_t>(bytes, 12);
  const auto rows = ReadAt<uint64_t>(bytes, 16);
  const size_t expected = kFeatureHeader + rows * *dim * sizeof(float);
  if (bytes.size() != expected) {
    Fail(ErrorCode::kInvalidRequest,
         "features file holds " + std::to_string(bytes.size()) +
             " bytes, header implies " + std::to_string(expected));
  }
  features->resize(rows * *dim);
  std::memcpy(features->data(), bytes.data() + kFeatureHeader,
              features->size() * sizeof(float));
}

fs::path WriteDataset(const Dataset& dataset, const fs::path& dir) {
  if (dataset.features.size() != dataset.regions.size() * dataset.dim) {
    Fail(ErrorCode::kInvalidRequest, "feature rows do not match regions");
  }
  fs::create_directories(dir);
  std::string regions_text;
  size_t r = 0;
  for (const auto& image : dataset.images) {
    nlohmann::json regions = nlohmann::json::array();
    while (r < dataset.regions.size() &&
           dataset.regions[r].image_id == image.image_id) {
      const Box& b = dataset.regions[r].box;
      regions.push_back({{"box", {b.left, b.top, b.right, b.bottom}}});
      ++r;
    }
    const nlohmann::json line = {{"image_id", image.image_id},
                                 {"width", image.width},
                                 {"height", image.height},
                                 {"regions", std::move(regions)}};
    regions_text += line.dump() + "\n";
  }
  if (r != dataset.regions.size()) {
    Fail(ErrorCode::kInvalidRequest,
         "regions must be grouped by image in image order");
  }
  const std::string features = EncodeFeatures(dataset.dim, dataset.features);
  const fs::path regions_path = dir / "regions.jsonl";
  const fs::path features_path = dir / "features.bin";
  WriteFileAtomically(regions_path, regions_text);
  WriteFileAtomically(features_path, features);
  const nlohmann::json manifest = {
      {"name", dataset.name},
      {"D", dataset.dim},
      {"counts",
       {{"images", dataset.images.size()},
        {"regions", dataset.regions.size()}}},
      {"files",
       {{"regions", ManifestRelative(regions_path)},
        {"features", ManifestRelative(features_path)}}},
      {"digests",
       {{"regions", DigestHex(Fnv1a64(regions_text))},
        {"features", DigestHex(Fnv1a64(features))}}}};
  const fs::path manifest_path = dir / "manifest.json";
  WriteFileAtomically(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

Dataset LoadDataset(const fs::path& manifest_path) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(ReadFile(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest,
         "malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  Dataset dataset;
  const fs::path base = manifest_path.parent_path();
  fs::path regions_path, features_path;
  std::string regions_digest, features_digest;
  uint32_t manifest_dim = 0;
  try {
    dataset.name = manifest.value("name", std::string());
    manifest_dim = manifest.at("D").get<uint32_t>();
    regions_path = base / manifest.at("files").at("regions").get<std::string>();
    features_path = base / manifest.at("files").at("features").get<std::string>();
    regions_digest = manifest.at("digests").at("regions").get<std::string>();
    features_digest = manifest.at("digests").at("features").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kInvalidRequest,
         "manifest " + manifest_path.string() + " is missing fields: " + e.what());
  }

  const std::string regions_text = ReadFile(regions_path);
  const std::string features_bytes = ReadFile(features_path);
  if (DigestHex(Fnv1a64(regions_text)) != regions_digest) {
    Fail(ErrorCode::kInvalidRequest, "digest mismatch for " + regions_path.string());
  }
  if (DigestHex(Fnv1a64(features_bytes)) != features_digest) {
    Fail(ErrorCode::kInvalidRequest,
         "digest mismatch for " + features_path.string());
  }

  std::istringstream lines(regions_text);
  std::string line;
  size_t line_no = 0;
  std::unordered_set<std::string> seen;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto where = [&] {
      return regions_path.string() + ":" + std::to_string(line_no) + ": ";
    };
    try {
      const auto j = nlohmann::json::parse(line);
      ImageMeta image{j.at("image_id").get<std::string>(),
                      j.at("width").get<double>(), j.at("height").get<double>()};
      if (!(image.width > 0.0) || !(image.height > 0.0)) {
        Fail(ErrorCode::kInvalidRequest, where() + "image size must be positive");
      }
      if (!seen.insert(image.image_id).second) {
        Fail(ErrorCode::kInvalidRequest,
             where() + "duplicate image_id '" + image.image_id + "'");
      }
      uint32_t k = 0;
      for (const auto& region : j.at("regions")) {
        const auto& b = region.at("box");
        if (!b.is_array() || b.size() != 4) {
          Fail(ErrorCode::kInvalidRequest, where() + "box must have 4 numbers");
        }
        const Box box{b[0].get<double>(), b[1].get<double>(),
                      b[2].get<double>(), b[3].get<double>()};
        dataset.regions.push_back({image.image_id, k++, ClampToImage(box, image)});
      }
      dataset.images.push_back(std::move(image));
    } catch (const nlohmann::json::exception& e) {
      Fail(ErrorCode::kInvalidRequest, where() + "malformed record: " + e.what());
    }
  }

  uint32_t dim = 0;
  DecodeFeatures(features_bytes, &dim, &dataset.features);
  if (dim != manifest_dim) {
    Fail(ErrorCode::kDimensionMismatch,
         "manifest D=" + std::to_string(manifest_dim) + " but features file D=" +
             std::to_string(dim));
  }
  dataset.dim = dim;
  const size_t rows = dim == 0 ? 0 : dataset.features.size() / dim;
  if (rows != dataset.regions.size()) {
    Fail(ErrorCode::kInvalidRequest,
         "row-count mismatch: " + std::to_string(dataset.regions.size()) +
             " regions but " + std::to_string(rows) + " feature rows");
  }
  return dataset;
}

}  // namespace rbir
