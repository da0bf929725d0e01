#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "uwhdn/rng.hpp"
#include "uwhdn/tensor.hpp"

namespace uwhdn::datasets {

enum class DatasetKind { UFO120, UWNet, UWScenes, UIEB, Synthetic };
DatasetKind dataset_kind_from_string(const std::string& s);
std::string to_string(DatasetKind kind);

struct ManifestRecord {
  std::string id;
  std::filesystem::path underwater_path;
  std::filesystem::path clean_path;
};

// Paired records, ids unique, ordered by id. Immutable after construction and
// safe to share across threads.
struct DatasetManifest {
  DatasetKind kind = DatasetKind::Synthetic;
  std::vector<ManifestRecord> records;

  const ManifestRecord& by_id(const std::string& id) const;
};

// Scans root/underwater and root/clean, matches files by stem, decode-checks
// every referenced image. Throws ValidationError naming the offending id/file.
DatasetManifest build_manifest(const std::filesystem::path& root,
                               DatasetKind kind);

// Line-delimited records, one JSON object per line; first line is a header
// carrying the dataset kind.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// The paired-to-unpaired protocol: floor(X/2) ids drawn uniformly without
// replacement keep only their underwater image; the complement keeps only the
// clean image. Same seed, same split.
struct UnpairedSplit {
  std::uint64_t seed = 0;
  std::vector<std::string> underwater_ids;  // sorted
  std::vector<std::string> clean_ids;       // sorted, disjoint from the above
};

UnpairedSplit unpaired_split(const DatasetManifest& manifest,
                             std::uint64_t seed);
void save_split(const UnpairedSplit& s, const std::filesystem::path& path);
UnpairedSplit load_split(const std::filesystem::path& path);

struct UnpairedBatch {
  Tensor underwater;  // B x 3 x patch x patch in [0,1]
  Tensor clean;
  // Source ids per slot, for provenance checks.
  std::vector<std::string> underwater_ids;
  std::vector<std::string> clean_ids;
};

// Draws training patches. Image choice and crop offset are uniform per slot;
// the two sides are sampled independently. Images smaller than the patch are
// bicubically upscaled first. Decoded images are cached up to cache_capacity.
class PatchSampler {
 public:
  PatchSampler(const DatasetManifest& manifest, const UnpairedSplit& split,
               std::size_t cache_capacity = 256);

  UnpairedBatch sample_patch_batch(std::size_t patch, std::size_t batch,
                                   Rng& rng);

 private:
  Tensor patch_from(const std::string& id, bool underwater_side,
                    std::size_t patch, Rng& rng);
  const Tensor& cached_image(const std::string& id, bool underwater_side,
                             std::size_t patch);

  const DatasetManifest* manifest_;
  std::unordered_map<std::string, const ManifestRecord*> by_id_;
  std::vector<std::string> underwater_ids_, clean_ids_;
  std::size_t cache_capacity_;
  std::unordered_map<std::string, Tensor> cache_;
  std::vector<std::string> cache_order_;
};

// Desk-scale synthetic degradation: I_c = J_c * t * a_c + B_c * (1 - t) with a
// smooth random transmission map t. Red attenuation must not exceed green/blue.
struct DegradationParams {
  std::array<Scalar, 3> attenuation{0.45, 0.80, 0.90};  // r, g, b in (0,1]
  std::array<Scalar, 3> background{0.12, 0.42, 0.50};   // in [0,1]
  Scalar transmission_smoothness = 8.0;                 // pixels per noise cell
  Scalar transmission_min = 0.2;
  Scalar transmission_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Smooth random map in [transmission_min, transmission_max]: low-resolution
// uniform noise, bilinearly upsampled.
Tensor transmission_map(std::size_t h, std::size_t w,
                        const DegradationParams& params, Rng& rng);

// The per-pixel water model with an explicit transmission map (1x1xHxW).
Tensor apply_water_model(const Tensor& clean, const Tensor& t_map,
                         const DegradationParams& params);

Tensor synthesize_underwater(const Tensor& clean, const DegradationParams& params,
                             Rng& rng);

// Random smooth test scene: gradient base plus soft ellipses.
Tensor synthetic_clean_image(std::size_t h, std::size_t w, Rng& rng);

// Writes root/clean/*.png and root/underwater/*.png pairs.
void write_synthetic_dataset(const std::filesystem::path& root,
                             std::size_t count, std::size_t size,
                             const DegradationParams& params,
                             std::uint64_t seed);

}  // namespace uwhdn::datasets
