#include "uwhdn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "uwhdn/error.hpp"
#include "uwhdn/image_io.hpp"

namespace uwhdn::datasets {

using nlohmann::json;
namespace fs = std::filesystem;

DatasetKind dataset_kind_from_string(const std::string& s) {
  std::string k = s;
  std::transform(k.begin(), k.end(), k.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (k == "ufo120" || k == "ufo-120") return DatasetKind::UFO120;
  if (k == "uwnet") return DatasetKind::UWNet;
  if (k == "uwscenes") return DatasetKind::UWScenes;
  if (k == "uieb") return DatasetKind::UIEB;
  if (k == "synthetic") return DatasetKind::Synthetic;
  throw ValidationError("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::UFO120: return "ufo120";
    case DatasetKind::UWNet: return "uwnet";
    case DatasetKind::UWScenes: return "uwscenes";
    case DatasetKind::UIEB: return "uieb";
    case DatasetKind::Synthetic: return "synthetic";
  }
  return "synthetic";
}

const ManifestRecord& DatasetManifest::by_id(const std::string& id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw ValidationError("manifest has no record with id '" + id + "'");
}

DatasetManifest build_manifest(const fs::path& root, DatasetKind kind) {
  const fs::path uw_dir = root / "underwater";
  const fs::path clean_dir = root / "clean";
  for (const fs::path& dir : {uw_dir, clean_dir})
    if (!fs::is_directory(dir))
      throw ValidationError("missing directory: " + dir.string());

  auto list_side = [](const fs::path& dir) {
    std::map<std::string, fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (!entry.is_regular_file() || !has_image_extension(entry.path()))
        continue;
      const std::string id = entry.path().stem().string();
      if (files.count(id))
        throw ValidationError("duplicate id '" + id + "' in " + dir.string());
      files.emplace(id, entry.path());
    }
    return files;
  };

  const auto uw = list_side(uw_dir);
  const auto clean = list_side(clean_dir);
  for (const auto& [id, path] : uw)
    if (!clean.count(id))
      throw ValidationError("id '" + id + "' has no clean counterpart");
  for (const auto& [id, path] : clean)
    if (!uw.count(id))
      throw ValidationError("id '" + id + "' has no underwater counterpart");
  if (uw.empty()) throw ValidationError("no records under " + root.string());

  DatasetManifest m;
  m.kind = kind;
  for (const auto& [id, uw_path] : uw) {
    // Decode check; load_image names the file on failure.
    (void)load_image(uw_path);
    (void)load_image(clean.at(id));
    m.records.push_back({id, uw_path, clean.at(id)});
  }
  return m;  // std::map iteration already sorted by id
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open for write: " + path.string());
  out << json{{"dataset_kind", to_string(m.kind)}}.dump() << "\n";
  for (const auto& r : m.records)
    out << json{{"id", r.id},
                {"underwater_path", r.underwater_path.string()},
                {"clean_path", r.clean_path.string()}}
               .dump()
        << "\n";
  if (!out) throw RuntimeFailure("write failed: " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest: " + path.string());
  std::string line;
  DatasetManifest m;
  bool header = true;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError("malformed manifest line in " + path.string() +
                            ": " + e.what());
    }
    if (header) {
      m.kind = dataset_kind_from_string(j.at("dataset_kind").get<std::string>());
      header = false;
      continue;
    }
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.underwater_path = j.at("underwater_path").get<std::string>();
    r.clean_path = j.at("clean_path").get<std::string>();
    if (!seen.insert(r.id).second)
      throw ValidationError("duplicate id '" + r.id + "' in manifest");
    m.records.push_back(std::move(r));
  }
  if (header) throw ValidationError("manifest missing header: " + path.string());
  if (m.records.empty())
    throw ValidationError("manifest has no records: " + path.string());
  std::sort(m.records.begin(), m.records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return m;
}

UnpairedSplit unpaired_split(const DatasetManifest& manifest,
                             std::uint64_t seed) {
  const std::size_t x = manifest.records.size();
  if (x < 2)
    throw ValidationError(
        "unpaired_split needs at least 2 records, got " + std::to_string(x));
  std::vector<std::string> ids;
  ids.reserve(x);
  for (const auto& r : manifest.records) ids.push_back(r.id);
  // ids are sorted; Fisher-Yates with the split's own stream.
  constexpr std::uint64_t kSplitStream = 0x73706c6974ULL;
  Rng rng(Rng::mix(seed, kSplitStream));
  for (std::size_t i = x - 1; i > 0; --i) {
    const std::size_t j = rng.index(i + 1);
    std::swap(ids[i], ids[j]);
  }
  UnpairedSplit s;
  s.seed = seed;
  const std::size_t k = x / 2;
  s.underwater_ids.assign(ids.begin(), ids.begin() + k);
  s.clean_ids.assign(ids.begin() + k, ids.end());
  std::sort(s.underwater_ids.begin(), s.underwater_ids.end());
  std::sort(s.clean_ids.begin(), s.clean_ids.end());
  return s;
}

void save_split(const UnpairedSplit& s, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot open for write: " + path.string());
  out << json{{"seed", s.seed},
              {"underwater_ids", s.underwater_ids},
              {"clean_ids", s.clean_ids}}
             .dump(2)
      << "\n";
}

UnpairedSplit load_split(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open split: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ValidationError("malformed split file " + path.string() + ": " +
                          e.what());
  }
  UnpairedSplit s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.underwater_ids = j.at("underwater_ids").get<std::vector<std::string>>();
  s.clean_ids = j.at("clean_ids").get<std::vector<std::string>>();
  for (const auto& id : s.underwater_ids)
    if (std::find(s.clean_ids.begin(), s.clean_ids.end(), id) !=
        s.clean_ids.end())
      throw ValidationError("split sides overlap on id '" + id + "'");
  return s;
}

PatchSampler::PatchSampler(const DatasetManifest& manifest,
                           const UnpairedSplit& split,
                           std::size_t cache_capacity)
    : manifest_(&manifest),
      underwater_ids_(split.underwater_ids),
      clean_ids_(split.clean_ids),
      cache_capacity_(cache_capacity) {
  for (const auto& r : manifest.records) by_id_.emplace(r.id, &r);
  for (const auto& id : underwater_ids_)
    if (!by_id_.count(id))
      throw ValidationError("split id '" + id + "' not in manifest");
  for (const auto& id : clean_ids_)
    if (!by_id_.count(id))
      throw ValidationError("split id '" + id + "' not in manifest");
}

const Tensor& PatchSampler::cached_image(const std::string& id,
                                         bool underwater_side,
                                         std::size_t patch) {
  const std::string key = (underwater_side ? "u:" : "c:") + id + ":" +
                          std::to_string(patch);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;

  const ManifestRecord* rec = by_id_.at(id);
  Tensor img = load_image(underwater_side ? rec->underwater_path
                                          : rec->clean_path);
  const Shape4& s = img.shape();
  if (s.h < patch || s.w < patch) {
    const Scalar scale = std::max(static_cast<Scalar>(patch) / s.h,
                                  static_cast<Scalar>(patch) / s.w);
    const auto new_h = std::max<std::size_t>(
        patch, static_cast<std::size_t>(std::ceil(s.h * scale)));
    const auto new_w = std::max<std::size_t>(
        patch, static_cast<std::size_t>(std::ceil(s.w * scale)));
    img = resize_bicubic(img, new_h, new_w);
  }
  if (cache_.size() >= cache_capacity_ && !cache_order_.empty()) {
    cache_.erase(cache_order_.front());
    cache_order_.erase(cache_order_.begin());
  }
  cache_order_.push_back(key);
  return cache_.emplace(key, std::move(img)).first->second;
}

Tensor PatchSampler::patch_from(const std::string& id, bool underwater_side,
                                std::size_t patch, Rng& rng) {
  const Tensor& img = cached_image(id, underwater_side, patch);
  const Shape4& s = img.shape();
  const std::size_t oy = rng.index(s.h - patch + 1);
  const std::size_t ox = rng.index(s.w - patch + 1);
  Tensor out({1, 3, patch, patch});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < patch; ++y)
      for (std::size_t x = 0; x < patch; ++x)
        out.at(0, c, y, x) = img.at(0, c, oy + y, ox + x);
  return out;
}

UnpairedBatch PatchSampler::sample_patch_batch(std::size_t patch,
                                               std::size_t batch, Rng& rng) {
  if (patch == 0 || batch == 0)
    throw ValidationError("sample_patch_batch: patch and batch must be > 0");
  if (underwater_ids_.empty())
    throw ValidationError("sample_patch_batch: underwater side is empty");
  if (clean_ids_.empty())
    throw ValidationError("sample_patch_batch: clean side is empty");

  UnpairedBatch b;
  b.underwater = Tensor({batch, 3, patch, patch});
  b.clean = Tensor({batch, 3, patch, patch});
  for (std::size_t i = 0; i < batch; ++i) {
    const std::string& id = underwater_ids_[rng.index(underwater_ids_.size())];
    set_sample(b.underwater, i, patch_from(id, true, patch, rng));
    b.underwater_ids.push_back(id);
  }
  for (std::size_t i = 0; i < batch; ++i) {
    const std::string& id = clean_ids_[rng.index(clean_ids_.size())];
    set_sample(b.clean, i, patch_from(id, false, patch, rng));
    b.clean_ids.push_back(id);
  }
  return b;
}

void DegradationParams::validate() const {
  for (Scalar a : attenuation)
    if (!(a > 0.0 && a <= 1.0))
      throw ValidationError("attenuation components must lie in (0, 1]");
  if (attenuation[0] > attenuation[1] || attenuation[0] > attenuation[2])
    throw ValidationError(
        "red attenuation must not exceed green or blue attenuation");
  for (Scalar b : background)
    if (!(b >= 0.0 && b <= 1.0))
      throw ValidationError("background components must lie in [0, 1]");
  if (!(transmission_smoothness > 0.0))
    throw ValidationError("transmission_smoothness must be positive");
  if (!(transmission_min <= transmission_max && transmission_min >= 0.0 &&
        transmission_max <= 1.0))
    throw ValidationError("transmission range must satisfy 0 <= min <= max <= 1");
}

Tensor transmission_map(std::size_t h, std::size_t w,
                        const DegradationParams& params, Rng& rng) {
  params.validate();
  if (params.transmission_min == params.transmission_max)
    return Tensor::full({1, 1, h, w}, params.transmission_min);

  const auto cells_h = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(h / params.transmission_smoothness)) + 1);
  const auto cells_w = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::ceil(w / params.transmission_smoothness)) + 1);
  Tensor grid({1, 1, cells_h, cells_w});
  for (std::size_t i = 0; i < grid.numel(); ++i)
    grid[i] = rng.uniform(params.transmission_min, params.transmission_max);

  Tensor out({1, 1, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    const Scalar gy = (h == 1) ? 0.0
                               : static_cast<Scalar>(y) * (cells_h - 1) / (h - 1);
    const std::size_t y0 = std::min<std::size_t>(
        static_cast<std::size_t>(gy), cells_h - 2);
    const Scalar fy = gy - y0;
    for (std::size_t x = 0; x < w; ++x) {
      const Scalar gx = (w == 1) ? 0.0
                                 : static_cast<Scalar>(x) * (cells_w - 1) / (w - 1);
      const std::size_t x0 = std::min<std::size_t>(
          static_cast<std::size_t>(gx), cells_w - 2);
      const Scalar fx = gx - x0;
      const Scalar v00 = grid.at(0, 0, y0, x0), v01 = grid.at(0, 0, y0, x0 + 1);
      const Scalar v10 = grid.at(0, 0, y0 + 1, x0),
                   v11 = grid.at(0, 0, y0 + 1, x0 + 1);
      out.at(0, 0, y, x) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                           fy * ((1 - fx) * v10 + fx * v11);
    }
  }
  return out;
}

Tensor apply_water_model(const Tensor& clean, const Tensor& t_map,
                         const DegradationParams& params) {
  params.validate();
  const Shape4& s = clean.shape();
  if (s.c != 3)
    throw ValidationError("apply_water_model: expected 3-channel image");
  if (t_map.shape().h != s.h || t_map.shape().w != s.w ||
      t_map.shape().c != 1)
    throw ValidationError("apply_water_model: transmission map shape mismatch");
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          const Scalar t = t_map.at(0, 0, y, x);
          const Scalar v = clean.at(n, c, y, x) * t * params.attenuation[c] +
                           params.background[c] * (1.0 - t);
          out.at(n, c, y, x) = std::clamp(v, 0.0, 1.0);
        }
  return out;
}

Tensor synthesize_underwater(const Tensor& clean, const DegradationParams& params,
                             Rng& rng) {
  const Shape4& s = clean.shape();
  return apply_water_model(clean, transmission_map(s.h, s.w, params, rng),
                           params);
}

Tensor synthetic_clean_image(std::size_t h, std::size_t w, Rng& rng) {
  Tensor img({1, 3, h, w});
  // Per-channel affine gradient base.
  for (std::size_t c = 0; c < 3; ++c) {
    const Scalar base = rng.uniform(0.25, 0.75);
    const Scalar dx = rng.uniform(-0.35, 0.35);
    const Scalar dy = rng.uniform(-0.35, 0.35);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img.at(0, c, y, x) = base + dx * (static_cast<Scalar>(x) / w - 0.5) +
                             dy * (static_cast<Scalar>(y) / h - 0.5);
  }
  // Soft ellipses for structure.
  const std::size_t shapes = 3 + rng.index(4);
  for (std::size_t k = 0; k < shapes; ++k) {
    const Scalar cy = rng.uniform(0.1, 0.9) * h;
    const Scalar cx = rng.uniform(0.1, 0.9) * w;
    const Scalar ry = rng.uniform(0.10, 0.35) * h;
    const Scalar rx = rng.uniform(0.10, 0.35) * w;
    const Scalar opacity = rng.uniform(0.5, 1.0);
    const std::array<Scalar, 3> color{rng.uniform(0.0, 1.0),
                                      rng.uniform(0.0, 1.0),
                                      rng.uniform(0.0, 1.0)};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const Scalar dy = (y - cy) / ry, dx = (x - cx) / rx;
        const Scalar r = std::sqrt(dx * dx + dy * dy);
        if (r >= 1.0) continue;
        // Soft edge over the outer 25% of the radius.
        const Scalar edge = std::clamp((1.0 - r) / 0.25, 0.0, 1.0);
        const Scalar alpha = opacity * edge * edge * (3.0 - 2.0 * edge);
        for (std::size_t c = 0; c < 3; ++c)
          img.at(0, c, y, x) =
              (1.0 - alpha) * img.at(0, c, y, x) + alpha * color[c];
      }
  }
  clamp_inplace(img, 0.02, 0.98);
  return img;
}

void write_synthetic_dataset(const std::filesystem::path& root,
                             std::size_t count, std::size_t size,
                             const DegradationParams& params,
                             std::uint64_t seed) {
  params.validate();
  fs::create_directories(root / "clean");
  fs::create_directories(root / "underwater");
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(Rng::mix(seed, i));
    const Tensor clean = synthetic_clean_image(size, size, rng);
    const Tensor uw = synthesize_underwater(clean, params, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "img%05zu.png", i);
    save_image(clean, root / "clean" / name);
    save_image(uw, root / "underwater" / name);
  }
}

}  // namespace uwhdn::datasets
