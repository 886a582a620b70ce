#include "stackvs/dataset.hpp"

#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "json.hpp"
#include "stackvs/errors.hpp"
#include "stackvs/metrics.hpp"

namespace stackvs {

namespace fs = std::filesystem;
using json = nlohmann::json;
using detail::Bytes;

namespace {

constexpr char kFeatureMagic[] = "SVSF";
constexpr std::uint32_t kFeatureVersion = 1;
constexpr char kManifestFormat[] = "stackvs-dataset";
constexpr int kManifestVersion = 1;

json sidecar(const std::string& name, std::uint32_t crc) { return {{"path", name}, {"crc32", crc}}; }

struct Sidecar {
  fs::path path;
  std::uint32_t crc = 0;
  Bytes bytes;

  void verify() const {
    const auto got = detail::crc32_of(bytes);
    if (got != crc) {
      throw FormatError("checksum mismatch for " + path.string() + ": manifest says " + std::to_string(crc) +
                        ", file has " + std::to_string(got));
    }
  }
};

Sidecar read_sidecar(const json& manifest, const char* key, const fs::path& base) {
  if (!manifest.contains(key) || !manifest[key].is_object()) {
    throw FormatError(std::string("manifest lacks the '") + key + "' entry");
  }
  Sidecar s;
  try {
    s.path = base / manifest[key].at("path").get<std::string>();
    s.crc = manifest[key].at("crc32").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest entry '") + key + "': " + e.what());
  }
  s.bytes = detail::read_file(s.path);
  return s;
}

}  // namespace

void Dataset::validate() const {
  if (n_v == 0 || d_v == 0 || n_e == 0) throw DataError("dataset dimensions must be positive");
  if (records.empty()) throw DataError("dataset has no records");
  for (const auto& r : records) {
    const std::string who = "record '" + r.image_id + "'";
    if (r.image_id.empty()) throw DataError("record with an empty image_id");
    if (r.features.shape() != Shape{n_v, d_v}) {
      throw DataError(who + ": features " + shape_string(r.features.shape()) + " do not match N_v x d_v = [" +
                      std::to_string(n_v) + "x" + std::to_string(d_v) + "]");
    }
    if (!r.features.all_finite()) throw DataError(who + ": non-finite feature value");
    if (r.attribute_ids.size() != n_e) {
      throw DataError(who + ": " + std::to_string(r.attribute_ids.size()) + " attribute ids, expected " +
                      std::to_string(n_e));
    }
    for (auto a : r.attribute_ids) {
      if (a >= attributes.size()) {
        throw DataError(who + ": attribute id " + std::to_string(a) + " outside a vocabulary of " +
                        std::to_string(attributes.size()));
      }
    }
    if (r.references.empty()) throw DataError(who + ": no reference captions");
  }
}

const DatasetRecord& Dataset::find(const std::string& image_id) const {
  for (const auto& r : records) {
    if (r.image_id == image_id) return r;
  }
  throw DataError("no record with image_id '" + image_id + "'");
}

fs::path save_dataset(const Dataset& data, const fs::path& dir, const std::string& stem) {
  data.validate();
  fs::create_directories(dir);

  Bytes features;
  detail::put_bytes(features, std::string_view(kFeatureMagic, 4));
  detail::put_le<std::uint32_t>(features, kFeatureVersion);
  detail::put_le<std::uint32_t>(features, static_cast<std::uint32_t>(data.n_v));
  detail::put_le<std::uint32_t>(features, static_cast<std::uint32_t>(data.d_v));
  detail::put_le<std::uint32_t>(features, static_cast<std::uint32_t>(data.records.size()));
  std::string records;
  for (const auto& r : data.records) {
    const auto hash = detail::md5_of(r.image_id);
    features.insert(features.end(), hash.begin(), hash.end());
    for (std::size_t i = 0; i < r.features.size(); ++i) detail::put_f32(features, static_cast<float>(r.features[i]));
    records += json{{"image_id", r.image_id}, {"attribute_ids", r.attribute_ids}, {"references", r.references}}.dump();
    records += '\n';
  }
  const std::string attributes = json(data.attributes).dump() + "\n";

  const std::string features_name = stem + ".svsf";
  const std::string records_name = stem + ".jsonl";
  const std::string attributes_name = stem + ".attributes.json";
  detail::write_file(dir / features_name, features);
  detail::write_text(dir / records_name, records);
  detail::write_text(dir / attributes_name, attributes);

  json manifest = {{"format", kManifestFormat},
                   {"version", kManifestVersion},
                   {"n_v", data.n_v},
                   {"d_v", data.d_v},
                   {"n_e", data.n_e},
                   {"record_count", data.records.size()},
                   {"features", sidecar(features_name, detail::crc32_of(features))},
                   {"records", sidecar(records_name, detail::crc32_of(records))},
                   {"attributes", sidecar(attributes_name, detail::crc32_of(attributes))}};
  const fs::path manifest_path = dir / (stem + ".manifest.json");
  detail::write_text(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

Dataset load_dataset(const fs::path& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(detail::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  const fs::path base = manifest_path.parent_path();

  Dataset data;
  std::size_t count = 0;
  try {
    if (manifest.value("format", "") != kManifestFormat) throw FormatError("not a stackvs dataset manifest");
    if (manifest.at("version").get<int>() != kManifestVersion) {
      throw FormatError("unsupported manifest version " + manifest.at("version").dump());
    }
    data.n_v = manifest.at("n_v").get<std::size_t>();
    data.d_v = manifest.at("d_v").get<std::size_t>();
    data.n_e = manifest.at("n_e").get<std::size_t>();
    count = manifest.at("record_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }

  const Sidecar feature_file = read_sidecar(manifest, "features", base);
  const Sidecar record_file = read_sidecar(manifest, "records", base);
  const Sidecar attribute_file = read_sidecar(manifest, "attributes", base);
  const Bytes& features = feature_file.bytes;
  const Bytes& records = record_file.bytes;
  const Bytes& attributes = attribute_file.bytes;

  // Header and length first, so truncation is reported with its position
  // rather than as a checksum mismatch.
  detail::Reader in(features, "feature file");
  if (in.bytes(4) != std::string_view(kFeatureMagic, 4)) throw FormatError("feature file: bad magic (expected SVSF)");
  if (auto v = in.le<std::uint32_t>(); v != kFeatureVersion) {
    throw FormatError("feature file: unsupported version " + std::to_string(v));
  }
  const auto n_v = in.le<std::uint32_t>(), d_v = in.le<std::uint32_t>(), n = in.le<std::uint32_t>();
  if (n_v != data.n_v || d_v != data.d_v) {
    throw FormatError("feature file holds " + std::to_string(n_v) + "x" + std::to_string(d_v) +
                      " records but the manifest declares N_v x d_v = " + std::to_string(data.n_v) + "x" +
                      std::to_string(data.d_v));
  }
  if (n != count) {
    throw FormatError("feature file holds " + std::to_string(n) + " records, manifest declares " +
                      std::to_string(count));
  }
  const std::size_t expected = 20 + count * (16 + 4 * data.n_v * data.d_v);
  if (features.size() < expected) {
    throw FormatError("feature file truncated at byte " + std::to_string(features.size()) + " (expected " +
                      std::to_string(expected) + " bytes)");
  }
  feature_file.verify();
  record_file.verify();
  attribute_file.verify();
  try {
    data.attributes = json::parse(attributes.begin(), attributes.end()).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("attribute vocabulary: ") + e.what());
  }

  std::istringstream lines(std::string(records.begin(), records.end()));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(lines, line)) {
    ++line_no;
    if (line.empty()) continue;
    DatasetRecord r;
    try {
      const json j = json::parse(line);
      r.image_id = j.at("image_id").get<std::string>();
      r.attribute_ids = j.at("attribute_ids").get<std::vector<std::size_t>>();
      r.references = j.at("references").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw FormatError("records line " + std::to_string(line_no) + ": " + e.what());
    }
    if (data.records.size() == count)
      throw FormatError("records file has more than " + std::to_string(count) + " lines");

    const std::size_t at = in.position();
    const auto hash = detail::md5_of(r.image_id);
    if (in.bytes(16) != std::string_view(reinterpret_cast<const char*>(hash.data()), 16)) {
      throw FormatError("feature record at byte " + std::to_string(at) + " does not belong to image '" + r.image_id +
                        "'");
    }
    r.features = Tensord(Shape{data.n_v, data.d_v});
    for (std::size_t i = 0; i < r.features.size(); ++i) {
      const float f = in.f32();
      if (!std::isfinite(f)) throw DataError("image '" + r.image_id + "': non-finite feature value");
      r.features[i] = f;
    }
    data.records.push_back(std::move(r));
  }
  if (data.records.size() != count) {
    throw FormatError("records file has " + std::to_string(data.records.size()) + " lines, manifest declares " +
                      std::to_string(count));
  }
  if (in.remaining() != 0) {
    throw FormatError("feature file has " + std::to_string(in.remaining()) + " trailing bytes at byte " +
                      std::to_string(in.position()));
  }
  data.validate();
  return data;
}

std::vector<std::vector<std::vector<std::string>>> tokenized_references(const Dataset& data) {
  std::vector<std::vector<std::vector<std::string>>> out;
  for (const auto& r : data.records) {
    auto& refs = out.emplace_back();
    for (const auto& c : r.references) refs.push_back(tokenize(c));
  }
  return out;
}

}  // namespace stackvs
