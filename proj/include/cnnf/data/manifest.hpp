#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cnnf/data/dataset.hpp"
#include "cnnf/error.hpp"

namespace cnnf {

inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = {{"id", e.id},
       {"path", e.path},
       {"label", e.label},
       {"provenance", to_string(e.provenance)},
       {"transform", to_string(e.transform)}};
}

inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  e.id = j.at("id").get<std::string>();
  e.path = j.at("path").get<std::string>();
  e.label = j.at("label").get<std::string>();
  e.provenance = parse_provenance(j.at("provenance").get<std::string>());
  e.transform = parse_transform(j.at("transform").get<std::string>());
}

inline void to_json(nlohmann::json& j, const SplitManifest& m) {
  j = {{"seed", m.seed}, {"train_fraction", m.train_fraction}, {"train", m.train},
       {"val", m.val},   {"test", m.test},                     {"warnings", m.warnings}};
}

inline void from_json(const nlohmann::json& j, SplitManifest& m) {
  m.seed = j.at("seed").get<std::uint64_t>();
  m.train_fraction = j.at("train_fraction").get<double>();
  m.train = j.at("train").get<std::vector<ManifestEntry>>();
  m.val = j.at("val").get<std::vector<ManifestEntry>>();
  m.test = j.value("test", std::vector<ManifestEntry>{});
  m.warnings = j.value("warnings", std::vector<std::string>{});
}

inline std::string manifest_to_string(const SplitManifest& m) { return nlohmann::json(m).dump(2) + "\n"; }

inline SplitManifest manifest_from_string(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<SplitManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
}

inline SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_string(ss.str());
}

}  // namespace cnnf
