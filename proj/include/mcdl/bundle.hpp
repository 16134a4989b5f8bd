#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "json.hpp"
#include "mcdl/config.hpp"
#include "mcdl/pipeline.hpp"

namespace mcdl {

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw ComputationError("sha256 digest failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

/// File name -> contents for every file of a model bundle except the manifest.
/// Output is a pure function of the pipeline, so equal pipelines give
/// byte-identical bundles.
inline std::map<std::string, std::string> bundle_files(const TrainedPipeline& p) {
  std::map<std::string, std::string> files;
  files["config.txt"] = serialize_config(p.config);
  files["norm.json"] = nlohmann::json{{"feature_names", p.feature_names},
                                      {"target_name", p.target_name},
                                      {"features", norm_json(p.features)},
                                      {"target", norm_json(p.target)}}
                           .dump(2) +
                       "\n";
  files["tree.json"] = nlohmann::json(p.tree).dump(2) + "\n";
  files["graph.json"] = nlohmann::json{{"neighborhood_k", p.config.mcdm.neighborhood_k},
                                       {"K", p.config.mcdm.effective_K()},
                                       {"weighting", to_string(p.config.mcdm.weighting)}}
                            .dump(2) +
                        "\n";
  for (std::size_t l = 0; l < p.leaf_models.size(); ++l) {
    char name[32];
    std::snprintf(name, sizeof(name), "leaf_%03zu.json", l);
    files[name] = nlohmann::json{{"leaf_id", l}, {"model", p.leaf_models[l]}, {"train_report", report_json(p.leaf_reports[l])}}
                      .dump(2) +
                  "\n";
  }
  return files;
}

inline std::string bundle_manifest(const std::map<std::string, std::string>& files) {
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& [name, body] : files) hashes[name] = sha256_hex(body);
  return nlohmann::json{{"format", "mcdl-bundle"}, {"version", 1}, {"files", hashes}}.dump(2) + "\n";
}

/// Digest over the whole bundle content.
inline std::string pipeline_digest(const TrainedPipeline& p) { return sha256_hex(bundle_manifest(bundle_files(p))); }

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_bundle(const std::filesystem::path& dir, const TrainedPipeline& p) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create bundle directory '" + dir.string() + "': " + ec.message());
  const auto files = bundle_files(p);
  for (const auto& [name, body] : files) write_text_file(dir / name, body);
  write_text_file(dir / "manifest.json", bundle_manifest(files));
}

/// Reads and hash-verifies a bundle written by `write_bundle`.
inline TrainedPipeline read_bundle(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("bundle directory '" + dir.string() + "' does not exist");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bundle manifest unreadable: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "mcdl-bundle") throw IoError("'" + dir.string() + "' is not a model bundle");

  std::map<std::string, std::string> files;
  for (const auto& [name, hash] : manifest.at("files").items()) {
    files[name] = read_text_file(dir / name);
    if (sha256_hex(files[name]) != hash.get<std::string>()) {
      throw IoError("bundle file '" + name + "' does not match its manifest hash");
    }
  }
  auto need = [&](const std::string& name) -> const std::string& {
    auto it = files.find(name);
    if (it == files.end()) throw IoError("bundle is missing '" + name + "'");
    return it->second;
  };

  TrainedPipeline p;
  try {
    p.config = parse_config(need("config.txt"));
    const auto norm = nlohmann::json::parse(need("norm.json"));
    norm.at("feature_names").get_to(p.feature_names);
    norm.at("target_name").get_to(p.target_name);
    p.features = norm_from_json(norm.at("features"));
    p.target = norm_from_json(norm.at("target"));
    p.tree = nlohmann::json::parse(need("tree.json")).get<ClusterTree>();
    for (std::size_t l = 0; l < p.tree.leaf_count(); ++l) {
      char name[32];
      std::snprintf(name, sizeof(name), "leaf_%03zu.json", l);
      const auto leaf = nlohmann::json::parse(need(name));
      p.leaf_models.push_back(leaf.at("model").get<Mlp>());
      p.leaf_reports.push_back(report_from_json(leaf.at("train_report")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bundle '" + dir.string() + "' is malformed: " + e.what());
  } catch (const Error& e) {
    throw IoError("bundle '" + dir.string() + "' is invalid: " + e.what());
  }
  if (p.tree.dim != p.features.dim()) throw IoError("bundle tree dimension does not match normalization");
  for (const auto& m : p.leaf_models) {
    if (m.input_dim() != p.features.dim() || m.output_dim() != 1) throw IoError("bundle leaf model has wrong shape");
  }
  return p;
}

}  // namespace mcdl
