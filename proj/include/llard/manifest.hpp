// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "llard/common.hpp"

namespace llard {

/// Per-run artifact registry: content hashes for every produced file, the
/// config hash, seeds, timestamps, and the tool version. Downstream commands
/// refuse artifacts whose stored hash no longer matches the bytes on disk.
class RunManifest {
public:
  struct Entry {
    std::string path;
    std::string hash;
  };

  static std::string manifest_path(const std::string& dir) {
    return (std::filesystem::path(dir) / "manifest.json").string();
  }

  static RunManifest load(const std::string& dir) {
    RunManifest m;
    m.dir_ = dir;
    const auto path = manifest_path(dir);
    std::ifstream in(path);
    if (!in) return m;  // absent manifest: empty registry
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": malformed manifest: " + e.what());
    }
    m.config_hash_ = j.value("config_hash", "");
    m.seed_ = j.value("seed", std::uint64_t{0});
    m.created_at_ = j.value("created_at", "");
    const nlohmann::json artifacts =
        j.value("artifacts", nlohmann::json::object());
    for (const auto& [name, entry] : artifacts.items()) {
      m.entries_[name] = Entry{entry.value("path", ""),
                               entry.value("hash", "")};
    }
    return m;
  }

  void set_config_hash(std::string hash) { config_hash_ = std::move(hash); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  const std::string& config_hash() const { return config_hash_; }

  /// Register an artifact by hashing its current bytes.
  void record(const std::string& name, const std::string& path) {
    entries_[name] = Entry{path, hash_file(path).hex()};
  }

  /// Verify a previously recorded artifact; silently passes for names that
  /// were never recorded.
  void verify(const std::string& name, const std::string& path) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) return;
    const auto actual = hash_file(path).hex();
    if (actual != it->second.hash) {
      throw DataError("manifest check failed for `" + name + "`: " + path +
                      " has hash " + actual + ", manifest says " +
                      it->second.hash);
    }
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  void save(const std::string& dir) const {
    nlohmann::json artifacts = nlohmann::json::object();
    for (const auto& [name, entry] : entries_)
      artifacts[name] = {{"path", entry.path}, {"hash", entry.hash}};
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    nlohmann::json j = {
        {"tool", std::string(kToolVersion)},
        {"config_hash", config_hash_},
        {"seed", seed_},
        {"created_at", created_at_.empty() ? stamp : created_at_},
        {"artifacts", artifacts},
    };
    std::ofstream out(manifest_path(dir), std::ios::binary);
    if (!out) throw DataError("cannot write manifest in " + dir);
    out << j.dump(2) << '\n';
  }

  /// Verify `path` against the manifest living in its directory, keyed by
  /// file name. Absent manifests or unknown names pass.
  static void verify_against_sibling_manifest(const std::string& path) {
    namespace fs = std::filesystem;
    const fs::path p(path);
    const auto dir = p.parent_path().empty() ? fs::path(".") : p.parent_path();
    if (!fs::exists(dir / "manifest.json")) return;
    const auto manifest = load(dir.string());
    manifest.verify(p.filename().string(), path);
  }

private:
  std::string dir_;
  std::string config_hash_;
  std::uint64_t seed_ = 0;
  std::string created_at_;
  std::map<std::string, Entry> entries_;
};

}  // namespace llard
