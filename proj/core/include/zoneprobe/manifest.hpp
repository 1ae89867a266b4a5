#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace zoneprobe {

std::uint64_t fnv1a_64(const void* data, std::size_t size);
std::uint64_t fnv1a_64(const std::string& text);
std::string checksum_hex(std::uint64_t value);           // 16 lowercase hex digits
std::string file_checksum_hex(const std::string& path);  // throws when unreadable

std::string iso8601_utc_now();

// Reproducibility sidecar written beside every command's outputs. Timestamps
// vary run to run, so byte-identity comparisons skip this file.
struct RunManifest {
  std::string command;                        // resolved argv, space-joined
  std::vector<std::string> argv;              // resolved argv, replay input
  std::string config_json;                    // fully resolved configuration
  std::map<std::string, std::string> inputs;  // input path -> content checksum
  std::vector<std::uint64_t> seeds;
  std::string version;
  std::string started_at;
  std::string finished_at;
};

std::string run_manifest_to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const std::string& json_text);

// Stages output files in a temporary sibling of the target directory and
// renames the whole directory into place on commit, so a failed run leaves
// nothing behind at the target path.
class OutputStager {
 public:
  explicit OutputStager(std::string target_dir);  // throws when target exists
  ~OutputStager();  // removes the staging directory when commit() never ran

  OutputStager(const OutputStager&) = delete;
  OutputStager& operator=(const OutputStager&) = delete;

  const std::string& target_dir() const { return target_; }
  const std::string& staging_dir() const { return staging_; }
  std::string path(const std::string& filename) const;
  void write_file(const std::string& filename, const std::string& content);
  void commit();

 private:
  std::string target_;
  std::string staging_;
  bool committed_ = false;
};

}  // namespace zoneprobe
