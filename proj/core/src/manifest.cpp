#include "zoneprobe/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "zoneprobe/version.hpp"

namespace zoneprobe {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a_64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::uint64_t fnv1a_64(const std::string& text) { return fnv1a_64(text.data(), text.size()); }

std::string checksum_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string file_checksum_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checksum: cannot read \"" + path + "\"");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checksum_hex(fnv1a_64(buffer.str()));
}

std::string iso8601_utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::string run_manifest_to_json(const RunManifest& manifest) {
  json inputs = json::object();
  for (const auto& [path, checksum] : manifest.inputs) inputs[path] = checksum;
  json config = nullptr;
  if (!manifest.config_json.empty()) {
    try {
      config = json::parse(manifest.config_json);
    } catch (const json::parse_error&) {
      config = manifest.config_json;  // keep verbatim when not valid JSON
    }
  }
  return json{{"command", manifest.command},
              {"argv", manifest.argv},
              {"config", config},
              {"inputs", inputs},
              {"seeds", manifest.seeds},
              {"version", manifest.version.empty() ? std::string(kVersion) : manifest.version},
              {"started_at", manifest.started_at},
              {"finished_at", manifest.finished_at}}
      .dump(1);
}

RunManifest run_manifest_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("manifest: expected an object");
  RunManifest m;
  m.command = j.value("command", "");
  if (j.contains("argv")) m.argv = j["argv"].get<std::vector<std::string>>();
  if (j.contains("config") && !j["config"].is_null())
    m.config_json = j["config"].is_string() ? j["config"].get<std::string>() : j["config"].dump(1);
  if (j.contains("inputs"))
    for (const auto& [path, checksum] : j["inputs"].items())
      m.inputs[path] = checksum.get<std::string>();
  if (j.contains("seeds")) m.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  m.version = j.value("version", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  return m;
}

OutputStager::OutputStager(std::string target_dir) : target_(std::move(target_dir)) {
  if (target_.empty()) throw std::invalid_argument("output: target directory must be named");
  if (fs::exists(target_))
    throw std::runtime_error("output: \"" + target_ + "\" already exists; refusing to overwrite");
  staging_ = target_ + ".staging";
  // A staging directory can only be debris from a crashed run; reclaim it.
  std::error_code ec;
  fs::remove_all(staging_, ec);
  if (!fs::create_directories(staging_))
    throw std::runtime_error("output: cannot create staging directory \"" + staging_ + "\"");
}

OutputStager::~OutputStager() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }
}

std::string OutputStager::path(const std::string& filename) const {
  return (fs::path(staging_) / filename).string();
}

void OutputStager::write_file(const std::string& filename, const std::string& content) {
  if (committed_) throw std::logic_error("output: staging already committed");
  const std::string full = path(filename);
  fs::create_directories(fs::path(full).parent_path());
  std::ofstream out(full, std::ios::binary);
  if (!out) throw std::runtime_error("output: cannot write \"" + full + "\"");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.close();
  if (!out) throw std::runtime_error("output: failed writing \"" + full + "\"");
}

void OutputStager::commit() {
  if (committed_) throw std::logic_error("output: staging already committed");
  std::error_code ec;
  fs::rename(staging_, target_, ec);
  if (ec)
    throw std::runtime_error("output: cannot move staged results to \"" + target_ +
                             "\": " + ec.message());
  committed_ = true;
}

}  // namespace zoneprobe
