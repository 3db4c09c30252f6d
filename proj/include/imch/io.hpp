#pragma once

// Persistence: binary field checkpoints with a JSON sidecar, CSV tables that
// carry the config hash in a comment header, and the canonical config hash.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "imch/field.hpp"

namespace imch {

using Json = nlohmann::json;

/// FNV-1a 64-bit over the canonical (sorted-key, compact) JSON dump, as 16 hex digits.
std::string config_hash(const Json& config);

/// "IMCH", u32 version = 1, u32 M, then (re, im) little-endian f64 pairs for
/// l1, l2, l3 each ascending from -M/2 + 1 to M/2. Writes `<path>.json` next to it.
void write_checkpoint(const std::filesystem::path& path, const SpectralField& u, const Json& metadata);
SpectralField read_checkpoint(const std::filesystem::path& path);

/// CSV with a leading "# config_hash=<hash>" line and %.17g numbers.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& hash, const std::vector<std::string>& columns);

  void row(const std::vector<double>& values);
  void close();

 private:
  std::ofstream out_;
  std::size_t columns_;
};

std::string format_double(double v);

/// Reads a whole file; io error when missing.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace imch
