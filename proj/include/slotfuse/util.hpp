#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace slotfuse {

// Collects non-fatal anomalies from parsing and feature extraction.
// Stages log here instead of printing so callers control the sink.
struct Diagnostics {
  std::vector<std::string> warnings;
  std::vector<std::string> notes;  // informational, not surfaced as warnings
  std::size_t missing_provenance_docs = 0;  // similarity fallback counter
  std::size_t unlabeled_candidates = 0;     // candidates absent from the key

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
  void note(std::string msg) { notes.push_back(std::move(msg)); }
  std::size_t warning_count() const { return warnings.size(); }
};

// Union-find over indices 0..n-1 with path compression; used for alias
// grouping and NIL cluster merging.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& data);
std::string sha256_file_hex(const std::filesystem::path& path);

}  // namespace slotfuse
