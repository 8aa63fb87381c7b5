// Shared scaffolding for the unit tests: scratch directories and quick
// builders for response lines and key entries.
#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "slotfuse/core.hpp"

namespace testutil {

// Scratch directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("slotfuse_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter_++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  static inline int counter_ = 0;
  std::filesystem::path path_;
};

inline slotfuse::ResponseLine line(std::string qid, std::string slot, std::string run,
                                   std::string fill, double conf, std::string doc,
                                   std::int64_t start, std::int64_t end) {
  slotfuse::ResponseLine l;
  l.query_id = std::move(qid);
  l.slot = std::move(slot);
  l.run_id = std::move(run);
  l.filler = std::move(fill);
  l.confidence = conf;
  l.filler_provenance = slotfuse::Provenance{doc, {{start, end}}};
  l.relation_provenance =
      slotfuse::Provenance{std::move(doc), {{start > 12 ? start - 12 : 0, end + 6}}};
  return l;
}

inline slotfuse::ResponseLine nil_line(std::string qid, std::string slot, std::string run) {
  slotfuse::ResponseLine l;
  l.query_id = std::move(qid);
  l.slot = std::move(slot);
  l.run_id = std::move(run);
  l.nil = true;
  return l;
}

inline slotfuse::KeyEntry entry(std::string qid, std::string slot, std::string fill, bool correct,
                                slotfuse::KeyOrigin origin = slotfuse::KeyOrigin::POOLED) {
  slotfuse::KeyEntry e;
  e.query_id = std::move(qid);
  e.slot = std::move(slot);
  e.fill_norm = std::move(fill);
  e.correct = correct;
  e.origin = origin;
  return e;
}

}  // namespace testutil
