// Parsers and writers for every external file format: run files, query
// XML, key files, alias tables and the plain-text corpus.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "slotfuse/core.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

enum class RunFormat {
  V2014,  // seven columns, two provenances (relation + filler)
  V2013,  // eight columns, three provenances (filler + entity + justification)
};

struct RunParseOptions {
  RunFormat format = RunFormat::V2014;
  bool strict = false;  // unknown slot: error instead of warn-and-skip
};

struct RunFile {
  std::string run_id;
  std::string team_id;
  std::vector<ResponseLine> lines;
};

// Team identity defaults to the run_id prefix before the first underscore.
std::string team_of_run(const std::string& run_id);

RunFile parse_run_file(std::istream& in, const std::string& source_name,
                       const SlotRegistry& registry, const RunParseOptions& options,
                       Diagnostics& diag);
RunFile parse_run_file(const std::filesystem::path& path, const SlotRegistry& registry,
                       const RunParseOptions& options, Diagnostics& diag);

// Seven-column TSV; NIL rows emit four columns; confidence fixed at six
// decimals. parse(write(x)) reproduces x field-for-field.
void write_run_file(std::ostream& out, const std::vector<ResponseLine>& lines);
std::string write_run_file(const std::vector<ResponseLine>& lines);

// Query XML: <query id=...> elements with name/docid/beg/end/enttype and
// slot0, slot1, ... children. Queries without slot children expand to all
// registered slots for their entity type.
std::vector<Query> parse_queries(const std::string& xml_text, const SlotRegistry& registry);
std::string write_queries(const std::vector<Query>& queries);

// Key TSV: query_id, slot, fill, C|W, with an optional fifth origin
// column P|M (absent means pooled).
std::vector<KeyEntry> parse_key(std::istream& in, const std::string& source_name);
std::vector<KeyEntry> parse_key(const std::filesystem::path& path);
std::string write_key(const std::vector<KeyEntry>& entries);

struct AliasCount {
  std::string alias;
  std::int64_t count = 0;
};

// Precomputed anchor-text alias table: canonical -> top-N aliases by count.
class AliasTable {
 public:
  static constexpr int kDefaultTopN = 10;

  void insert(const std::string& canonical, const std::string& alias, std::int64_t count);
  void finalize(int n_max);  // sort by count desc (ties lexicographic) and truncate

  // Empty list when the canonical form is absent.
  const std::vector<AliasCount>& aliases(const std::string& canonical) const;
  bool empty() const { return table_.empty(); }
  std::size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::vector<AliasCount>> table_;
};

AliasTable load_alias_table(std::istream& in, const std::string& source_name,
                            int n_max = AliasTable::kDefaultTopN);
AliasTable load_alias_table(const std::filesystem::path& path,
                            int n_max = AliasTable::kDefaultTopN);

// Term-frequency index over a directory of <doc_id>.txt files.
// Tokenization: lowercase, split on any non-alphanumeric run.
class CorpusIndex {
 public:
  using TermCounts = std::map<std::string, int>;

  void add_document(const std::string& doc_id, const std::string& text);

  bool has_document(const std::string& doc_id) const;
  const TermCounts* document(const std::string& doc_id) const;
  int document_count() const { return static_cast<int>(docs_.size()); }
  int document_frequency(const std::string& term) const;

  static std::vector<std::string> tokenize(std::string_view text);

 private:
  std::map<std::string, TermCounts> docs_;
  std::map<std::string, int> df_;
};

CorpusIndex build_corpus_index(const std::filesystem::path& directory, int jobs = 1);

}  // namespace slotfuse
