#include "slotfuse/ingest.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "slotfuse/parallel.hpp"
#include "slotfuse/text.hpp"

namespace slotfuse {

namespace {

// Splits raw text into lines, tolerating \r\n and a missing trailing newline.
std::vector<std::string_view> text_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      std::string_view line = text.substr(start, i - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      lines.push_back(line);
      start = i + 1;
    }
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::string read_stream(std::istream& in, const std::string& source_name) {
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw ParseError("read failed: " + source_name);
  return buf.str();
}

[[noreturn]] void line_error(const std::string& source, std::size_t line_no, const std::string& msg) {
  throw ParseError(source + ":" + std::to_string(line_no) + ": " + msg);
}

}  // namespace

std::string team_of_run(const std::string& run_id) {
  const auto underscore = run_id.find('_');
  return underscore == std::string::npos ? run_id : run_id.substr(0, underscore);
}

RunFile parse_run_file(std::istream& in, const std::string& source_name,
                       const SlotRegistry& registry, const RunParseOptions& options,
                       Diagnostics& diag) {
  const std::string text = read_stream(in, source_name);
  const auto lines = text_lines(text);

  RunFile run;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto cols = split(lines[i], '\t');

    const std::size_t full_width = options.format == RunFormat::V2014 ? 7 : 8;
    const bool nil_row = cols.size() >= 4 && trim(cols[3]) == "NIL";
    if (nil_row) {
      // NIL rows carry four columns; trailing empty columns are tolerated.
      if (cols.size() != 4 && cols.size() != full_width) {
        line_error(source_name, line_no,
                   "expected 4 or " + std::to_string(full_width) + " columns, got " +
                       std::to_string(cols.size()));
      }
      for (std::size_t c = 4; c < cols.size(); ++c) {
        if (!trim(cols[c]).empty()) {
          line_error(source_name, line_no, "NIL row with non-empty column " + std::to_string(c + 1));
        }
      }
    } else if (cols.size() != full_width) {
      line_error(source_name, line_no,
                 "expected " + std::to_string(full_width) + " columns, got " +
                     std::to_string(cols.size()));
    }

    ResponseLine line;
    line.query_id = std::string(trim(cols[0]));
    line.slot = std::string(trim(cols[1]));
    line.run_id = std::string(trim(cols[2]));
    if (line.query_id.empty() || line.slot.empty() || line.run_id.empty()) {
      line_error(source_name, line_no, "empty query id, slot or run id");
    }

    if (!registry.contains(line.slot)) {
      if (options.strict) line_error(source_name, line_no, "unknown slot '" + line.slot + "'");
      diag.warn(source_name + ":" + std::to_string(line_no) + ": skipping unknown slot '" +
                line.slot + "'");
      continue;
    }

    if (nil_row) {
      line.nil = true;
    } else {
      try {
        if (options.format == RunFormat::V2014) {
          // qid, slot, run, relation prov, filler, filler prov, confidence
          line.relation_provenance = Provenance::parse(cols[3]);
          line.filler = std::string(trim(cols[4]));
          line.filler_provenance = Provenance::parse(cols[5]);
        } else {
          // 2013 layout: qid, slot, run, filler prov, entity prov,
          // justification prov, filler, confidence. Only the filler
          // provenance is used for features; the justification column is
          // retained as the relation provenance. Assumed order, see README.
          line.filler_provenance = Provenance::parse(cols[3]);
          Provenance::parse(cols[4]);  // entity provenance: validated, not retained
          line.relation_provenance = Provenance::parse(cols[5]);
          line.filler = std::string(trim(cols[6]));
        }
      } catch (const ParseError& err) {
        line_error(source_name, line_no, err.what());
      }
      if (line.filler.empty()) line_error(source_name, line_no, "empty filler in non-NIL row");
      const auto conf = parse_double(cols[full_width - 1]);
      if (!conf) line_error(source_name, line_no, "unparseable confidence");
      line.confidence = *conf;
      if (line.confidence < 0.0 || line.confidence > 1.0) {
        diag.warn(source_name + ":" + std::to_string(line_no) + ": confidence " +
                  format_exact(line.confidence) + " clamped to [0,1]");
        line.confidence = std::clamp(line.confidence, 0.0, 1.0);
      }
    }

    if (run.lines.empty()) {
      run.run_id = line.run_id;
      run.team_id = team_of_run(line.run_id);
    } else if (line.run_id != run.run_id) {
      line_error(source_name, line_no,
                 "run id '" + line.run_id + "' differs from '" + run.run_id + "'");
    }
    run.lines.push_back(std::move(line));
  }
  return run;
}

RunFile parse_run_file(const std::filesystem::path& path, const SlotRegistry& registry,
                       const RunParseOptions& options, Diagnostics& diag) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open run file: " + path.string());
  return parse_run_file(in, path.filename().string(), registry, options, diag);
}

void write_run_file(std::ostream& out, const std::vector<ResponseLine>& lines) {
  for (const ResponseLine& line : lines) {
    out << line.query_id << '\t' << line.slot << '\t' << line.run_id << '\t';
    if (line.nil) {
      out << "NIL\n";
    } else {
      out << line.relation_provenance->to_string() << '\t' << line.filler << '\t'
          << line.filler_provenance->to_string() << '\t' << format_fixed(line.confidence, 6)
          << '\n';
    }
  }
}

std::string write_run_file(const std::vector<ResponseLine>& lines) {
  std::ostringstream out;
  write_run_file(out, lines);
  return out.str();
}

namespace {

using boost::property_tree::ptree;

Query parse_query_node(const ptree& node, const SlotRegistry& registry) {
  Query query;
  if (auto id = node.get_optional<std::string>("<xmlattr>.id")) {
    query.id = *id;
  } else {
    throw ParseError("query element without id attribute");
  }

  const auto required = [&](const char* child) {
    auto value = node.get_optional<std::string>(child);
    if (!value) throw ParseError("query " + query.id + " is missing <" + child + ">");
    return std::string(trim(*value));
  };
  query.name = required("name");
  query.doc_id = required("docid");
  const auto beg = parse_int64(required("beg"));
  const auto end = parse_int64(required("end"));
  if (!beg || !end) throw ParseError("query " + query.id + " has unparseable offsets");
  query.span = Span{*beg, *end};
  const auto type = parse_entity_type(required("enttype"));
  if (!type) throw ParseError("query " + query.id + " has unknown entity type");
  query.entity_type = *type;

  // slot0, slot1, ... in index order.
  std::vector<std::pair<int, std::string>> indexed;
  for (const auto& [key, child] : node) {
    if (key.rfind("slot", 0) != 0) continue;
    const std::string suffix = key.substr(4);
    const auto index = suffix.empty() ? std::optional<std::int64_t>(0) : parse_int64(suffix);
    if (!index) continue;
    indexed.emplace_back(static_cast<int>(*index), std::string(trim(child.data())));
  }
  std::stable_sort(indexed.begin(), indexed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [index, slot] : indexed) {
    if (!registry.contains(slot)) {
      throw ParseError("query " + query.id + " lists unknown slot '" + slot + "'");
    }
    query.slots.push_back(std::move(slot));
  }
  if (query.slots.empty()) query.slots = registry.slots_for(query.entity_type);
  return query;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::vector<Query> parse_queries(const std::string& xml_text, const SlotRegistry& registry) {
  ptree doc;
  try {
    std::istringstream in(xml_text);
    boost::property_tree::read_xml(in, doc);
  } catch (const boost::property_tree::xml_parser_error& err) {
    throw ParseError(std::string("query XML: ") + err.what());
  }

  std::vector<Query> queries;
  const auto consume = [&](const ptree& parent) {
    for (const auto& [key, child] : parent) {
      if (key == "query") queries.push_back(parse_query_node(child, registry));
    }
  };
  consume(doc);               // bare <query> document element
  for (const auto& [key, root] : doc) {
    if (key != "query") consume(root);  // <queries> style wrapper
  }

  std::map<std::string, int> seen;
  for (const Query& q : queries) {
    if (++seen[q.id] > 1) throw ParseError("duplicate query id: " + q.id);
  }
  return queries;
}

std::string write_queries(const std::vector<Query>& queries) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<kbpslotfill>\n";
  for (const Query& q : queries) {
    out << "  <query id=\"" << xml_escape(q.id) << "\">\n";
    out << "    <name>" << xml_escape(q.name) << "</name>\n";
    out << "    <docid>" << xml_escape(q.doc_id) << "</docid>\n";
    out << "    <beg>" << q.span.start << "</beg>\n";
    out << "    <end>" << q.span.end << "</end>\n";
    out << "    <enttype>" << to_lower_ascii(to_string(q.entity_type)) << "</enttype>\n";
    for (std::size_t i = 0; i < q.slots.size(); ++i) {
      out << "    <slot" << i << ">" << xml_escape(q.slots[i]) << "</slot" << i << ">\n";
    }
    out << "  </query>\n";
  }
  out << "</kbpslotfill>\n";
  return out.str();
}

std::vector<KeyEntry> parse_key(std::istream& in, const std::string& source_name) {
  const std::string text = read_stream(in, source_name);
  const auto lines = text_lines(text);

  std::vector<KeyEntry> entries;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> seen;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 4 && cols.size() != 5) {
      line_error(source_name, line_no, "expected 4 or 5 columns, got " + std::to_string(cols.size()));
    }
    KeyEntry entry;
    entry.query_id = std::string(trim(cols[0]));
    entry.slot = std::string(trim(cols[1]));
    entry.fill_norm = normalize_fill(cols[2]);
    const auto judgment = trim(cols[3]);
    if (judgment == "C") {
      entry.correct = true;
    } else if (judgment == "W") {
      entry.correct = false;
    } else {
      line_error(source_name, line_no, "unknown judgment code '" + std::string(judgment) + "'");
    }
    if (cols.size() == 5) {
      const auto origin = trim(cols[4]);
      if (origin == "P") {
        entry.origin = KeyOrigin::POOLED;
      } else if (origin == "M") {
        entry.origin = KeyOrigin::MANUAL;
      } else {
        line_error(source_name, line_no, "unknown origin flag '" + std::string(origin) + "'");
      }
    }

    auto key = std::make_tuple(entry.query_id, entry.slot, entry.fill_norm);
    if (auto it = seen.find(key); it != seen.end()) {
      KeyEntry& existing = entries[it->second];
      if (existing.correct != entry.correct) {
        line_error(source_name, line_no,
                   "conflicting judgments for " + entry.query_id + "/" + entry.slot + "/" +
                       entry.fill_norm);
      }
      if (entry.origin == KeyOrigin::POOLED) existing.origin = KeyOrigin::POOLED;
      continue;
    }
    seen.emplace(std::move(key), entries.size());
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<KeyEntry> parse_key(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open key file: " + path.string());
  return parse_key(in, path.filename().string());
}

std::string write_key(const std::vector<KeyEntry>& entries) {
  std::ostringstream out;
  for (const KeyEntry& e : entries) {
    out << e.query_id << '\t' << e.slot << '\t' << e.fill_norm << '\t' << (e.correct ? 'C' : 'W')
        << '\t' << (e.origin == KeyOrigin::POOLED ? 'P' : 'M') << '\n';
  }
  return out.str();
}

void AliasTable::insert(const std::string& canonical, const std::string& alias,
                        std::int64_t count) {
  auto& list = table_[normalize_fill(canonical)];
  const std::string norm_alias = normalize_fill(alias);
  for (AliasCount& existing : list) {
    if (existing.alias == norm_alias) {
      existing.count += count;
      return;
    }
  }
  list.push_back(AliasCount{norm_alias, count});
}

void AliasTable::finalize(int n_max) {
  for (auto& [canonical, list] : table_) {
    std::sort(list.begin(), list.end(), [](const AliasCount& a, const AliasCount& b) {
      if (a.count != b.count) return a.count > b.count;
      return a.alias < b.alias;
    });
    if (n_max >= 0 && list.size() > static_cast<std::size_t>(n_max)) list.resize(n_max);
  }
}

const std::vector<AliasCount>& AliasTable::aliases(const std::string& canonical) const {
  static const std::vector<AliasCount> empty;
  auto it = table_.find(canonical);
  return it == table_.end() ? empty : it->second;
}

AliasTable load_alias_table(std::istream& in, const std::string& source_name, int n_max) {
  const std::string text = read_stream(in, source_name);
  const auto lines = text_lines(text);

  AliasTable table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto cols = split(lines[i], '\t');
    if (cols.size() != 3) {
      line_error(source_name, i + 1, "expected 3 columns, got " + std::to_string(cols.size()));
    }
    const auto count = parse_int64(cols[2]);
    if (!count || *count <= 0) {
      line_error(source_name, i + 1, "alias count must be a positive integer");
    }
    table.insert(std::string(trim(cols[0])), std::string(trim(cols[1])), *count);
  }
  table.finalize(n_max);
  return table;
}

AliasTable load_alias_table(const std::filesystem::path& path, int n_max) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open alias table: " + path.string());
  return load_alias_table(in, path.filename().string(), n_max);
}

void CorpusIndex::add_document(const std::string& doc_id, const std::string& text) {
  if (docs_.count(doc_id)) throw ParseError("duplicate document id: " + doc_id);
  TermCounts counts;
  for (std::string& token : tokenize(text)) ++counts[std::move(token)];
  for (const auto& [term, tf] : counts) ++df_[term];
  docs_.emplace(doc_id, std::move(counts));
}

bool CorpusIndex::has_document(const std::string& doc_id) const { return docs_.count(doc_id) > 0; }

const CorpusIndex::TermCounts* CorpusIndex::document(const std::string& doc_id) const {
  auto it = docs_.find(doc_id);
  return it == docs_.end() ? nullptr : &it->second;
}

int CorpusIndex::document_frequency(const std::string& term) const {
  auto it = df_.find(term);
  return it == df_.end() ? 0 : it->second;
}

std::vector<std::string> CorpusIndex::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const bool alnum =
        (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (alnum) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      current.push_back(c);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

CorpusIndex build_corpus_index(const std::filesystem::path& directory, int jobs) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  // Shard per file, then merge in sorted order so the index is
  // independent of directory iteration and job count.
  std::vector<std::string> contents(files.size());
  std::vector<std::string> errors(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t i) {
    try {
      contents[i] = read_text_file(files[i]);
    } catch (const std::exception& err) {
      errors[i] = err.what();
    }
  });
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!errors[i].empty()) throw ParseError("corpus: " + errors[i]);
  }

  CorpusIndex index;
  for (std::size_t i = 0; i < files.size(); ++i) {
    index.add_document(files[i].stem().string(), contents[i]);
  }
  return index;
}

}  // namespace slotfuse
