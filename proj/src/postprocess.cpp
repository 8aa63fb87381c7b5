#include "slotfuse/postprocess.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <sstream>
#include <tuple>

#include "slotfuse/parallel.hpp"
#include "slotfuse/text.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

std::string to_string(SlotClass cls) {
  switch (cls) {
    case SlotClass::ENTITY: return "entity";
    case SlotClass::DATE: return "date";
    case SlotClass::NUMERIC: return "numeric";
    case SlotClass::STRING: return "string";
  }
  return "?";
}

std::optional<SlotClass> parse_slot_class(std::string_view text) {
  if (text == "entity") return SlotClass::ENTITY;
  if (text == "date") return SlotClass::DATE;
  if (text == "numeric") return SlotClass::NUMERIC;
  if (text == "string") return SlotClass::STRING;
  return std::nullopt;
}

SlotClassTable SlotClassTable::builtin() {
  SlotClassTable table;
  const auto entity = [&](const char* slot) { table.classes_[slot] = SlotClass::ENTITY; };
  const auto date = [&](const char* slot) { table.classes_[slot] = SlotClass::DATE; };
  const auto numeric = [&](const char* slot) { table.classes_[slot] = SlotClass::NUMERIC; };
  const auto str = [&](const char* slot) { table.classes_[slot] = SlotClass::STRING; };

  entity("per:alternate_names");
  date("per:date_of_birth");
  numeric("per:age");
  entity("per:country_of_birth");
  entity("per:stateorprovince_of_birth");
  entity("per:city_of_birth");
  entity("per:origin");
  date("per:date_of_death");
  entity("per:country_of_death");
  entity("per:stateorprovince_of_death");
  entity("per:city_of_death");
  str("per:cause_of_death");
  entity("per:countries_of_residence");
  entity("per:statesorprovinces_of_residence");
  entity("per:cities_of_residence");
  entity("per:schools_attended");
  str("per:title");
  entity("per:employee_or_member_of");
  str("per:religion");
  entity("per:spouse");
  entity("per:children");
  entity("per:parents");
  entity("per:siblings");
  entity("per:other_family");
  str("per:charges");

  entity("org:alternate_names");
  entity("org:political_religious_affiliation");
  entity("org:top_members_employees");
  numeric("org:number_of_employees_members");
  entity("org:members");
  entity("org:member_of");
  entity("org:subsidiaries");
  entity("org:parents");
  entity("org:founded_by");
  date("org:date_founded");
  date("org:date_dissolved");
  entity("org:country_of_headquarters");
  entity("org:stateorprovince_of_headquarters");
  entity("org:city_of_headquarters");
  entity("org:shareholders");
  str("org:website");
  return table;
}

SlotClassTable SlotClassTable::parse_tsv(const std::string& text, const std::string& source_name) {
  SlotClassTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 2) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected 2 columns");
    }
    const auto cls = parse_slot_class(trim(cols[1]));
    if (!cls) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": unknown slot class '" +
                       std::string(cols[1]) + "'");
    }
    table.classes_[std::string(trim(cols[0]))] = *cls;
  }
  return table;
}

std::string SlotClassTable::to_tsv() const {
  std::ostringstream out;
  for (const auto& [slot, cls] : classes_) out << slot << '\t' << to_string(cls) << '\n';
  return out.str();
}

SlotClass SlotClassTable::class_of(const std::string& slot) const {
  auto it = classes_.find(slot);
  return it == classes_.end() ? SlotClass::STRING : it->second;
}

void SlotClassTable::set(const std::string& slot, SlotClass cls) { classes_[slot] = cls; }

namespace {

const char* kMonths[] = {"january", "february", "march",     "april",   "may",      "june",
                         "july",    "august",   "september", "october", "november", "december"};

std::optional<int> month_number(std::string_view word) {
  if (word.size() < 3) return std::nullopt;
  for (int m = 0; m < 12; ++m) {
    const std::string_view name = kMonths[m];
    if (word == name || (word.size() == 3 && name.substr(0, 3) == word)) return m + 1;
  }
  return std::nullopt;
}

std::string pad2(int v) { return (v < 10 ? "0" : "") + std::to_string(v); }

bool plausible_day(int d) { return d >= 1 && d <= 31; }
bool plausible_year(int y) { return y >= 1 && y <= 9999; }

}  // namespace

std::optional<std::string> normalize_date(std::string_view fill) {
  // Tokenize into lowercase words and numbers; punctuation separates.
  std::vector<std::string> words;
  std::string current;
  for (char c : fill) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  if (words.empty() || words.size() > 3) return std::nullopt;

  std::optional<int> year, month, day;
  std::vector<int> numbers;
  for (const std::string& w : words) {
    if (auto m = month_number(w)) {
      if (month) return std::nullopt;
      month = *m;
      continue;
    }
    const auto n = parse_int64(w);
    if (!n) return std::nullopt;
    numbers.push_back(static_cast<int>(*n));
  }

  if (month) {
    // Month name plus up to two numbers: the 4-digit one is the year.
    if (numbers.size() > 2) return std::nullopt;
    for (int n : numbers) {
      if (n >= 1000 && !year) {
        year = n;
      } else if (!day) {
        day = n;
      } else {
        return std::nullopt;
      }
    }
    if (!year) return std::nullopt;
  } else {
    // Pure numeric forms: Y | Y-M | Y-M-D in that order (ISO style).
    if (numbers.empty() || numbers.size() > 3 || numbers[0] < 1000) return std::nullopt;
    year = numbers[0];
    if (numbers.size() >= 2) month = numbers[1];
    if (numbers.size() == 3) day = numbers[2];
  }

  if (!plausible_year(*year)) return std::nullopt;
  if (month && (*month < 1 || *month > 12)) return std::nullopt;
  if (day && !plausible_day(*day)) return std::nullopt;
  if (day && !month) return std::nullopt;

  std::string out = std::to_string(*year);
  if (month) out += "-" + pad2(*month);
  if (day) out += "-" + pad2(*day);
  return out;
}

std::optional<double> normalize_number(std::string_view fill) {
  std::string cleaned;
  for (char c : fill) {
    if (c == ',') continue;  // thousands separators
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    cleaned.push_back(c);
  }
  return parse_double(cleaned);
}

namespace {

bool better_scored(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.probability != b.probability) return a.probability > b.probability;
  return a.candidate.fill_norm < b.candidate.fill_norm;
}

// Keeps the best member of each group keyed by `norm(fill)`.
std::vector<ScoredCandidate> dedup_by_norm(
    const std::vector<ScoredCandidate>& group,
    const std::function<std::string(const std::string&)>& norm) {
  std::map<std::string, const ScoredCandidate*> best;
  for (const ScoredCandidate& sc : group) {
    const std::string key = norm(sc.candidate.fill_norm);
    auto [it, fresh] = best.try_emplace(key, &sc);
    if (!fresh && better_scored(sc, *it->second)) it->second = &sc;
  }
  std::vector<ScoredCandidate> out;
  out.reserve(best.size());
  for (const auto& [key, sc] : best) out.push_back(*sc);
  std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.candidate.fill_norm < b.candidate.fill_norm;
  });
  return out;
}

}  // namespace

std::vector<ScoredCandidate> eliminate_aliases(const std::vector<ScoredCandidate>& group,
                                               const AliasTable& aliases) {
  // Connected components over shared alias-set tokens.
  DisjointSets sets(group.size());
  std::map<std::string, std::size_t> token_owner;
  for (std::size_t i = 0; i < group.size(); ++i) {
    std::vector<std::string> tokens{group[i].candidate.fill_norm};
    for (const AliasCount& a : aliases.aliases(group[i].candidate.fill_norm)) {
      tokens.push_back(a.alias);
    }
    for (const std::string& token : tokens) {
      auto [it, fresh] = token_owner.try_emplace(token, i);
      if (!fresh) sets.unite(i, it->second);
    }
  }

  std::map<std::size_t, const ScoredCandidate*> best;
  for (std::size_t i = 0; i < group.size(); ++i) {
    const std::size_t root = sets.find(i);
    auto [it, fresh] = best.try_emplace(root, &group[i]);
    if (!fresh && better_scored(group[i], *it->second)) it->second = &group[i];
  }
  std::vector<ScoredCandidate> out;
  out.reserve(best.size());
  for (const auto& [root, sc] : best) out.push_back(*sc);
  std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.candidate.fill_norm < b.candidate.fill_norm;
  });
  return out;
}

std::vector<ScoredCandidate> simple_dedup(const std::vector<ScoredCandidate>& group,
                                          SlotClass slot_class) {
  return dedup_by_norm(group, [slot_class](const std::string& fill) {
    if (slot_class == SlotClass::DATE) {
      if (auto date = normalize_date(fill)) return "d:" + *date;
    } else if (slot_class == SlotClass::NUMERIC) {
      if (auto value = normalize_number(fill)) return "n:" + format_exact(*value);
    }
    return "s:" + fill;  // unparseable or string class: exact match only
  });
}

std::vector<ScoredCandidate> select_single_valued(std::vector<ScoredCandidate> accepted,
                                                  const SlotRegistry& registry) {
  std::map<std::pair<std::string, std::string>, const ScoredCandidate*> winners;
  std::vector<ScoredCandidate> out;
  for (const ScoredCandidate& sc : accepted) {
    if (!registry.contains(sc.candidate.slot) || !registry.is_single_valued(sc.candidate.slot)) {
      out.push_back(sc);
      continue;
    }
    auto key = std::make_pair(sc.candidate.query_id, sc.candidate.slot);
    auto [it, fresh] = winners.try_emplace(key, &sc);
    if (!fresh && better_scored(sc, *it->second)) it->second = &sc;
  }
  for (const auto& [key, sc] : winners) out.push_back(*sc);
  std::sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return std::tie(a.candidate.query_id, a.candidate.slot, a.candidate.fill_norm) <
           std::tie(b.candidate.query_id, b.candidate.slot, b.candidate.fill_norm);
  });
  return out;
}

std::vector<ScoredCandidate> postprocess(std::vector<ScoredCandidate> accepted,
                                         const AliasTable& aliases, const SlotClassTable& classes,
                                         const SlotRegistry& registry, int jobs) {
  std::map<std::pair<std::string, std::string>, std::vector<ScoredCandidate>> groups;
  for (ScoredCandidate& sc : accepted) {
    groups[{sc.candidate.query_id, sc.candidate.slot}].push_back(std::move(sc));
  }

  std::vector<std::vector<ScoredCandidate>*> group_list;
  for (auto& [key, group] : groups) group_list.push_back(&group);

  parallel_for(group_list.size(), jobs, [&](std::size_t g) {
    std::vector<ScoredCandidate>& group = *group_list[g];
    const SlotClass cls = classes.class_of(group.front().candidate.slot);
    group = cls == SlotClass::ENTITY ? eliminate_aliases(group, aliases)
                                     : simple_dedup(group, cls);
  });

  std::vector<ScoredCandidate> flattened;
  for (auto& [key, group] : groups) {
    for (ScoredCandidate& sc : group) flattened.push_back(std::move(sc));
  }
  return select_single_valued(std::move(flattened), registry);
}

bool is_nil_id(std::string_view id) {
  if (id.size() < 4 || id.substr(0, 3) != "NIL") return false;
  for (char c : id.substr(3)) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

std::vector<MentionLink> merge_nil_clusters(std::vector<MentionLink> links,
                                            const NilMergeOptions& options) {
  // Original clusters are (system, cluster id) pairs; NIL ids are only
  // unique within one system's output.
  std::map<std::pair<std::string, std::string>, std::size_t> cluster_index;
  std::vector<std::size_t> link_cluster(links.size());
  std::size_t n_clusters = 0;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (!is_nil_id(links[i].cluster_id)) {
      link_cluster[i] = static_cast<std::size_t>(-1);
      continue;
    }
    auto key = std::make_pair(links[i].system_id, links[i].cluster_id);
    auto [it, fresh] = cluster_index.try_emplace(std::move(key), n_clusters);
    if (fresh) ++n_clusters;
    link_cluster[i] = it->second;
  }

  DisjointSets sets(n_clusters);
  std::map<std::string, std::size_t> mention_owner;
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (link_cluster[i] == static_cast<std::size_t>(-1)) continue;
    std::string key = normalize_fill(links[i].mention) + '\t' + links[i].location.doc_id;
    if (options.exact_offsets) {
      for (const Span& span : links[i].location.spans) {
        key += '\t' + std::to_string(span.start) + '-' + std::to_string(span.end);
      }
    }
    auto [it, fresh] = mention_owner.try_emplace(std::move(key), link_cluster[i]);
    if (!fresh) sets.unite(link_cluster[i], it->second);
  }

  // Fresh ids ordered by each component's smallest original cluster key.
  std::map<std::size_t, std::pair<std::string, std::string>> smallest;
  for (const auto& [key, index] : cluster_index) {
    const std::size_t root = sets.find(index);
    auto [it, fresh] = smallest.try_emplace(root, key);
    if (!fresh && key < it->second) it->second = key;
  }
  std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> ordered;
  ordered.reserve(smallest.size());
  for (const auto& [root, key] : smallest) ordered.emplace_back(key, root);
  std::sort(ordered.begin(), ordered.end());

  std::map<std::size_t, std::string> fresh_id;
  for (std::size_t rank = 0; rank < ordered.size(); ++rank) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "NIL%04zu", rank + 1);
    fresh_id[ordered[rank].second] = buf;
  }

  for (std::size_t i = 0; i < links.size(); ++i) {
    if (link_cluster[i] == static_cast<std::size_t>(-1)) continue;
    links[i].cluster_id = fresh_id.at(sets.find(link_cluster[i]));
  }
  return links;
}

std::string write_links(const std::vector<MentionLink>& links) {
  std::ostringstream out;
  for (const MentionLink& link : links) {
    const Span span = link.location.spans.empty() ? Span{0, 0} : link.location.spans.front();
    out << link.system_id << '\t' << link.mention << '\t' << link.location.doc_id << '\t'
        << span.start << '\t' << span.end << '\t' << link.cluster_id << '\t'
        << format_fixed(link.confidence, 6) << '\n';
  }
  return out.str();
}

std::vector<MentionLink> parse_links(const std::string& text, const std::string& source_name) {
  std::vector<MentionLink> links;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 7) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": expected 7 columns, got " +
                       std::to_string(cols.size()));
    }
    MentionLink link;
    link.system_id = std::string(trim(cols[0]));
    link.mention = std::string(cols[1]);
    const auto start = parse_int64(cols[3]);
    const auto end = parse_int64(cols[4]);
    const auto confidence = parse_double(cols[6]);
    if (!start || !end || !confidence) {
      throw ParseError(source_name + ":" + std::to_string(line_no) + ": unparseable numeric field");
    }
    link.location = Provenance{std::string(trim(cols[2])), {Span{*start, *end}}};
    link.cluster_id = std::string(trim(cols[5]));
    link.confidence = *confidence;
    links.push_back(std::move(link));
  }
  return links;
}

}  // namespace slotfuse
