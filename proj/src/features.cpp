#include "slotfuse/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "slotfuse/parallel.hpp"
#include "slotfuse/text.hpp"

namespace slotfuse {

namespace {

// Canonical group order; layouts always emit columns in this sequence.
constexpr FeatureGroup kGroupOrder[] = {FeatureGroup::CONF, FeatureGroup::QSIM,
                                        FeatureGroup::PSIM, FeatureGroup::DPS,
                                        FeatureGroup::OP,   FeatureGroup::RELPROV,
                                        FeatureGroup::REL};

bool per_system(FeatureGroup g) {
  return g == FeatureGroup::CONF || g == FeatureGroup::QSIM || g == FeatureGroup::PSIM;
}

}  // namespace

std::string to_string(FeatureGroup group) {
  switch (group) {
    case FeatureGroup::CONF: return "conf";
    case FeatureGroup::QSIM: return "qsim";
    case FeatureGroup::PSIM: return "psim";
    case FeatureGroup::DPS: return "dps";
    case FeatureGroup::OP: return "op";
    case FeatureGroup::REL: return "rel";
    case FeatureGroup::RELPROV: return "relprov";
  }
  return "?";
}

std::optional<FeatureGroup> parse_feature_group(std::string_view text) {
  for (FeatureGroup g : kGroupOrder) {
    if (text == to_string(g)) return g;
  }
  return std::nullopt;
}

std::size_t FeatureLayout::dimension() const {
  std::size_t d = 0;
  for (FeatureGroup g : kGroupOrder) {
    if (!has(g)) continue;
    if (per_system(g)) {
      d += roster.size();
    } else if (g == FeatureGroup::RELPROV) {
      d += 2;
    } else if (g == FeatureGroup::REL) {
      d += relation_vocab.size();
    } else {
      d += 1;
    }
  }
  return d;
}

std::vector<std::string> FeatureLayout::column_names() const {
  std::vector<std::string> names;
  names.reserve(dimension());
  for (FeatureGroup g : kGroupOrder) {
    if (!has(g)) continue;
    if (per_system(g)) {
      for (const std::string& sys : roster) names.push_back(to_string(g) + ":" + sys);
    } else if (g == FeatureGroup::RELPROV) {
      names.push_back("relprov_dps");
      names.push_back("relprov_op");
    } else if (g == FeatureGroup::REL) {
      for (const std::string& slot : relation_vocab) names.push_back("rel:" + slot);
    } else {
      names.push_back(to_string(g));
    }
  }
  return names;
}

nlohmann::json FeatureLayout::to_json() const {
  nlohmann::json j;
  j["roster"] = roster;
  std::vector<std::string> names;
  for (FeatureGroup g : kGroupOrder) {
    if (has(g)) names.push_back(to_string(g));
  }
  j["groups"] = names;
  j["relation_vocab"] = relation_vocab;
  return j;
}

FeatureLayout FeatureLayout::from_json(const nlohmann::json& j) {
  FeatureLayout layout;
  layout.roster = j.at("roster").get<std::vector<std::string>>();
  for (const auto& name : j.at("groups")) {
    const auto g = parse_feature_group(name.get<std::string>());
    if (!g) throw ParseError("unknown feature group: " + name.get<std::string>());
    layout.groups.insert(*g);
  }
  layout.relation_vocab = j.at("relation_vocab").get<std::vector<std::string>>();
  return layout;
}

namespace {

// Start offset of each enabled group's block inside the value vector.
struct LayoutOffsets {
  std::map<FeatureGroup, std::size_t> start;

  explicit LayoutOffsets(const FeatureLayout& layout) {
    std::size_t at = 0;
    for (FeatureGroup g : kGroupOrder) {
      if (!layout.has(g)) continue;
      start[g] = at;
      if (per_system(g)) {
        at += layout.roster.size();
      } else if (g == FeatureGroup::RELPROV) {
        at += 2;
      } else if (g == FeatureGroup::REL) {
        at += layout.relation_vocab.size();
      } else {
        at += 1;
      }
    }
  }
};

}  // namespace

std::vector<FeatureVector> featurize(const std::vector<Candidate>& candidates,
                                     const FeatureLayout& layout,
                                     const std::vector<Query>* queries,
                                     const CorpusIndex* corpus, const FeaturizeOptions& options,
                                     Diagnostics& diag) {
  std::map<std::string, std::size_t> roster_index;
  for (std::size_t i = 0; i < layout.roster.size(); ++i) roster_index[layout.roster[i]] = i;
  for (const Candidate& c : candidates) {
    for (const auto& [system_id, line] : c.responses) {
      if (!roster_index.count(system_id)) {
        throw std::invalid_argument("system '" + system_id + "' is not in the layout roster");
      }
    }
  }

  const bool need_qsim = layout.has(FeatureGroup::QSIM);
  const bool need_psim = layout.has(FeatureGroup::PSIM);
  if ((need_qsim || need_psim) && !corpus) {
    throw std::invalid_argument("similarity features require a corpus index");
  }
  if (need_qsim && !queries) {
    throw std::invalid_argument("query document similarity requires the query list");
  }

  std::map<std::string, const Query*> query_by_id;
  if (queries) {
    for (const Query& q : *queries) query_by_id[q.id] = &q;
  }

  DocVectorTable table;
  if (need_qsim || need_psim) {
    std::vector<std::string> doc_ids;
    for (const Candidate& c : candidates) {
      for (const auto& [system_id, line] : c.responses) {
        if (line.filler_provenance) doc_ids.push_back(line.filler_provenance->doc_id);
      }
    }
    if (need_qsim) {
      for (const Query& q : *queries) doc_ids.push_back(q.doc_id);
    }
    table = DocVectorTable::build(*corpus, std::move(doc_ids), options.tfidf, options.jobs, diag);
  }

  std::map<std::string, std::size_t> rel_index;
  for (std::size_t i = 0; i < layout.relation_vocab.size(); ++i) {
    rel_index[layout.relation_vocab[i]] = i;
  }

  // Pools of candidate indices per (query, slot); each pool is independent.
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> pools;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    pools[{candidates[i].query_id, candidates[i].slot}].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> pool_list;
  std::vector<const std::pair<std::string, std::string>*> pool_keys;
  for (const auto& [key, idxs] : pools) {
    pool_keys.push_back(&key);
    pool_list.push_back(&idxs);
  }

  const LayoutOffsets offsets(layout);
  const std::size_t dim = layout.dimension();
  std::vector<FeatureVector> rows(candidates.size());
  std::vector<std::string> pool_errors(pool_list.size());
  std::vector<std::string> pool_missing_query(pool_list.size());
  std::vector<std::string> pool_unseen_slot(pool_list.size());

  parallel_for(pool_list.size(), options.jobs, [&](std::size_t p) {
    const auto& [query_id, slot] = *pool_keys[p];
    const std::vector<std::size_t>& idxs = *pool_list[p];

    std::vector<const Candidate*> pool_cands;
    pool_cands.reserve(idxs.size());
    for (std::size_t i : idxs) pool_cands.push_back(&candidates[i]);

    std::map<std::string, ProvenanceScores> filler_scores;
    if (layout.has(FeatureGroup::DPS) || layout.has(FeatureGroup::OP)) {
      filler_scores =
          build_provenance_pool(query_id, slot, pool_cands, ProvenanceSource::FILLER).score_all();
    }
    std::map<std::string, ProvenanceScores> rel_scores;
    if (layout.has(FeatureGroup::RELPROV)) {
      rel_scores =
          build_provenance_pool(query_id, slot, pool_cands, ProvenanceSource::RELATION).score_all();
    }

    const Query* query = nullptr;
    if (need_qsim) {
      auto it = query_by_id.find(query_id);
      if (it != query_by_id.end()) {
        query = it->second;
      } else {
        pool_missing_query[p] = query_id;
      }
    }

    // The pool shares one slot, so the relation one-hot resolves once here.
    std::ptrdiff_t rel_column = -1;
    if (layout.has(FeatureGroup::REL)) {
      auto it = rel_index.find(slot);
      if (it != rel_index.end()) {
        rel_column = static_cast<std::ptrdiff_t>(it->second);
      } else if (options.strict_relations) {
        pool_errors[p] = "slot '" + slot + "' is outside the relation vocabulary";
      } else {
        pool_unseen_slot[p] = slot;
      }
    }

    for (std::size_t i : idxs) {
      const Candidate& c = candidates[i];
      FeatureVector row;
      row.query_id = c.query_id;
      row.slot = c.slot;
      row.fill_norm = c.fill_norm;
      row.label = c.label;
      row.values.assign(dim, 0.0);

      if (layout.has(FeatureGroup::CONF)) {
        const std::size_t base = offsets.start.at(FeatureGroup::CONF);
        for (const auto& [system_id, line] : c.responses) {
          row.values[base + roster_index.at(system_id)] = line.confidence;
        }
      }
      if (need_qsim && query) {
        const std::size_t base = offsets.start.at(FeatureGroup::QSIM);
        for (const auto& [system_id, sim] : query_doc_similarity(c, *query, table)) {
          row.values[base + roster_index.at(system_id)] = sim;
        }
      }
      if (need_psim) {
        const std::size_t base = offsets.start.at(FeatureGroup::PSIM);
        for (const auto& [system_id, sim] : cross_provenance_similarity(c, table)) {
          row.values[base + roster_index.at(system_id)] = sim;
        }
      }
      if (layout.has(FeatureGroup::DPS) || layout.has(FeatureGroup::OP)) {
        const auto [dps, op] = candidate_provenance_features(c, filler_scores, options.aggregation);
        if (layout.has(FeatureGroup::DPS)) row.values[offsets.start.at(FeatureGroup::DPS)] = dps;
        if (layout.has(FeatureGroup::OP)) row.values[offsets.start.at(FeatureGroup::OP)] = op;
      }
      if (layout.has(FeatureGroup::RELPROV)) {
        const auto [dps, op] = candidate_provenance_features(c, rel_scores, options.aggregation);
        const std::size_t base = offsets.start.at(FeatureGroup::RELPROV);
        row.values[base] = dps;
        row.values[base + 1] = op;
      }
      if (rel_column >= 0) {
        row.values[offsets.start.at(FeatureGroup::REL) + static_cast<std::size_t>(rel_column)] =
            1.0;
      }
      rows[i] = std::move(row);
    }
  });

  for (const std::string& err : pool_errors) {
    if (!err.empty()) throw std::invalid_argument(err);
  }
  // Warn once per offender, not once per pool, and in a jobs-independent order.
  const std::set<std::string> missing_queries(pool_missing_query.begin(),
                                              pool_missing_query.end());
  for (const std::string& id : missing_queries) {
    if (id.empty()) continue;
    diag.warn("query " + id + " not in the query list; its qsim features are 0");
  }
  const std::set<std::string> unseen_slots(pool_unseen_slot.begin(), pool_unseen_slot.end());
  for (const std::string& s : unseen_slots) {
    if (s.empty()) continue;
    diag.warn("slot '" + s + "' outside the relation vocabulary; one-hot left all zero");
  }
  return rows;
}

std::vector<std::string> relation_vocabulary(const std::vector<Candidate>& candidates) {
  std::vector<std::string> vocab;
  for (const Candidate& c : candidates) vocab.push_back(c.slot);
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  return vocab;
}

void label_candidates(std::vector<Candidate>& candidates, const std::vector<KeyEntry>& key,
                      Diagnostics& diag) {
  std::map<std::tuple<std::string, std::string, std::string>, bool> judged;
  for (const KeyEntry& e : key) {
    judged[{e.query_id, e.slot, e.fill_norm}] = e.correct;
  }
  std::size_t unlabeled = 0;
  for (Candidate& c : candidates) {
    auto it = judged.find({c.query_id, c.slot, c.fill_norm});
    if (it != judged.end()) {
      c.label = it->second;
    } else {
      c.label = false;
      ++unlabeled;
    }
  }
  if (unlabeled > 0) {
    diag.unlabeled_candidates += unlabeled;
    diag.warn(std::to_string(unlabeled) + " candidate(s) not in the key, labeled incorrect");
  }
}

void write_feature_matrix(std::ostream& out, const FeatureLayout& layout,
                          const std::vector<FeatureVector>& rows) {
  const auto columns = layout.column_names();
  bool any_label = false;
  for (const FeatureVector& row : rows) any_label = any_label || row.label.has_value();

  out << "query_id\tslot\tfill";
  for (const std::string& name : columns) out << '\t' << name;
  if (any_label) out << "\tlabel";
  out << '\n';

  for (const FeatureVector& row : rows) {
    if (row.values.size() != columns.size()) {
      throw std::invalid_argument("feature row dimension does not match the layout");
    }
    out << row.query_id << '\t' << row.slot << '\t' << row.fill_norm;
    for (double v : row.values) out << '\t' << format_exact(v);
    if (any_label) {
      out << '\t';
      if (row.label) out << (*row.label ? '1' : '0');
    }
    out << '\n';
  }
}

std::string write_feature_matrix(const FeatureLayout& layout,
                                 const std::vector<FeatureVector>& rows) {
  std::ostringstream out;
  write_feature_matrix(out, layout, rows);
  return out.str();
}

std::pair<FeatureLayout, std::vector<FeatureVector>> read_feature_matrix(
    std::istream& in, const std::string& source_name) {
  std::string text;
  {
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }
  std::vector<std::string> lines;
  {
    std::istringstream stream(text);
    std::string line;
    while (std::getline(stream, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      lines.push_back(line);
    }
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(source_name + ": empty feature matrix");

  const auto header = split(lines[0], '\t');
  if (header.size() < 3 || header[0] != "query_id" || header[1] != "slot" || header[2] != "fill") {
    throw ParseError(source_name + ": header must start with query_id, slot, fill");
  }
  const bool has_label = header.back() == "label";
  const std::size_t first_feature = 3;
  const std::size_t end_feature = header.size() - (has_label ? 1 : 0);

  FeatureLayout layout;
  std::map<FeatureGroup, std::vector<std::string>> per_system_lists;
  bool relprov_dps_seen = false, relprov_op_seen = false;
  for (std::size_t i = first_feature; i < end_feature; ++i) {
    const std::string name(header[i]);
    const auto colon = name.find(':');
    if (colon != std::string::npos) {
      const auto group = parse_feature_group(name.substr(0, colon));
      const std::string suffix = name.substr(colon + 1);
      if (group && per_system(*group)) {
        layout.groups.insert(*group);
        per_system_lists[*group].push_back(suffix);
        continue;
      }
      if (group == FeatureGroup::REL) {
        layout.groups.insert(FeatureGroup::REL);
        layout.relation_vocab.push_back(suffix);
        continue;
      }
    } else if (name == "dps" || name == "op") {
      layout.groups.insert(*parse_feature_group(name));
      continue;
    } else if (name == "relprov_dps" || name == "relprov_op") {
      layout.groups.insert(FeatureGroup::RELPROV);
      (name == "relprov_dps" ? relprov_dps_seen : relprov_op_seen) = true;
      continue;
    }
    throw ParseError(source_name + ": unknown feature column '" + name + "'");
  }
  if (layout.has(FeatureGroup::RELPROV) && !(relprov_dps_seen && relprov_op_seen)) {
    throw ParseError(source_name + ": relprov_dps and relprov_op must appear together");
  }
  for (const auto& [group, systems] : per_system_lists) {
    if (layout.roster.empty()) layout.roster = systems;
    if (systems != layout.roster) {
      throw ParseError(source_name + ": per-system blocks list different system rosters");
    }
  }

  // Canonical order check: regenerating the header must reproduce it.
  const auto expected = layout.column_names();
  if (expected.size() != end_feature - first_feature) {
    throw ParseError(source_name + ": feature columns are not in canonical order");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected[i] != header[first_feature + i]) {
      throw ParseError(source_name + ": feature columns are not in canonical order");
    }
  }

  std::vector<FeatureVector> rows;
  const std::size_t want = header.size();
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const auto cols = split(lines[li], '\t');
    if (cols.size() != want) {
      throw ParseError(source_name + ":" + std::to_string(li + 1) + ": expected " +
                       std::to_string(want) + " columns, got " + std::to_string(cols.size()));
    }
    FeatureVector row;
    row.query_id = std::string(cols[0]);
    row.slot = std::string(cols[1]);
    row.fill_norm = std::string(cols[2]);
    row.values.reserve(end_feature - first_feature);
    for (std::size_t i = first_feature; i < end_feature; ++i) {
      const auto v = parse_double(cols[i]);
      if (!v) {
        throw ParseError(source_name + ":" + std::to_string(li + 1) + ": unparseable value in '" +
                         std::string(header[i]) + "'");
      }
      row.values.push_back(*v);
    }
    if (has_label) {
      const auto cell = trim(cols.back());
      if (cell == "1") {
        row.label = true;
      } else if (cell == "0") {
        row.label = false;
      } else if (!cell.empty()) {
        throw ParseError(source_name + ":" + std::to_string(li + 1) + ": label must be 0 or 1");
      }
    }
    rows.push_back(std::move(row));
  }
  return {std::move(layout), std::move(rows)};
}

}  // namespace slotfuse
