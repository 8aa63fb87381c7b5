#include "slotfuse/core.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "slotfuse/text.hpp"

namespace slotfuse {

std::string to_string(EntityType type) {
  switch (type) {
    case EntityType::PER: return "PER";
    case EntityType::ORG: return "ORG";
    case EntityType::GPE: return "GPE";
  }
  return "PER";
}

std::optional<EntityType> parse_entity_type(std::string_view text) {
  std::string t = to_lower_ascii(trim(text));
  if (t == "per") return EntityType::PER;
  if (t == "org") return EntityType::ORG;
  if (t == "gpe") return EntityType::GPE;
  return std::nullopt;
}

Provenance Provenance::parse(std::string_view text) {
  Provenance prov;
  const auto chunks = split(trim(text), ',');
  for (auto chunk : chunks) {
    chunk = trim(chunk);
    const auto colon = chunk.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ParseError("malformed provenance: '" + std::string(text) + "'");
    }
    const std::string doc(chunk.substr(0, colon));
    const auto offsets = chunk.substr(colon + 1);
    const auto dash = offsets.find('-');
    if (dash == std::string_view::npos) {
      throw ParseError("malformed provenance offsets: '" + std::string(text) + "'");
    }
    const auto start = parse_int64(offsets.substr(0, dash));
    const auto end = parse_int64(offsets.substr(dash + 1));
    if (!start || !end) {
      throw ParseError("unparseable provenance offsets: '" + std::string(text) + "'");
    }
    if (prov.doc_id.empty()) {
      prov.doc_id = doc;
    } else if (prov.doc_id != doc) {
      throw ParseError("provenance spans cite different documents: '" + std::string(text) + "'");
    }
    prov.spans.push_back(Span{*start, *end});
  }
  prov.validate();
  return prov;
}

std::string Provenance::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += doc_id;
    out.push_back(':');
    out += std::to_string(spans[i].start);
    out.push_back('-');
    out += std::to_string(spans[i].end);
  }
  return out;
}

void Provenance::validate() const {
  if (doc_id.empty()) throw ParseError("provenance without document id");
  if (spans.empty()) throw ParseError("provenance without spans");
  for (const Span& s : spans) {
    if (s.start < 0 || s.end < s.start) {
      throw ParseError("invalid span " + std::to_string(s.start) + "-" + std::to_string(s.end) +
                       " in document " + doc_id);
    }
  }
}

void ResponseLine::validate() const {
  if (nil) {
    if (!filler.empty() || relation_provenance || filler_provenance) {
      throw ParseError("NIL response for " + query_id + "/" + slot + " carries filler data");
    }
    return;
  }
  if (filler.empty()) throw ParseError("non-NIL response with empty filler: " + query_id + "/" + slot);
  if (!relation_provenance || !filler_provenance) {
    throw ParseError("non-NIL response missing provenance: " + query_id + "/" + slot);
  }
  relation_provenance->validate();
  filler_provenance->validate();
  if (confidence < 0.0 || confidence > 1.0) {
    throw ParseError("confidence out of [0,1]: " + query_id + "/" + slot);
  }
}

namespace {

SlotRegistry make_builtin_registry() {
  SlotRegistry reg;
  const auto add = [&reg](EntityType type, const char* name, SlotArity arity) {
    reg.add(SlotSpec{name, type, arity});
  };
  using enum SlotArity;
  const auto PER = EntityType::PER;
  const auto ORG = EntityType::ORG;

  add(PER, "per:alternate_names", LIST);
  add(PER, "per:date_of_birth", SINGLE);
  add(PER, "per:age", SINGLE);
  add(PER, "per:country_of_birth", SINGLE);
  add(PER, "per:stateorprovince_of_birth", SINGLE);
  add(PER, "per:city_of_birth", SINGLE);
  add(PER, "per:origin", LIST);
  add(PER, "per:date_of_death", SINGLE);
  add(PER, "per:country_of_death", SINGLE);
  add(PER, "per:stateorprovince_of_death", SINGLE);
  add(PER, "per:city_of_death", SINGLE);
  add(PER, "per:cause_of_death", SINGLE);
  add(PER, "per:countries_of_residence", LIST);
  add(PER, "per:statesorprovinces_of_residence", LIST);
  add(PER, "per:cities_of_residence", LIST);
  add(PER, "per:schools_attended", LIST);
  add(PER, "per:title", LIST);
  add(PER, "per:employee_or_member_of", LIST);
  add(PER, "per:religion", SINGLE);
  add(PER, "per:spouse", LIST);
  add(PER, "per:children", LIST);
  add(PER, "per:parents", LIST);
  add(PER, "per:siblings", LIST);
  add(PER, "per:other_family", LIST);
  add(PER, "per:charges", LIST);

  add(ORG, "org:alternate_names", LIST);
  add(ORG, "org:political_religious_affiliation", LIST);
  add(ORG, "org:top_members_employees", LIST);
  add(ORG, "org:number_of_employees_members", SINGLE);
  add(ORG, "org:members", LIST);
  add(ORG, "org:member_of", LIST);
  add(ORG, "org:subsidiaries", LIST);
  add(ORG, "org:parents", LIST);
  add(ORG, "org:founded_by", LIST);
  add(ORG, "org:date_founded", SINGLE);
  add(ORG, "org:date_dissolved", SINGLE);
  add(ORG, "org:country_of_headquarters", SINGLE);
  add(ORG, "org:stateorprovince_of_headquarters", SINGLE);
  add(ORG, "org:city_of_headquarters", SINGLE);
  add(ORG, "org:shareholders", LIST);
  add(ORG, "org:website", SINGLE);
  return reg;
}

}  // namespace

const SlotRegistry& SlotRegistry::builtin() {
  static const SlotRegistry registry = make_builtin_registry();
  return registry;
}

bool SlotRegistry::contains(std::string_view slot) const {
  return slots_.find(slot) != slots_.end();
}

const SlotSpec* SlotRegistry::find(std::string_view slot) const {
  auto it = slots_.find(slot);
  return it == slots_.end() ? nullptr : &it->second;
}

SlotArity SlotRegistry::arity(const std::string& slot) const {
  const SlotSpec* spec = find(slot);
  if (!spec) throw std::invalid_argument("unknown slot: " + slot);
  return spec->arity;
}

bool SlotRegistry::is_single_valued(const std::string& slot) const {
  return arity(slot) == SlotArity::SINGLE;
}

std::vector<std::string> SlotRegistry::slots_for(EntityType type) const {
  std::vector<std::string> out;
  for (const auto& [name, spec] : slots_) {
    if (spec.entity_type == type) out.push_back(name);
  }
  return out;
}

void SlotRegistry::add(SlotSpec spec) {
  std::string name = spec.name;
  slots_[std::move(name)] = std::move(spec);
}

void Candidate::validate() const {
  if (responses.empty()) throw ParseError("candidate without responses");
  for (const auto& [system, line] : responses) {
    if (line.nil) throw ParseError("candidate holds a NIL line");
    if (line.query_id != query_id || line.slot != slot) {
      throw ParseError("candidate response key mismatch for " + query_id + "/" + slot);
    }
    if (normalize_fill(line.filler) != fill_norm) {
      throw ParseError("candidate fill mismatch: '" + line.filler + "' vs '" + fill_norm + "'");
    }
  }
}

double Candidate::max_confidence() const {
  double best = 0.0;
  for (const auto& [system, line] : responses) best = std::max(best, line.confidence);
  return best;
}

std::string normalize_fill(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char c : raw) {
    if (is_ascii_space(c)) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out.push_back(c);
  }
  return out;
}

namespace {

// Content tuple used to break exact confidence ties deterministically.
std::tuple<double, std::string, std::string, std::string> line_rank(const ResponseLine& line) {
  return {line.confidence, line.filler_provenance ? line.filler_provenance->to_string() : "",
          line.relation_provenance ? line.relation_provenance->to_string() : "", line.filler};
}

}  // namespace

bool prefer_line(const ResponseLine& a, const ResponseLine& b) {
  return line_rank(a) > line_rank(b);
}

std::vector<Candidate> group_candidates(const std::vector<ResponseLine>& lines) {
  std::map<std::tuple<std::string, std::string, std::string>, Candidate> grouped;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const ResponseLine& line = lines[i];
    try {
      line.validate();
    } catch (const ParseError& err) {
      throw ParseError("line " + std::to_string(i + 1) + ": " + err.what());
    }
    if (line.nil) continue;
    const std::string fill_norm = normalize_fill(line.filler);
    auto key = std::make_tuple(line.query_id, line.slot, fill_norm);
    auto [it, inserted] = grouped.try_emplace(std::move(key));
    Candidate& cand = it->second;
    if (inserted) {
      cand.query_id = line.query_id;
      cand.slot = line.slot;
      cand.fill_norm = fill_norm;
    }
    auto [resp, fresh] = cand.responses.try_emplace(line.run_id, line);
    if (!fresh && prefer_line(line, resp->second)) resp->second = line;
  }
  std::vector<Candidate> out;
  out.reserve(grouped.size());
  for (auto& [key, cand] : grouped) out.push_back(std::move(cand));
  return out;
}

}  // namespace slotfuse
