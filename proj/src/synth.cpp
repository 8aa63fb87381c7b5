#include "slotfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

#include "slotfuse/text.hpp"

namespace slotfuse {

double SynthRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SynthRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int SynthRng::uniform_int(int lo, int hi) {
  return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
}

bool SynthRng::bernoulli(double p) { return uniform() < p; }

double SynthRng::normal(double sigma) {
  const double u1 = std::max(uniform(), 1e-12);
  const double u2 = uniform();
  return sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
}

double SynthRng::kumaraswamy(double a, double b) {
  const double u = uniform();
  return std::pow(1.0 - std::pow(1.0 - u, 1.0 / b), 1.0 / a);
}

void GeneratorConfig::validate() const {
  if (systems.empty()) throw std::invalid_argument("generator needs at least one system");
  std::set<std::string> ids;
  for (const SystemProfile& s : systems) {
    if (s.run_id.empty()) throw std::invalid_argument("system with empty run id");
    if (!ids.insert(s.run_id).second) {
      throw std::invalid_argument("duplicate system run id: " + s.run_id);
    }
    if (s.precision <= 0.0 || s.precision >= 1.0 || s.recall <= 0.0 || s.recall >= 1.0) {
      throw std::invalid_argument("system " + s.run_id + ": precision and recall must be in (0,1)");
    }
  }
  if (n_queries < 1) throw std::invalid_argument("n_queries must be positive");
  if (slots_per_query < 1) throw std::invalid_argument("slots_per_query must be positive");
  if (doc_agreement < 0.0 || doc_agreement > 1.0) {
    throw std::invalid_argument("doc_agreement must be in [0,1]");
  }
  if (offset_jitter < 0.0) throw std::invalid_argument("offset_jitter must be non-negative");
  if (confidence_noise < 0.0 || confidence_noise > 0.5) {
    throw std::invalid_argument("confidence_noise must be in [0, 0.5]");
  }
  if (corpus_docs < 4) throw std::invalid_argument("corpus needs at least 4 documents");
  if (distractor_vocab < 1) throw std::invalid_argument("distractor_vocab must be positive");
}

namespace {

struct GoldFill {
  std::string fill;
  std::string doc_id;  // canonical document
  Span span;
  bool manual_only = false;  // assessors found it; systems never emit it
};

std::string doc_name(const std::string& bundle, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_d%05d", bundle.c_str(), index);
  return buf;
}

Span jittered(Span span, double sigma, SynthRng& rng) {
  const std::int64_t ds = std::llround(rng.normal(sigma));
  const std::int64_t de = std::llround(rng.normal(sigma));
  Span out{std::max<std::int64_t>(0, span.start + ds), span.end + de};
  if (out.end < out.start) out.end = out.start;
  return out;
}

double correct_confidence(SynthRng& rng, double noise, double bias) {
  // Skewed toward 1, then perturbed by the calibration noise.
  const double base = 1.0 - 0.55 * rng.kumaraswamy(1.5, 3.0);
  return std::clamp(base + bias + rng.uniform(-noise, noise), 0.01, 0.99);
}

double spurious_confidence(SynthRng& rng, double noise, double bias) {
  const double base = 0.05 + 0.55 * rng.kumaraswamy(1.5, 3.0);
  return std::clamp(base + bias + rng.uniform(-noise, noise), 0.01, 0.99);
}

Bundle make_bundle(const std::string& name, const std::string& query_prefix, int entity_offset,
                   const GeneratorConfig& config, const std::vector<double>& system_bias,
                   const SlotRegistry& registry, SynthRng& rng) {
  Bundle bundle;
  bundle.name = name;

  // Corpus first, in index order. Document d is about synthetic entity d/3
  // (matching the per-entity document pools below) with a shared background
  // vocabulary, so query and provenance documents of one entity look alike.
  for (int d = 0; d < config.corpus_docs; ++d) {
    std::ostringstream text;
    const int topic = d / 3;
    for (int t = 0; t < 30; ++t) {
      text << "w" << rng.uniform_int(0, 99) << ' ';
    }
    for (int t = 0; t < 20; ++t) {
      text << "t" << entity_offset + topic << "x" << rng.uniform_int(0, 9) << ' ';
    }
    text << '\n';
    bundle.corpus[doc_name(name, d)] = text.str();
  }

  struct KeyCell {
    std::vector<GoldFill> gold;
    std::set<std::string> emitted_gold;       // fills some system produced
    std::set<std::string> emitted_spurious;   // wrong fills that reached the pool
  };
  std::map<std::pair<std::string, std::string>, KeyCell> cells;

  // Shared wrong-answer vocabulary per slot, with a canonical citation per
  // (query, slot, distractor) so systems can agree on wrong answers too.
  std::map<std::tuple<std::string, std::string, int>, std::pair<std::string, Span>> wrong_homes;

  const auto random_doc = [&]() { return doc_name(name, rng.uniform_int(0, config.corpus_docs - 1)); };
  const auto random_span = [&]() {
    const std::int64_t start = rng.uniform_int(150, 900);
    return Span{start, start + 8 + rng.uniform_int(0, 14)};
  };

  // Queries, slots and gold fills.
  for (int q = 0; q < config.n_queries; ++q) {
    Query query;
    char qid[32];
    std::snprintf(qid, sizeof(qid), "%s%04d", query_prefix.c_str(), q);
    query.id = qid;
    query.entity_type = q % 2 == 0 ? EntityType::PER : EntityType::ORG;
    query.name = "entity " + std::to_string(entity_offset + q);
    const int pool0 = (3 * q) % config.corpus_docs;
    query.doc_id = doc_name(name, pool0);
    query.span = Span{100, 100 + static_cast<std::int64_t>(query.name.size()) - 1};

    std::vector<std::string> slots = registry.slots_for(query.entity_type);
    for (std::size_t i = slots.size(); i > 1; --i) {
      std::swap(slots[i - 1], slots[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    slots.resize(std::min<std::size_t>(slots.size(), config.slots_per_query));
    std::sort(slots.begin(), slots.end());
    query.slots = slots;

    for (std::size_t si = 0; si < slots.size(); ++si) {
      KeyCell& cell = cells[{query.id, slots[si]}];
      const bool single = registry.is_single_valued(slots[si]);
      const int n_gold = single ? 1 : 1 + rng.uniform_int(0, 2);
      for (int g = 0; g < n_gold; ++g) {
        GoldFill gold;
        gold.fill = "v" + std::to_string(entity_offset + q) + "x" + std::to_string(si) + "x" +
                    std::to_string(g);
        gold.doc_id = doc_name(name, (3 * q + rng.uniform_int(0, 2)) % config.corpus_docs);
        gold.span = random_span();
        cell.gold.push_back(std::move(gold));
      }
      // Occasionally the assessors know a fill no system can reach.
      if (!single && rng.bernoulli(0.15)) {
        GoldFill gold;
        gold.fill = "v" + std::to_string(entity_offset + q) + "x" + std::to_string(si) + "xm";
        gold.doc_id = random_doc();
        gold.span = random_span();
        gold.manual_only = true;
        cell.gold.push_back(std::move(gold));
      }
    }
    bundle.queries.push_back(std::move(query));
  }

  // System emissions.
  for (std::size_t s = 0; s < config.systems.size(); ++s) {
    const SystemProfile& profile = config.systems[s];
    RunFile run;
    run.run_id = profile.run_id;
    run.team_id = team_of_run(profile.run_id);

    for (const Query& query : bundle.queries) {
      for (std::size_t si = 0; si < query.slots.size(); ++si) {
        const std::string& slot = query.slots[si];
        KeyCell& cell = cells.at({query.id, slot});

        int n_correct = 0;
        for (const GoldFill& gold : cell.gold) {
          if (gold.manual_only || !rng.bernoulli(profile.recall)) continue;
          ++n_correct;
          cell.emitted_gold.insert(gold.fill);

          ResponseLine line;
          line.query_id = query.id;
          line.slot = slot;
          line.run_id = profile.run_id;
          line.filler = gold.fill;
          if (rng.bernoulli(config.doc_agreement)) {
            line.filler_provenance =
                Provenance{gold.doc_id, {jittered(gold.span, config.offset_jitter, rng)}};
          } else {
            line.filler_provenance = Provenance{random_doc(), {random_span()}};
          }
          Span rel = line.filler_provenance->spans.front();
          rel.start = std::max<std::int64_t>(0, rel.start - 12);
          rel.end += 18;
          line.relation_provenance = Provenance{line.filler_provenance->doc_id, {rel}};
          line.confidence = correct_confidence(rng, config.confidence_noise, system_bias[s]);
          run.lines.push_back(std::move(line));
        }

        // Spurious volume targets the configured precision in expectation.
        const double reachable = static_cast<double>(
            std::count_if(cell.gold.begin(), cell.gold.end(),
                          [](const GoldFill& g) { return !g.manual_only; }));
        const double expected =
            reachable * profile.recall * (1.0 - profile.precision) / profile.precision;
        int n_spurious = static_cast<int>(expected);
        if (rng.bernoulli(expected - static_cast<double>(n_spurious))) ++n_spurious;

        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < std::min(n_spurious, config.distractor_vocab)) {
          chosen.insert(rng.uniform_int(0, config.distractor_vocab - 1));
        }
        for (int j : chosen) {
          const std::string fill = "x" + std::to_string(si) + "x" + std::to_string(j);
          auto [home, fresh] = wrong_homes.try_emplace(std::make_tuple(query.id, slot, j),
                                                       std::make_pair(random_doc(), random_span()));
          cell.emitted_spurious.insert(fill);

          ResponseLine line;
          line.query_id = query.id;
          line.slot = slot;
          line.run_id = profile.run_id;
          line.filler = fill;
          // Wrong answers share their canonical citation half as often as
          // correct ones; dissenters cite documents at random.
          if (rng.bernoulli(0.5 * config.doc_agreement)) {
            line.filler_provenance = Provenance{
                home->second.first, {jittered(home->second.second, config.offset_jitter, rng)}};
          } else {
            line.filler_provenance = Provenance{random_doc(), {random_span()}};
          }
          Span rel = line.filler_provenance->spans.front();
          rel.start = std::max<std::int64_t>(0, rel.start - 12);
          rel.end += 18;
          line.relation_provenance = Provenance{line.filler_provenance->doc_id, {rel}};
          line.confidence = spurious_confidence(rng, config.confidence_noise, system_bias[s]);
          run.lines.push_back(std::move(line));
        }

        if (n_correct == 0 && chosen.empty()) {
          ResponseLine line;
          line.query_id = query.id;
          line.slot = slot;
          line.run_id = profile.run_id;
          line.nil = true;
          run.lines.push_back(std::move(line));
        }
      }
    }

    std::sort(run.lines.begin(), run.lines.end(),
              [](const ResponseLine& a, const ResponseLine& b) {
                return std::tie(a.query_id, a.slot, a.nil, a.filler) <
                       std::tie(b.query_id, b.slot, b.nil, b.filler);
              });
    bundle.runs.push_back(std::move(run));
  }

  // Key: gold fills are C (pooled when some system found them, manual
  // otherwise); emitted wrong fills are assessed W.
  for (const auto& [key, cell] : cells) {
    for (const GoldFill& gold : cell.gold) {
      KeyEntry entry;
      entry.query_id = key.first;
      entry.slot = key.second;
      entry.fill_norm = normalize_fill(gold.fill);
      entry.correct = true;
      entry.origin =
          cell.emitted_gold.count(gold.fill) ? KeyOrigin::POOLED : KeyOrigin::MANUAL;
      bundle.key.push_back(std::move(entry));
    }
    for (const std::string& fill : cell.emitted_spurious) {
      KeyEntry entry;
      entry.query_id = key.first;
      entry.slot = key.second;
      entry.fill_norm = normalize_fill(fill);
      entry.correct = false;
      entry.origin = KeyOrigin::POOLED;
      bundle.key.push_back(std::move(entry));
    }
  }
  std::sort(bundle.key.begin(), bundle.key.end(), [](const KeyEntry& a, const KeyEntry& b) {
    return std::tie(a.query_id, a.slot, a.fill_norm) < std::tie(b.query_id, b.slot, b.fill_norm);
  });
  return bundle;
}

}  // namespace

std::pair<Bundle, Bundle> generate(const GeneratorConfig& config) {
  config.validate();
  const SlotRegistry& registry = SlotRegistry::builtin();
  SynthRng rng(config.seed);

  // One calibration bias per system, shared by both bundles.
  std::vector<double> bias;
  bias.reserve(config.systems.size());
  for (std::size_t s = 0; s < config.systems.size(); ++s) {
    bias.push_back(rng.uniform(-config.confidence_noise, config.confidence_noise));
  }

  Bundle train = make_bundle("train", "TR", 0, config, bias, registry, rng);
  Bundle test = make_bundle("test", "TE", config.n_queries, config, bias, registry, rng);

  Diagnostics diag;
  const BudgetTable budgets =
      estimate_budgets(pooled_lines(train), train.key, registry, {}, diag);
  train.budgets = budgets;
  test.budgets = budgets;
  return {std::move(train), std::move(test)};
}

std::vector<ResponseLine> pooled_lines(const Bundle& bundle) {
  std::vector<ResponseLine> lines;
  for (const RunFile& run : bundle.runs) {
    lines.insert(lines.end(), run.lines.begin(), run.lines.end());
  }
  return lines;
}

CorpusIndex index_corpus(const Bundle& bundle) {
  CorpusIndex index;
  for (const auto& [doc_id, text] : bundle.corpus) index.add_document(doc_id, text);
  return index;
}

void write_bundle(const Bundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "runs");
  std::filesystem::create_directories(dir / "corpus");
  write_text_file(dir / "queries.xml", write_queries(bundle.queries));
  write_text_file(dir / "key.tsv", write_key(bundle.key));
  write_text_file(dir / "budgets.tsv", bundle.budgets.to_tsv());
  for (const RunFile& run : bundle.runs) {
    write_text_file(dir / "runs" / (run.run_id + ".tsv"), write_run_file(run.lines));
  }
  for (const auto& [doc_id, text] : bundle.corpus) {
    write_text_file(dir / "corpus" / (doc_id + ".txt"), text);
  }
}

Bundle load_bundle(const std::filesystem::path& dir, const SlotRegistry& registry,
                   Diagnostics& diag) {
  Bundle bundle;
  bundle.name = dir.filename().string();
  bundle.queries = parse_queries(read_text_file(dir / "queries.xml"), registry);
  bundle.key = parse_key(dir / "key.tsv");
  if (std::filesystem::exists(dir / "budgets.tsv")) {
    bundle.budgets = BudgetTable::parse_tsv(read_text_file(dir / "budgets.tsv"), "budgets.tsv");
  }

  std::vector<std::filesystem::path> run_files;
  for (const auto& entry : std::filesystem::directory_iterator(dir / "runs")) {
    if (entry.is_regular_file() && entry.path().extension() == ".tsv") {
      run_files.push_back(entry.path());
    }
  }
  std::sort(run_files.begin(), run_files.end());
  for (const auto& path : run_files) {
    bundle.runs.push_back(parse_run_file(path, registry, RunParseOptions{}, diag));
  }

  if (std::filesystem::exists(dir / "corpus")) {
    std::vector<std::filesystem::path> docs;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "corpus")) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") {
        docs.push_back(entry.path());
      }
    }
    std::sort(docs.begin(), docs.end());
    for (const auto& path : docs) {
      bundle.corpus[path.stem().string()] = read_text_file(path);
    }
  }
  return bundle;
}

}  // namespace slotfuse
