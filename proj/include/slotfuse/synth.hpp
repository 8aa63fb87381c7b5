// Seeded synthetic multi-system benchmark: generates paired train/test
// bundles (runs, queries, key, corpus, budgets) with controllable system
// quality, document agreement and confidence calibration, so the pipeline
// can be exercised end to end without the license-restricted originals.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "slotfuse/aggregator.hpp"
#include "slotfuse/core.hpp"
#include "slotfuse/ingest.hpp"
#include "slotfuse/util.hpp"

namespace slotfuse {

// Deterministic sampling helpers over one engine; every distribution is
// hand-rolled from raw bits so outputs do not depend on the standard
// library's distribution implementations.
class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

  double uniform();                          // [0, 1)
  double uniform(double lo, double hi);      // [lo, hi)
  int uniform_int(int lo, int hi);           // inclusive bounds
  bool bernoulli(double p);
  double normal(double sigma);               // Box-Muller, mean 0
  double kumaraswamy(double a, double b);    // Beta-like via inverse CDF

 private:
  std::mt19937_64 engine_;
};

struct SystemProfile {
  std::string run_id;
  double precision = 0.5;  // target share of emitted fills that are correct
  double recall = 0.5;     // chance of emitting each reachable gold fill
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  int n_queries = 100;       // per bundle
  int slots_per_query = 3;
  std::vector<SystemProfile> systems;
  double doc_agreement = 0.7;     // chance a correct fill cites the gold document
  double offset_jitter = 2.0;     // stddev of span endpoint noise, characters
  double confidence_noise = 0.1;  // calibration noise and per-system bias scale
  int corpus_docs = 200;          // documents per bundle
  int distractor_vocab = 40;      // shared wrong fills per slot

  void validate() const;
};

// Everything one evaluation year consists of.
struct Bundle {
  std::string name;
  std::vector<RunFile> runs;
  std::vector<Query> queries;
  std::vector<KeyEntry> key;
  std::map<std::string, std::string> corpus;  // doc_id -> text
  BudgetTable budgets;
};

// Train and test bundles from one seed; the same systems answer freshly
// sampled queries in each, and both carry budgets estimated from the train
// year. Identical configs produce byte-identical bundles.
std::pair<Bundle, Bundle> generate(const GeneratorConfig& config);

// All non-NIL and NIL lines of every run, pooled.
std::vector<ResponseLine> pooled_lines(const Bundle& bundle);

CorpusIndex index_corpus(const Bundle& bundle);

// Bundle directory layout: queries.xml, key.tsv, budgets.tsv,
// runs/<run_id>.tsv, corpus/<doc_id>.txt.
void write_bundle(const Bundle& bundle, const std::filesystem::path& dir);
Bundle load_bundle(const std::filesystem::path& dir, const SlotRegistry& registry,
                   Diagnostics& diag);

}  // namespace slotfuse
