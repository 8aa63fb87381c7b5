#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>
#include <tuple>

#include "helpers.hpp"
#include "slotfuse/synth.hpp"
#include "slotfuse/text.hpp"

using namespace slotfuse;
namespace fs = std::filesystem;

namespace {

GeneratorConfig small_config() {
  GeneratorConfig config;
  config.seed = 99;
  config.n_queries = 20;
  config.slots_per_query = 3;
  config.systems = {{"alpha1", 0.6, 0.5}, {"beta1", 0.45, 0.35}};
  config.corpus_docs = 24;
  config.distractor_vocab = 12;
  return config;
}

// Relative path -> file content for every regular file under root.
std::map<std::string, std::string> tree_of(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), root).generic_string()] = read_text_file(entry.path());
  }
  return out;
}

std::set<std::tuple<std::string, std::string, std::string>> correct_fills(const Bundle& bundle) {
  std::set<std::tuple<std::string, std::string, std::string>> out;
  for (const KeyEntry& e : bundle.key) {
    if (e.correct) out.insert({e.query_id, e.slot, e.fill_norm});
  }
  return out;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("the raw samplers are deterministic and stay in range") {
  SynthRng a(7), b(7), c(8);
  bool diverged = false;
  for (int i = 0; i < 200; ++i) {
    const double ua = a.uniform();
    CHECK(ua == b.uniform());
    if (ua != c.uniform()) diverged = true;
    CHECK(ua >= 0.0);
    CHECK(ua < 1.0);
  }
  CHECK(diverged);

  SynthRng rng(11);
  bool low = false, high = false;
  for (int i = 0; i < 400; ++i) {
    const double u = rng.uniform(2.0, 5.0);
    CHECK(u >= 2.0);
    CHECK(u < 5.0);
    const int n = rng.uniform_int(3, 7);
    CHECK(n >= 3);
    CHECK(n <= 7);
    low = low || n == 3;
    high = high || n == 7;
    const double k = rng.kumaraswamy(1.5, 3.0);
    CHECK(k >= 0.0);
    CHECK(k <= 1.0);
    CHECK(!rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
  CHECK(low);
  CHECK(high);
  CHECK(rng.normal(0.0) == 0.0);
}

TEST_CASE("config validation rejects out-of-range settings") {
  GeneratorConfig good = small_config();
  CHECK_NOTHROW(good.validate());

  auto broken = [&](auto mutate) {
    GeneratorConfig bad = small_config();
    mutate(bad);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  };
  broken([](GeneratorConfig& c) { c.systems.clear(); });
  broken([](GeneratorConfig& c) { c.systems.push_back(c.systems[0]); });
  broken([](GeneratorConfig& c) { c.systems[0].run_id.clear(); });
  broken([](GeneratorConfig& c) { c.systems[0].precision = 1.0; });
  broken([](GeneratorConfig& c) { c.systems[0].precision = 0.0; });
  broken([](GeneratorConfig& c) { c.systems[0].recall = -0.1; });
  broken([](GeneratorConfig& c) { c.n_queries = 0; });
  broken([](GeneratorConfig& c) { c.slots_per_query = 0; });
  broken([](GeneratorConfig& c) { c.doc_agreement = 1.5; });
  broken([](GeneratorConfig& c) { c.offset_jitter = -1.0; });
  broken([](GeneratorConfig& c) { c.confidence_noise = 0.6; });
  broken([](GeneratorConfig& c) { c.corpus_docs = 3; });
  broken([](GeneratorConfig& c) { c.distractor_vocab = 0; });
}

TEST_CASE("one seed produces byte-identical bundle directories") {
  const GeneratorConfig config = small_config();
  const auto [train_a, test_a] = generate(config);
  const auto [train_b, test_b] = generate(config);

  testutil::TempDir dir("synth_repeat");
  write_bundle(train_a, dir.path() / "a_train");
  write_bundle(test_a, dir.path() / "a_test");
  write_bundle(train_b, dir.path() / "b_train");
  write_bundle(test_b, dir.path() / "b_test");

  CHECK(tree_of(dir.path() / "a_train") == tree_of(dir.path() / "b_train"));
  CHECK(tree_of(dir.path() / "a_test") == tree_of(dir.path() / "b_test"));

  // Train and test are distinct samples over distinct query ids.
  CHECK(train_a.queries.front().id != test_a.queries.front().id);
  CHECK(write_run_file(train_a.runs[0].lines) != write_run_file(test_a.runs[0].lines));

  GeneratorConfig reseeded = config;
  reseeded.seed = config.seed + 1;
  const auto [train_c, test_c] = generate(reseeded);
  CHECK(write_run_file(train_a.runs[0].lines) != write_run_file(train_c.runs[0].lines));
}

TEST_CASE("bundles have the configured shape") {
  const GeneratorConfig config = small_config();
  const auto [train, test] = generate(config);

  for (const Bundle* bundle : {&train, &test}) {
    CHECK(bundle->queries.size() == static_cast<std::size_t>(config.n_queries));
    CHECK(bundle->corpus.size() == static_cast<std::size_t>(config.corpus_docs));
    REQUIRE(bundle->runs.size() == config.systems.size());
    for (std::size_t s = 0; s < config.systems.size(); ++s) {
      CHECK(bundle->runs[s].run_id == config.systems[s].run_id);
    }
    for (const Query& q : bundle->queries) {
      CHECK(q.slots.size() <= static_cast<std::size_t>(config.slots_per_query));
      CHECK(!q.slots.empty());
    }
    bool any_correct = false, any_wrong = false;
    for (const KeyEntry& e : bundle->key) {
      any_correct = any_correct || e.correct;
      any_wrong = any_wrong || !e.correct;
    }
    CHECK(any_correct);
    CHECK(any_wrong);
  }
  CHECK(train.budgets.to_tsv() == test.budgets.to_tsv());
  CHECK(!train.budgets.to_tsv().empty());
  CHECK(pooled_lines(train).size() == train.runs[0].lines.size() + train.runs[1].lines.size());
}

TEST_CASE("every run covers every (query, slot) cell and is sorted") {
  const auto [train, test] = generate(small_config());
  std::set<std::pair<std::string, std::string>> all_cells;
  for (const Query& q : train.queries) {
    for (const std::string& slot : q.slots) all_cells.insert({q.id, slot});
  }
  for (const RunFile& run : train.runs) {
    std::set<std::pair<std::string, std::string>> covered;
    for (const ResponseLine& l : run.lines) covered.insert({l.query_id, l.slot});
    CHECK(covered == all_cells);
    CHECK(std::is_sorted(run.lines.begin(), run.lines.end(),
                         [](const ResponseLine& a, const ResponseLine& b) {
                           return std::tie(a.query_id, a.slot, a.nil, a.filler) <
                                  std::tie(b.query_id, b.slot, b.nil, b.filler);
                         }));
    for (const ResponseLine& l : run.lines) {
      if (l.nil) continue;
      CHECK(l.confidence >= 0.01);
      CHECK(l.confidence <= 0.99);
      REQUIRE(l.filler_provenance.has_value());
      CHECK(train.corpus.count(l.filler_provenance->doc_id) == 1);
    }
  }
}

TEST_CASE("realized precision and recall land near the profile targets") {
  GeneratorConfig config;
  config.seed = 2026;
  config.n_queries = 500;
  config.slots_per_query = 3;
  config.systems = {{"strong1", 0.7, 0.5}, {"weak1", 0.4, 0.3}};
  config.corpus_docs = 60;
  const auto [train, test] = generate(config);

  const auto correct = correct_fills(train);
  std::size_t reachable = 0;
  for (const KeyEntry& e : train.key) {
    // Assessor-only fills are tagged "...xm" by construction; everything
    // else was reachable by the systems.
    if (e.correct && e.fill_norm.substr(e.fill_norm.size() - 2) != "xm") ++reachable;
  }
  REQUIRE(reachable > 1000);

  for (std::size_t s = 0; s < config.systems.size(); ++s) {
    const RunFile& run = train.runs[s];
    std::size_t returned = 0, hit = 0;
    for (const ResponseLine& l : run.lines) {
      if (l.nil) continue;
      ++returned;
      if (correct.count({l.query_id, l.slot, normalize_fill(l.filler)})) ++hit;
    }
    const double precision = static_cast<double>(hit) / static_cast<double>(returned);
    const double recall = static_cast<double>(hit) / static_cast<double>(reachable);
    CHECK(std::abs(precision - config.systems[s].precision) <= 0.05);
    CHECK(std::abs(recall - config.systems[s].recall) <= 0.05);
  }
}

TEST_CASE("full document agreement with zero jitter makes citations identical") {
  GeneratorConfig config = small_config();
  config.doc_agreement = 1.0;
  config.offset_jitter = 0.0;
  const auto [train, test] = generate(config);

  const auto correct = correct_fills(train);
  std::map<std::tuple<std::string, std::string, std::string>, Provenance> seen;
  for (const RunFile& run : train.runs) {
    for (const ResponseLine& l : run.lines) {
      if (l.nil) continue;
      const auto key = std::make_tuple(l.query_id, l.slot, normalize_fill(l.filler));
      if (!correct.count(key)) continue;
      auto [it, fresh] = seen.try_emplace(key, *l.filler_provenance);
      if (!fresh) CHECK(*l.filler_provenance == it->second);
    }
  }
}

TEST_CASE("tiny recall still yields complete, mostly nil runs") {
  GeneratorConfig config = small_config();
  config.systems = {{"timid1", 0.5, 0.01}};
  const auto [train, test] = generate(config);
  const RunFile& run = train.runs[0];
  std::size_t nils = 0;
  for (const ResponseLine& l : run.lines) nils += l.nil;
  CHECK(nils > run.lines.size() / 2);
}

TEST_CASE("bundles survive a write and load round trip") {
  const auto [train, test] = generate(small_config());
  testutil::TempDir dir("synth_roundtrip");
  write_bundle(train, dir.path() / "train");

  Diagnostics diag;
  const Bundle back = load_bundle(dir.path() / "train", SlotRegistry::builtin(), diag);
  CHECK(back.name == "train");
  CHECK(write_queries(back.queries) == write_queries(train.queries));
  CHECK(write_key(back.key) == write_key(train.key));
  CHECK(back.budgets.to_tsv() == train.budgets.to_tsv());
  CHECK(back.corpus == train.corpus);
  REQUIRE(back.runs.size() == train.runs.size());
  for (std::size_t s = 0; s < back.runs.size(); ++s) {
    CHECK(back.runs[s].run_id == train.runs[s].run_id);
    CHECK(write_run_file(back.runs[s].lines) == write_run_file(train.runs[s].lines));
  }
  CHECK(index_corpus(back).document_count() == static_cast<int>(back.corpus.size()));
}

}  // TEST_SUITE
