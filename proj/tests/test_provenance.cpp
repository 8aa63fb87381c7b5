#include <doctest.h>

#include <random>
#include <set>

#include "helpers.hpp"
#include "slotfuse/provenance.hpp"

using namespace slotfuse;

namespace {

constexpr double kTol = 1e-9;

PoolResponse resp(const std::string& id, const std::string& doc, std::int64_t start,
                  std::int64_t end) {
  return PoolResponse{id, Provenance{doc, {Span{start, end}}}};
}

// Brute-force position-set oracle for span jaccard.
std::set<std::int64_t> positions(const std::vector<Span>& spans) {
  std::set<std::int64_t> out;
  for (const Span& s : spans) {
    for (std::int64_t p = s.start; p <= s.end; ++p) out.insert(p);
  }
  return out;
}

double jaccard_oracle(const std::vector<Span>& a, const std::vector<Span>& b) {
  const auto pa = positions(a);
  const auto pb = positions(b);
  std::size_t inter = 0;
  for (std::int64_t p : pa) inter += pb.count(p);
  const std::size_t uni = pa.size() + pb.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Span> random_spans(std::mt19937_64& rng, int max_spans = 4) {
  std::uniform_int_distribution<int> count(1, max_spans);
  std::uniform_int_distribution<std::int64_t> point(0, 60);
  std::uniform_int_distribution<std::int64_t> width(0, 15);
  std::vector<Span> spans;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const std::int64_t start = point(rng);
    spans.push_back(Span{start, start + width(rng)});
  }
  return spans;
}

}  // namespace

TEST_SUITE("provenance") {

TEST_CASE("covered length merges overlaps and duplicates") {
  CHECK(covered_length({}) == 0);
  CHECK(covered_length({{10, 40}}) == 31);
  CHECK(covered_length({{1, 5}, {3, 8}}) == 8);
  CHECK(covered_length({{1, 5}, {1, 5}}) == 5);
  CHECK(covered_length({{1, 2}, {4, 5}}) == 4);
  CHECK(covered_length({{1, 2}, {3, 4}}) == 4);  // adjacent spans still merge
}

TEST_CASE("span jaccard fixture: [100,110] vs [105,120] is 6/21") {
  const double j = span_jaccard({{100, 110}}, {{105, 120}});
  CHECK(j == doctest::Approx(6.0 / 21.0).epsilon(kTol));
}

TEST_CASE("span jaccard edge cases") {
  CHECK(span_jaccard({{5, 9}}, {{5, 9}}) == doctest::Approx(1.0).epsilon(kTol));
  CHECK(span_jaccard({{0, 4}}, {{10, 14}}) == 0.0);
  CHECK(span_jaccard({}, {{1, 2}}) == 0.0);
  CHECK(span_jaccard({}, {}) == 0.0);
}

TEST_CASE("span jaccard matches a position-set oracle on random inputs") {
  std::mt19937_64 rng(20260815);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_spans(rng);
    const auto b = random_spans(rng);
    const double fast = span_jaccard(a, b);
    CHECK(fast == doctest::Approx(jaccard_oracle(a, b)).epsilon(1e-12));
    CHECK(fast == doctest::Approx(span_jaccard(b, a)).epsilon(1e-12));
    CHECK(fast >= 0.0);
    CHECK(fast <= 1.0);
    if (positions(a) == positions(b)) {
      CHECK(fast == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("span jaccard is shift invariant") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_spans(rng);
    auto b = random_spans(rng);
    const double before = span_jaccard(a, b);
    const std::int64_t shift = 1000 + trial;
    for (Span& s : a) { s.start += shift; s.end += shift; }
    for (Span& s : b) { s.start += shift; s.end += shift; }
    CHECK(span_jaccard(a, b) == doctest::Approx(before).epsilon(1e-12));
  }
}

TEST_CASE("document score fixture: three of four systems citing one doc") {
  const ProvenanceGroup pool = ProvenanceGroup::build(
      "Q1", "per:spouse",
      {resp("s1", "docA", 0, 9), resp("s2", "docA", 2, 11), resp("s3", "docA", 0, 9),
       resp("s4", "docB", 0, 9)});
  CHECK(pool.n_total == 4);
  CHECK(pool.document_provenance_score("s1") == doctest::Approx(0.75).epsilon(kTol));
  CHECK(pool.document_provenance_score("s2") == doctest::Approx(0.75).epsilon(kTol));
  CHECK(pool.document_provenance_score("s3") == doctest::Approx(0.75).epsilon(kTol));
  CHECK(pool.document_provenance_score("s4") == doctest::Approx(0.25).epsilon(kTol));
  CHECK_THROWS(pool.document_provenance_score("s9"));
}

TEST_CASE("offset score fixture: two systems sharing a document") {
  const ProvenanceGroup pool = ProvenanceGroup::build(
      "Q1", "per:title", {resp("s1", "docA", 100, 110), resp("s2", "docA", 105, 120)});
  const double expected = 0.5 * (6.0 / 21.0);
  CHECK(pool.offset_provenance_score("s1") == doctest::Approx(expected).epsilon(kTol));
  CHECK(pool.offset_provenance_score("s2") == doctest::Approx(expected).epsilon(kTol));
}

TEST_CASE("offset score fixture: three identical spans give 2/3") {
  const ProvenanceGroup pool = ProvenanceGroup::build(
      "Q1", "per:title",
      {resp("s1", "docA", 40, 50), resp("s2", "docA", 40, 50), resp("s3", "docA", 40, 50)});
  for (const char* id : {"s1", "s2", "s3"}) {
    CHECK(pool.offset_provenance_score(id) == doctest::Approx(2.0 / 3.0).epsilon(kTol));
  }
}

TEST_CASE("a lone citer of a document scores zero offset agreement") {
  const ProvenanceGroup pool = ProvenanceGroup::build(
      "Q1", "per:title", {resp("s1", "docA", 0, 9), resp("s2", "docB", 0, 9)});
  CHECK(pool.offset_provenance_score("s1") == 0.0);
  CHECK(pool.offset_provenance_score("s2") == 0.0);
}

TEST_CASE("score_all matches the per-response accessors") {
  const ProvenanceGroup pool = ProvenanceGroup::build(
      "Q1", "per:title",
      {resp("s1", "docA", 0, 9), resp("s2", "docA", 5, 14), resp("s3", "docB", 0, 9)});
  const auto scores = pool.score_all();
  REQUIRE(scores.size() == 3);
  for (const auto& [id, s] : scores) {
    CHECK(s.dps == doctest::Approx(pool.document_provenance_score(id)).epsilon(1e-12));
    CHECK(s.op == doctest::Approx(pool.offset_provenance_score(id)).epsilon(1e-12));
  }
}

TEST_CASE("random pools: document shares sum to one, offset scores stay below one") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pool_size(1, 12);
  std::uniform_int_distribution<int> doc_pick(0, 3);
  for (int trial = 0; trial < 120; ++trial) {
    std::vector<PoolResponse> responses;
    const int n = pool_size(rng);
    for (int i = 0; i < n; ++i) {
      const std::string doc = "doc" + std::to_string(doc_pick(rng));
      responses.push_back(PoolResponse{"r" + std::to_string(i), Provenance{doc, random_spans(rng)}});
    }
    const auto pool = ProvenanceGroup::build("Q", "per:title", responses);

    double share_sum = 0.0;
    for (const auto& [doc, members] : pool.groups) {
      share_sum += static_cast<double>(members.size()) / static_cast<double>(pool.n_total);
    }
    CHECK(share_sum == doctest::Approx(1.0).epsilon(1e-12));

    for (const auto& [id, s] : pool.score_all()) {
      CHECK(s.dps > 0.0);
      CHECK(s.dps <= 1.0);
      CHECK(s.op >= 0.0);
      CHECK(s.op < 1.0);  // strict: the denominator counts the excluded self
    }
  }
}

TEST_CASE("pool scores are independent of response order") {
  std::vector<PoolResponse> responses = {
      resp("a", "d1", 0, 9), resp("b", "d1", 3, 12), resp("c", "d2", 0, 9),
      resp("d", "d1", 0, 9), resp("e", "d3", 5, 6)};
  const auto baseline = ProvenanceGroup::build("Q", "s", responses).score_all();

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(responses.begin(), responses.end(), rng);
    const auto shuffled = ProvenanceGroup::build("Q", "s", responses).score_all();
    REQUIRE(shuffled.size() == baseline.size());
    for (const auto& [id, s] : baseline) {
      CHECK(shuffled.at(id).dps == doctest::Approx(s.dps).epsilon(1e-12));
      CHECK(shuffled.at(id).op == doctest::Approx(s.op).epsilon(1e-12));
    }
  }
}

TEST_CASE("candidate aggregation takes max document share and mean offset score") {
  // Two candidates for the same slot: "a" produced by s1 (docA) and s2
  // (docB), "b" produced by s3 (docA). docA holds two of three responses.
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:title", "s1", "a", 0.9, "docA", 0, 9));
  lines.push_back(testutil::line("Q1", "per:title", "s2", "a", 0.8, "docB", 0, 9));
  lines.push_back(testutil::line("Q1", "per:title", "s3", "b", 0.7, "docA", 0, 9));
  const auto candidates = group_candidates(lines);
  REQUIRE(candidates.size() == 2);
  REQUIRE(candidates[0].fill_norm == "a");

  std::vector<const Candidate*> pointers;
  for (const Candidate& c : candidates) pointers.push_back(&c);
  const auto pool = build_provenance_pool("Q1", "per:title", pointers, ProvenanceSource::FILLER);
  CHECK(pool.n_total == 3);

  // Scores per response: s1/a dps 2/3 op 1/2, s2/a dps 1/3 op 0.
  const auto [dps, op] = candidate_provenance_features(candidates[0], pool);
  CHECK(dps == doctest::Approx(2.0 / 3.0).epsilon(kTol));
  CHECK(op == doctest::Approx(0.25).epsilon(kTol));

  ProvenanceAggregation flipped;
  flipped.dps = ProvenanceAggregation::Mode::MEAN;
  flipped.op = ProvenanceAggregation::Mode::MAX;
  const auto [dps2, op2] = candidate_provenance_features(candidates[0], pool, flipped);
  CHECK(dps2 == doctest::Approx(0.5).epsilon(kTol));
  CHECK(op2 == doctest::Approx(0.5).epsilon(kTol));
}

TEST_CASE("relation provenance source reads the other column") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:title", "s1", "a", 0.9, "docA", 50, 59));
  const auto candidates = group_candidates(lines);
  const std::vector<const Candidate*> pointers = {&candidates[0]};

  const auto filler = build_provenance_pool("Q1", "per:title", pointers, ProvenanceSource::FILLER);
  const auto relation =
      build_provenance_pool("Q1", "per:title", pointers, ProvenanceSource::RELATION);
  // The helper widens the relation span around the filler span.
  const auto& filler_members = filler.groups.at("docA");
  const auto& relation_members = relation.groups.at("docA");
  CHECK(filler_members[0].provenance.spans[0] == Span{50, 59});
  CHECK(relation_members[0].provenance.spans[0] == Span{38, 65});
}

TEST_CASE("responses without the requested provenance are skipped") {
  std::vector<ResponseLine> lines;
  lines.push_back(testutil::line("Q1", "per:title", "s1", "a", 0.9, "docA", 0, 9));
  auto candidates = group_candidates(lines);
  candidates[0].responses.at("s1").relation_provenance.reset();
  const std::vector<const Candidate*> pointers = {&candidates[0]};
  const auto pool = build_provenance_pool("Q1", "per:title", pointers, ProvenanceSource::RELATION);
  CHECK(pool.n_total == 0);
  const auto [dps, op] = candidate_provenance_features(candidates[0], pool);
  CHECK(dps == 0.0);
  CHECK(op == 0.0);
}

}  // TEST_SUITE
