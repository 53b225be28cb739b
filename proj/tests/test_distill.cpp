#include <random>
#include <set>

#include <gtest/gtest.h>

#include "grs/distill.hpp"
#include "grs/llm/mock.hpp"
#include "support.hpp"

using namespace grs;
using grs::testing::make_catalog;
using grs::testing::make_catalog_specs;
using grs::testing::TempDir;

namespace {

// Generator returning a fixed list per query.
class FixedBackend final : public GenerativeRetriever {
 public:
  FixedBackend(const Catalog& catalog, std::map<std::string, std::vector<std::string>> table)
      : catalog_(&catalog), table_(std::move(table)) {}

  GenerationResult generate(const std::string& query, std::size_t k) const override {
    auto it = table_.find(query);
    if (it == table_.end()) throw Error(ErrorCode::kTransport, "unreachable generator");
    return collect_generation(query, it->second, *catalog_, k);
  }

 private:
  const Catalog* catalog_;
  std::map<std::string, std::vector<std::string>> table_;
};

llm::ModelEndpoint named(const std::string& name) {
  llm::ModelEndpoint e;
  e.name = name;
  return e;
}

LabeledPair pos(const std::string& q, const std::string& d) {
  return {q, d, Label::kPositive, Provenance::kAnnotatedPositive};
}

LabeledPair neg(const std::string& q, const std::string& d) {
  return {q, d, Label::kNegative, Provenance::kMinedNegative};
}

}  // namespace

TEST(SampleQueries, SmallLogReturnsEverything) {
  const std::vector<QueryLogEntry> log = {{"a", 30}, {"b", 20}, {"c", 10}};
  auto got = sample_queries(log, 1, 7);
  std::sort(got.begin(), got.end());
  EXPECT_EQ(got, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(sample_queries(log, 0, 7).empty());
  EXPECT_THROW(sample_queries({}, 1, 7), Error);
}

TEST(SampleQueries, DeterministicAndStratified) {
  std::vector<QueryLogEntry> log;
  for (int i = 0; i < 30; ++i) log.push_back({"q" + std::to_string(i), static_cast<std::uint64_t>(100 - i)});
  const auto a = sample_queries(log, 2, 5);
  EXPECT_EQ(a, sample_queries(log, 2, 5));
  ASSERT_EQ(a.size(), 6u);
  // Ranked by frequency, q0..q9 top, q10..q19 middle, q20..q29 bottom.
  std::array<int, 3> per{};
  for (const auto& q : a) ++per[static_cast<std::size_t>(std::stoi(q.substr(1)) / 10)];
  EXPECT_EQ(per, (std::array<int, 3>{2, 2, 2}));
  const auto many = sample_queries(log, 50, 5);
  EXPECT_EQ(std::set<std::string>(many.begin(), many.end()).size(), 30u);
}

TEST(Unanimity, AllJudgesMustSayIrrelevant) {
  using V = llm::JudgeVerdict;
  const std::vector<V> all_irr = {V::kIrrelevant, V::kIrrelevant};
  const std::vector<V> split = {V::kIrrelevant, V::kRelevant};
  const std::vector<V> unparsed = {V::kIrrelevant, V::kUnparseable};
  const std::vector<V> single = {V::kIrrelevant};
  EXPECT_TRUE(unanimous_irrelevant(all_irr));
  EXPECT_FALSE(unanimous_irrelevant(split));
  EXPECT_FALSE(unanimous_irrelevant(unparsed));
  EXPECT_TRUE(unanimous_irrelevant(single));
}

TEST(MineNegatives, CountsAndUnanimity) {
  const auto catalog = make_catalog({"D1", "D2", "D3"});
  const FixedBackend backend(catalog, {{"q1", {"D1", "D2", "ghost"}}, {"q2", {"D3"}}});
  llm::MockScript a;
  a.add_substring("document <D1>", "Irrelevant");
  a.add_substring("document <D2>", "Irrelevant");
  a.set_default_reply("Relevant");
  llm::MockScript b;
  b.add_substring("document <D1>", "不相关");
  b.add_substring("document <D2>", "相关");
  b.set_default_reply("Irrelevant");
  llm::ScriptedChatClient client;
  client.set_script("a", a);
  client.set_script("b", b);
  const JudgeEnsemble ensemble{&client, {named("a"), named("b")}};
  const auto res = mine_negatives({"q1", "q2"}, backend, catalog, ensemble, {5, 3, 2});
  ASSERT_EQ(res.negatives.size(), 1u);
  EXPECT_EQ(res.negatives[0].query, "q1");
  EXPECT_EQ(res.negatives[0].doc_id, "D1");
  EXPECT_EQ(res.negatives[0].label, Label::kNegative);
  // Every resolved document is judged by every judge: (2 + 1) * 2.
  EXPECT_EQ(res.stats.total_judge_calls(), 6u);
  EXPECT_EQ(client.calls(), 6u);
  EXPECT_EQ(res.stats.judge_calls.at("a"), 3u);
  EXPECT_EQ(res.stats.invalid_docids, 1u);
  EXPECT_EQ(res.stats.generations, 4u);
}

TEST(MineNegatives, FailuresCapsAndConfig) {
  const auto catalog = make_catalog({"D1", "D2", "D3"});
  const FixedBackend backend(catalog, {{"q", {"D1", "D2", "D3"}}});
  llm::MockScript irr;
  irr.set_default_reply("Irrelevant");
  llm::ScriptedChatClient client;
  client.set_script("a", irr);
  // Judge "down" has no script, so every call fails and blocks unanimity.
  const JudgeEnsemble broken{&client, {named("a"), named("down")}};
  const auto none = mine_negatives({"q", "missing"}, backend, catalog, broken, {5, 0, 1});
  EXPECT_TRUE(none.negatives.empty());
  EXPECT_EQ(none.stats.unparseable_verdicts, 3u);
  EXPECT_EQ(none.stats.queries_skipped, 1u);

  const JudgeEnsemble ok{&client, {named("a")}};
  const auto capped = mine_negatives({"q"}, backend, catalog, ok, {5, 2, 1});
  EXPECT_EQ(capped.negatives.size(), 2u);
  EXPECT_EQ(capped.stats.negatives_capped, 1u);

  EXPECT_THROW(mine_negatives({"q"}, backend, catalog, JudgeEnsemble{&client, {}}), Error);
}

TEST(ReasoningSource, BalancedSample) {
  std::vector<LabeledPair> positives, negatives;
  for (int i = 0; i < 10; ++i) positives.push_back(pos("q" + std::to_string(i), "P" + std::to_string(i)));
  for (int i = 0; i < 4; ++i) negatives.push_back(neg("q" + std::to_string(i), "N" + std::to_string(i)));
  const auto src = build_reasoning_source(positives, negatives, {{}, {}, 3});
  ASSERT_EQ(src.size(), 8u);
  EXPECT_EQ(std::count_if(src.begin(), src.end(), [](const auto& p) { return p.label == Label::kPositive; }), 4);
  EXPECT_EQ(src, build_reasoning_source(positives, negatives, {{}, {}, 3}));

  const auto all_pos = build_reasoning_source(positives, negatives, {20, {}, 3});
  EXPECT_EQ(all_pos.size(), 14u);

  const auto no_neg = build_reasoning_source(positives, {}, {3, {}, 3});
  ASSERT_EQ(no_neg.size(), 3u);
  for (const auto& p : no_neg) EXPECT_EQ(p.label, Label::kPositive);

  const auto capped = build_reasoning_source(positives, negatives, {0, 2, 3});
  EXPECT_EQ(capped.size(), 2u);
}

TEST(ReasoningSource, ConflictingNegativesDropped) {
  PipelineStats stats;
  const auto src = build_reasoning_source({pos("q", "D")}, {neg("q", "D"), neg("q", "E")}, {0, {}, 1}, &stats);
  ASSERT_EQ(src.size(), 1u);
  EXPECT_EQ(src[0].doc_id, "E");
  EXPECT_EQ(stats.negatives_conflicting, 1u);
}

TEST(ReasoningBatch, SkipsEmptyReplies) {
  std::vector<std::string> titles;
  std::vector<LabeledPair> pairs;
  for (int i = 0; i < 8; ++i) {
    titles.push_back("T" + std::to_string(i));
    pairs.push_back(i % 2 ? neg("q", titles.back()) : pos("q", titles.back()));
  }
  const auto catalog = make_catalog(titles);
  llm::MockScript s;
  s.add_substring("document <T3>", " ");
  s.add_substring("is irrelevant to", "because it is off topic");
  s.add_substring("is relevant to", "because it matches");
  llm::ScriptedChatClient client(s);
  PipelineStats stats;
  std::vector<Failure> failures;
  const auto recs = generate_reasoning_batch({&client, named("r")}, pairs, catalog, &stats, &failures, 3);
  ASSERT_EQ(recs.size(), 7u);
  EXPECT_EQ(stats.skipped_pairs, 1u);
  EXPECT_EQ(stats.reasoning_requested, 8u);
  ASSERT_EQ(failures.size(), 1u);
  EXPECT_EQ(failures[0].doc_id, "T3");
  for (const auto& r : recs) {
    EXPECT_EQ(r.reasoning, r.pair.label == Label::kPositive ? "because it matches" : "because it is off topic");
    EXPECT_NE(r.prompt.find(r.pair.label == Label::kPositive ? "is relevant to" : "is irrelevant to"),
              std::string::npos);
  }
  EXPECT_EQ(recs[3].pair.doc_id, "T4");
}

TEST(Corpus, CountsAndBaseOnly) {
  const auto catalog = make_catalog_specs({{"A", {{"risk", "low"}}}, {"B", {}}}, {"risk"});
  const std::vector<LabeledPair> positives = {pos("q1", "A"), pos("q2", "B")};
  const auto base = build_base_corpus(positives, catalog);
  ASSERT_EQ(base.size(), 3u);  // two pairs, one document with known attributes
  EXPECT_EQ(base[2].kind, RecordKind::kDocKnowledge);
  EXPECT_EQ(base[2].output, "risk: low");

  TempDir dir;
  const auto only = emit_corpus(base, {}, dir / "base.jsonl");
  EXPECT_EQ(grs::testing::read_file(dir / "base.jsonl"), serialize_corpus(base, {}));
  EXPECT_EQ(only.records_emitted.at("reasoning"), 0u);

  std::vector<ReasoningRecord> reasoning;
  for (int i = 0; i < 4; ++i) reasoning.push_back({pos("q1", "A"), "prompt", "why " + std::to_string(i), "r"});
  const auto stats = emit_corpus(base, reasoning, dir / "full.jsonl");
  const auto text = grs::testing::read_file(dir / "full.jsonl");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 7);
  EXPECT_EQ(stats.records_emitted.at("qd_pair"), 2u);
  EXPECT_EQ(stats.records_emitted.at("doc_knowledge"), 1u);
  EXPECT_EQ(stats.records_emitted.at("reasoning"), 4u);
  EXPECT_EQ(text.substr(0, serialize_corpus(base, {}).size()), serialize_corpus(base, {}));
}

TEST(Positives, LoadAndValidate) {
  const auto catalog = make_catalog({"中银创新医疗混合C"});
  TempDir dir;
  dir.write("p.jsonl", "{\"query\": \"抗流感基金\", \"doc_id\": \" 中银创新医疗混合C \"}\n\n");
  const auto p = load_positives((dir / "p.jsonl").string(), catalog);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].doc_id, "中银创新医疗混合C");
  dir.write("bad.jsonl", "{\"query\": \"q\", \"doc_id\": \"nope\"}\n");
  EXPECT_THROW(load_positives((dir / "bad.jsonl").string(), catalog), Error);
}
