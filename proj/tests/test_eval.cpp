#include <doctest.h>

#include <chrono>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "procqa/eval.hpp"
#include "support.hpp"

using namespace procqa;
using support::code_of;

namespace {

TimeSpan S(Millis a, Millis b) { return TimeSpan::make(a, b); }
TimeSpan Sec(Millis a, Millis b) { return TimeSpan::make(a * 1000, b * 1000); }

SpanSet to_set(const std::vector<oracle::Interval>& v) {
  std::vector<TimeSpan> spans;
  for (const auto& i : v) spans.push_back(S(i.start, i.end));
  return SpanSet::normalize(spans);
}

std::vector<oracle::Interval> to_intervals(const SpanSet& s) {
  std::vector<oracle::Interval> out;
  for (const auto& t : s) out.push_back({t.start_ms(), t.end_ms()});
  return out;
}

// Best total for larger instances: the overlap graph splits into connected
// components, each small enough to enumerate on its own.
std::optional<oracle::Rational> componentwise_total(const std::vector<oracle::Interval>& p,
                                                    const std::vector<oracle::Interval>& g) {
  const std::size_t n = p.size() + g.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> root = [&](std::size_t x) {
    return parent[x] == x ? x : parent[x] = root(parent[x]);
  };
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (p[i].start < g[j].end && g[j].start < p[i].end) parent[root(i)] = root(p.size() + j);
    }
  }
  std::map<std::size_t, std::pair<std::vector<oracle::Interval>, std::vector<oracle::Interval>>>
      parts;
  for (std::size_t i = 0; i < p.size(); ++i) parts[root(i)].first.push_back(p[i]);
  for (std::size_t j = 0; j < g.size(); ++j) parts[root(p.size() + j)].second.push_back(g[j]);
  oracle::Rational total(0);
  for (const auto& [_, part] : parts) {
    if (part.first.size() > 7 || part.second.size() > 7) return std::nullopt;
    total += oracle::best_assignment_total(part.first, part.second);
  }
  return total;
}

// k disjoint, non-touching spans from 2k sorted distinct cut points.
std::vector<oracle::Interval> cut_intervals(std::mt19937_64& rng, std::size_t k, std::int64_t horizon) {
  std::uniform_int_distribution<std::int64_t> point(0, horizon);
  std::set<std::int64_t> cuts;
  while (cuts.size() < 2 * k) {
    const auto x = point(rng);
    if (!cuts.count(x - 1) && !cuts.count(x + 1)) cuts.insert(x);
  }
  std::vector<oracle::Interval> out;
  for (auto it = cuts.begin(); it != cuts.end(); std::advance(it, 2)) {
    out.push_back({*it, *std::next(it)});
  }
  return out;
}

oracle::Rational pair_total(const std::vector<MatchedPair>& pairs) {
  oracle::Rational t(0);
  for (const auto& m : pairs) {
    if (m.iou.intersection_ms > 0) t += oracle::Rational(m.iou.intersection_ms, m.iou.union_ms);
  }
  return t;
}

QAItem item(std::string id, QaType t) {
  QAItem q;
  q.qa_id = std::move(id);
  q.video_id = "v";
  q.qa_type = t;
  q.question = "what happened?";
  q.gold_answer = "the butter melted";
  q.gold_evidence = SpanSet::normalize({Sec(10, 20)});
  return q;
}

Dataset small_dataset() {
  Dataset d;
  VideoMeta v;
  v.video_id = "v";
  v.duration_ms = 600000;
  v.activity = "cooking";
  v.path_or_uri = "fixture://v";
  d.videos.push_back(v);
  d.items = {item("a", QaType::Preparation), item("b", QaType::Evolution),
             item("c", QaType::Counterfactual), item("d", QaType::Mistake)};
  return d;
}

}  // namespace

TEST_CASE("matching examples") {
  const auto one = SpanSet::normalize({Sec(0, 10)});
  auto pairs = match_spans(one, one);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].value() == 1.0);

  pairs = match_spans(SpanSet{}, one);
  REQUIRE(pairs.size() == 1);
  CHECK_FALSE(pairs[0].pred);
  CHECK(pairs[0].gt == Sec(0, 10));
  CHECK(pairs[0].value() == 0.0);

  const auto pred = SpanSet::normalize({Sec(0, 6), Sec(20, 30)});
  const auto gt = SpanSet::normalize({Sec(4, 10), Sec(19, 29)});
  for (auto policy : {MatchingPolicy::Optimal, MatchingPolicy::Greedy}) {
    pairs = match_spans(pred, gt, policy);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].pred == Sec(0, 6));
    CHECK(pairs[0].gt == Sec(4, 10));
    CHECK(pairs[0].iou == IouFraction{2000, 10000});
    CHECK(pairs[1].pred == Sec(20, 30));
    CHECK(pairs[1].gt == Sec(19, 29));
    CHECK(pairs[1].iou == IouFraction{9000, 11000});
  }
  // The crossed assignment has no overlap at all, so brute force agrees.
  CHECK(pair_total(pairs) == oracle::best_assignment_total(to_intervals(pred), to_intervals(gt)));

  // Zero-overlap pairs stay unmatched on both sides.
  pairs = match_spans(SpanSet::normalize({Sec(0, 5)}), SpanSet::normalize({Sec(10, 20)}));
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].pred == Sec(0, 5));
  CHECK_FALSE(pairs[0].gt);
  CHECK_FALSE(pairs[1].pred);
}

TEST_CASE("paired mean IoU is exact") {
  CHECK(mean_iou_exact(SpanSet::normalize({Sec(0, 10)}), SpanSet::normalize({Sec(5, 15)})) ==
        Rational(1, 3));
  CHECK(mean_iou(SpanSet::normalize({Sec(0, 10)}), SpanSet::normalize({Sec(0, 10)})) == 1.0);
  // One prediction matching one of two ground-truth spans.
  CHECK(mean_iou_exact(SpanSet::normalize({Sec(0, 10)}),
                       SpanSet::normalize({Sec(0, 10), Sec(20, 30)})) == Rational(1, 2));
  // Equal counts paired by hand: (2/10 + 9/11) / 2.
  CHECK(mean_iou_exact(SpanSet::normalize({Sec(0, 6), Sec(20, 30)}),
                       SpanSet::normalize({Sec(4, 10), Sec(19, 29)})) ==
        (Rational(2, 10) + Rational(9, 11)) / 2);
  CHECK(mean_iou(SpanSet{}, SpanSet::normalize({Sec(0, 10)})) == 0.0);
  CHECK(code_of([] { mean_iou(SpanSet::normalize({Sec(0, 1)}), SpanSet{}); }) ==
        Errc::EmptyGroundTruth);
}

TEST_CASE("mean IoU matches the rasterization oracle") {
  std::mt19937_64 rng(20260217);
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = oracle::random_intervals(rng, 0, 4, 3000);
    const auto g = oracle::random_intervals(rng, 1, 4, 3000);
    CAPTURE(trial);
    const auto ps = to_set(p), gs = to_set(g);
    REQUIRE(ps.size() == p.size());
    CHECK(mean_iou_exact(ps, gs) == oracle::mean_iou(p, g));
  }
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed < std::chrono::seconds(10));
}

TEST_CASE("mean IoU properties") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = to_set(oracle::random_intervals(rng, 1, 5, 100000));
    const auto g = to_set(oracle::random_intervals(rng, 1, 5, 100000));
    const auto m = mean_iou_exact(p, g);
    CHECK(m == mean_iou_exact(g, p));
    CHECK(m >= 0);
    CHECK(m <= 1);
    CHECK((m == 1) == (p == g));
    CHECK(mean_iou_exact(p, p) == 1);
    // Greedy never beats the optimum.
    CHECK(mean_iou_exact(p, g, MatchingPolicy::Greedy) <= m);
    // Every span appears exactly once in the pairing.
    const auto pairs = match_spans(p, g);
    std::size_t np = 0, ng = 0;
    for (const auto& x : pairs) {
      np += x.pred ? 1 : 0;
      ng += x.gt ? 1 : 0;
      if (!x.pred || !x.gt) CHECK(x.iou.intersection_ms == 0);
    }
    CHECK(np == p.size());
    CHECK(ng == g.size());
  }
}

TEST_CASE("greedy can be beaten") {
  // Greedy grabs the single best pair and strands the other prediction.
  const auto p = SpanSet::normalize({S(0, 10), S(20, 180)});
  const auto g = SpanSet::normalize({S(0, 100), S(101, 200)});
  CHECK(mean_iou_exact(p, g) == oracle::mean_iou(to_intervals(p), to_intervals(g)));
  CHECK(mean_iou_exact(p, g) == (Rational(10, 100) + Rational(79, 180)) / 2);
  CHECK(mean_iou_exact(p, g, MatchingPolicy::Greedy) == Rational(80, 180) / 2);
  const auto greedy = match_spans(p, g, MatchingPolicy::Greedy);
  CHECK(greedy.size() == 3);
  CHECK(greedy[0].pred == S(20, 180));
  CHECK(greedy[0].gt == S(0, 100));
  CHECK(parse_matching_policy("greedy") == MatchingPolicy::Greedy);
  CHECK(parse_matching_policy("optimal") == MatchingPolicy::Optimal);
  CHECK_FALSE(parse_matching_policy("hungarian"));
  CHECK(to_string(MatchingPolicy::Greedy) == "greedy");
}

TEST_CASE("large instances stay optimal") {
  std::mt19937_64 rng(99);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::uniform_int_distribution<std::size_t> count(13, 22);
    const auto p = cut_intervals(rng, count(rng), 1000000);
    const auto g = cut_intervals(rng, count(rng), 1000000);
    const auto want = componentwise_total(p, g);
    if (!want) continue;
    ++checked;
    const auto pairs = match_spans(to_set(p), to_set(g));
    CHECK(pair_total(pairs).convert_to<double>() ==
          doctest::Approx(want->convert_to<double>()).epsilon(1e-12));
    CHECK(pairs.size() >= std::max(p.size(), g.size()));
  }
  CHECK(checked >= 100);

  // Identical large sets match perfectly.
  std::vector<TimeSpan> many;
  for (Millis i = 0; i < 40; ++i) many.push_back(S(i * 1000, i * 1000 + 500));
  const auto big = SpanSet::normalize(many);
  CHECK(mean_iou_exact(big, big) == 1);
}

TEST_CASE("judge score arithmetic") {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> d(0, 5);
  for (int i = 0; i < 2000; ++i) {
    const int a = d(rng), b = d(rng), c = d(rng), e = d(rng);
    const auto s = JudgeScore::make(a, b, c, e);
    CHECK(s.average() == (a + b + c + e) / 4.0);
    auto j = judge_score_to_json(s);
    j["average"] = 4.9;  // never trusted
    CHECK(judge_score_from_json(j) == s);
    CHECK(judge_score_from_json(j).average() == s.average());
  }
  CHECK(code_of([] { JudgeScore::make(6, 0, 0, 0); }) == Errc::InvalidArgument);
  CHECK(code_of([] { JudgeScore::make(0, 0, 0, -1); }) == Errc::InvalidArgument);
  CHECK(code_of([] { judge_score_from_json({{"ci", 2}, {"do", 3}, {"cu", 4}}); }) ==
        Errc::JudgeParseError);
  CHECK(code_of([] { judge_score_from_json({{"ci", 2}, {"do", 3}, {"cu", 4}, {"tu", 9}}); }) ==
        Errc::JudgeParseError);
  CHECK(code_of([] { judge_score_from_json({{"ci", 2.5}, {"do", 3}, {"cu", 4}, {"tu", 1}}); }) ==
        Errc::JudgeParseError);
}

TEST_CASE("judge reply parsing") {
  const auto s = parse_judge_reply(R"({"ci":2,"do":3,"cu":4,"tu":1})");
  CHECK(s == JudgeScore::make(2, 3, 4, 1));
  CHECK(s.average() == 2.5);
  CHECK(parse_judge_reply("Scores below.\n```json\n{\"ci\": 5, \"do\": 5, \"cu\": 4, \"tu\": 4, "
                          "\"note\": \"a } inside\", \"average\": 1}\n```\nThanks {x}") ==
        JudgeScore::make(5, 5, 4, 4));
  CHECK(code_of([] { parse_judge_reply("no json here"); }) == Errc::JudgeParseError);
  CHECK(code_of([] { parse_judge_reply("{\"ci\": 1"); }) == Errc::JudgeParseError);
  CHECK(code_of([] { parse_judge_reply("{ci: 1}"); }) == Errc::JudgeParseError);
  CHECK(code_of([] { parse_judge_reply(R"({"ci":2,"do":3,"cu":4,"tu":7})"); }) ==
        Errc::JudgeParseError);
}

TEST_CASE("remote judge asks again once") {
  std::vector<std::string> prompts;
  std::vector<std::string> replies;
  auto backend = JudgeBackend::remote("http://judge", [&](const std::string& p) {
    prompts.push_back(p);
    return replies[prompts.size() - 1];
  });

  replies = {R"({"ci":2,"do":3,"cu":4,"tu":1})"};
  CHECK(judge_answer("q?", "gold", "answer", backend).average() == 2.5);
  REQUIRE(prompts.size() == 1);
  CHECK(prompts[0].find("Question: q?") != std::string::npos);
  CHECK(prompts[0].find("Reference answer: gold") != std::string::npos);
  CHECK(prompts[0].find("Candidate answer: answer") != std::string::npos);

  prompts.clear();
  replies = {"I think it is fine.", R"({"ci":1,"do":1,"cu":1,"tu":1})"};
  CHECK(judge_answer("q?", "gold", "answer", backend) == JudgeScore::uniform(1));
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[1].find("could not be used") != std::string::npos);

  prompts.clear();
  replies = {"nope", "still nope"};
  CHECK(code_of([&] { judge_answer("q?", "gold", "answer", backend); }) == Errc::JudgeParseError);
  CHECK(prompts.size() == 2);

  auto down = JudgeBackend::remote("http://judge", [](const std::string&) -> std::string {
    throw Error(Errc::BackendUnavailable, "judge down");
  });
  CHECK(code_of([&] { judge_answer("q?", "gold", "a", down); }) == Errc::BackendUnavailable);
  CHECK(code_of([&] { judge_answer("", "gold", "a", down); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { judge_answer("q", "  ", "a", down); }) == Errc::InvalidArgument);
  CHECK(code_of([] { JudgeBackend::remote("", [](const std::string&) { return ""; }); }) ==
        Errc::ConfigError);
  CHECK(code_of([] { JudgeBackend::remote("http://judge", nullptr); }) == Errc::ConfigError);
  CHECK(code_of([] { judge_prompt("q", "g", "a", "judge_v0"); }) == Errc::ConfigError);
}

TEST_CASE("stub judge") {
  const auto stub = JudgeBackend::stub();
  CHECK(judge_answer("q", "The butter melted.", "The butter melted.", stub) ==
        JudgeScore::uniform(5));
  CHECK(judge_answer("q", "The butter melted.", "  The butter melted.\n", stub) ==
        JudgeScore::uniform(5));
  CHECK(judge_answer("q", "The butter melted.", "", stub) == JudgeScore::uniform(0));
  CHECK(judge_answer("q", "The butter melted.", "a dog barked", stub) == JudgeScore::uniform(0));
  // F1 of {the, butter, melted} against {the, butter, burned}: 2/3, 5 * 2/3 rounds to 3.
  CHECK(judge_answer("q", "The butter melted.", "the butter burned", stub) ==
        JudgeScore::uniform(3));
  CHECK(token_f1("a b c", "c b a") == 1.0);
  CHECK(token_f1("", "") == 1.0);
  CHECK(token_f1("x", "") == 0.0);
  CHECK(token_f1("a a b", "a b") == doctest::Approx(0.8));

  const auto rules = stub_rules_from_json(nlohmann::json::parse(R"([
    {"answer_contains": "BURN", "score": {"ci": 1, "do": 2, "cu": 1, "tu": 0}},
    {"answer_contains": "butter", "score": {"ci": 4, "do": 4, "cu": 4, "tu": 4}}
  ])"));
  const auto ruled = JudgeBackend::stub(rules);
  CHECK(judge_answer("q", "gold", "the butter burned", ruled) == JudgeScore::make(1, 2, 1, 0));
  CHECK(judge_answer("q", "gold", "soft butter", ruled) == JudgeScore::uniform(4));
  CHECK(judge_answer("q", "gold", "gold", ruled) == JudgeScore::uniform(5));
  CHECK(code_of([] {
          stub_rules_from_json(nlohmann::json::parse(
              R"([{"answer_contains": "x", "score": {"ci": 6, "do": 0, "cu": 0, "tu": 0}}])"));
        }) == Errc::SchemaError);
  CHECK(code_of([] { stub_rules_from_json(nlohmann::json::parse(R"([{"score": {}}])")); }) ==
        Errc::SchemaError);
}

TEST_CASE("aggregation") {
  const auto ds = small_dataset();
  std::map<std::string, ItemScore> scores = {
      {"a", {JudgeScore::uniform(2), 0.1}},
      {"b", {JudgeScore::uniform(3), 0.2}},
      {"c", {JudgeScore::uniform(4), 0.3}},
      {"d", {JudgeScore::uniform(1), 0.4}},
  };
  auto r = aggregate_report(ds.items, scores);
  CHECK(r.overall.count == 4);
  CHECK(r.overall.mean_score == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(r.overall.miou_pct == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(r.per_type.at(QaType::Mistake).mean_score == 1.0);
  const auto j = report_to_json(r);
  CHECK(j["overall"]["score"] == 2.5);
  CHECK(j["overall"]["miou_pct"] == 25.0);
  CHECK(j["per_type"]["Evolution"]["miou_pct"] == 20.0);

  const std::vector<QAItem> single = {ds.items[0]};
  r = aggregate_report(single, {{"a", {JudgeScore::uniform(5), 1.0}}});
  const auto table = format_report_table(r, "butter");
  CHECK(table.find("5.00    100.00") != std::string::npos);

  // A missing score counts as a failure worth nothing.
  scores.erase("d");
  r = aggregate_report(ds.items, scores);
  CHECK(r.overall.failures == 1);
  CHECK(r.overall.mean_score == doctest::Approx(9.0 / 4));
  CHECK(r.per_type.at(QaType::Mistake).failures == 1);
  scores["zz"] = {JudgeScore::uniform(1), 0.0};
  CHECK(code_of([&] { aggregate_report(ds.items, scores); }) == Errc::UnknownItem);
}

TEST_CASE("overall equals the item-weighted mean of type means") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> dim(0, 5), type(0, 3), count(1, 40);
  std::uniform_real_distribution<double> iou(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ItemEval> rows(static_cast<std::size_t>(count(rng)));
    for (auto& r : rows) {
      r.qa_type = kAllQaTypes[static_cast<std::size_t>(type(rng))];
      r.judge = JudgeScore::make(dim(rng), dim(rng), dim(rng), dim(rng));
      r.iou = iou(rng);
    }
    const auto rep = aggregate_rows(rows);
    double score = 0, miou = 0;
    std::size_t n = 0;
    for (const auto& [_, c] : rep.per_type) {
      score += c.mean_score * static_cast<double>(c.count);
      miou += c.miou_pct * static_cast<double>(c.count);
      n += c.count;
    }
    CHECK(n == rows.size());
    CHECK(rep.overall.mean_score == doctest::Approx(score / static_cast<double>(n)).epsilon(1e-9));
    CHECK(rep.overall.miou_pct == doctest::Approx(miou / static_cast<double>(n)).epsilon(1e-9));
  }
}

TEST_CASE("report table layout") {
  const auto ds = small_dataset();
  const auto r = aggregate_report(ds.items, {{"a", {JudgeScore::uniform(2), 0.1}},
                                             {"b", {JudgeScore::uniform(3), 0.2}},
                                             {"c", {JudgeScore::uniform(4), 0.3}},
                                             {"d", {JudgeScore::uniform(1), 0.4}}});
  const auto table = format_report_table(r, "fixture");
  std::vector<std::string> lines;
  std::istringstream in(table);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0].find("Preparation") != std::string::npos);
  CHECK(lines[0].find("Counterfact") != std::string::npos);
  // Each group heading sits above a "Score  mIoU%" pair and its values.
  const auto avg = lines[0].find("Average");
  REQUIRE(avg != std::string::npos);
  CHECK(lines[1].substr(avg, 13) == "Score   mIoU%");
  CHECK(lines[2].substr(avg) == "2.50    25.00");
  const auto prep = lines[0].find("Preparation");
  CHECK(lines[2].substr(prep, 13) == "2.00    10.00");
  CHECK(lines[2].rfind("fixture", 0) == 0);
  CHECK(lines[3].rfind("items", 0) == 0);

  // Types without items show dashes.
  const std::vector<QAItem> one = {ds.items[0]};
  const auto sparse = format_report_table(aggregate_report(one, {}), "x");
  CHECK(sparse.find("-       -") != std::string::npos);
}

TEST_CASE("evaluating predictions") {
  const auto ds = small_dataset();
  std::vector<Prediction> preds = {
      {"a", "the butter melted", SpanSet::normalize({Sec(10, 20)}), "", "a.trace.jsonl"},
      {"b", "", SpanSet::normalize({Sec(15, 25)}), "", "b.trace.jsonl"},
      {"c", "a dog barked", SpanSet{}, "", "c.trace.jsonl"},
  };
  const auto rows = evaluate_predictions(ds, preds, JudgeBackend::stub());
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].score() == 5.0);
  CHECK(rows[0].iou == 1.0);
  CHECK(rows[1].score() == 0.0);
  CHECK(rows[1].iou == doctest::Approx(1.0 / 3));
  CHECK(rows[2].iou == 0.0);
  CHECK(rows[3].failure);
  CHECK(rows[3].failure_reason == "no prediction");
  CHECK_FALSE(rows[3].judge);

  const auto parallel = evaluate_predictions(ds, preds, JudgeBackend::stub(),
                                             MatchingPolicy::Optimal, 8);
  CHECK(item_evals_to_text(parallel) == item_evals_to_text(rows));

  const auto dir = support::scratch("evals");
  support::spit(dir / "rows.json", item_evals_to_text(rows));
  const auto back = load_item_evals(dir / "rows.json");
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].qa_id == rows[i].qa_id);
    CHECK(back[i].judge == rows[i].judge);
    CHECK(back[i].iou == rows[i].iou);
    CHECK(back[i].failure == rows[i].failure);
  }

  // Judge failures become failure rows, not errors.
  auto down = JudgeBackend::remote("http://judge", [](const std::string&) -> std::string {
    throw Error(Errc::BackendUnavailable, "judge down");
  });
  const auto failed = evaluate_predictions(ds, preds, down);
  CHECK(failed[0].failure);
  CHECK(failed[0].failure_reason.rfind("BackendUnavailable", 0) == 0);
  CHECK(failed[0].iou == 1.0);

  preds.push_back({"ghost", "x", SpanSet{}, "", ""});
  CHECK(code_of([&] { evaluate_predictions(ds, preds, JudgeBackend::stub()); }) ==
        Errc::UnknownItem);
}
