#include "procqa/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include "procqa/assets.hpp"
#include "procqa/error.hpp"
#include "procqa/json_util.hpp"
#include "procqa/parallel.hpp"

namespace procqa {

std::string_view to_string(MatchingPolicy p) {
  return p == MatchingPolicy::Optimal ? "optimal" : "greedy";
}

std::optional<MatchingPolicy> parse_matching_policy(std::string_view s) {
  if (s == "optimal") return MatchingPolicy::Optimal;
  if (s == "greedy") return MatchingPolicy::Greedy;
  return std::nullopt;
}

namespace {

__extension__ typedef __int128 Wide;

using Assignment = std::vector<std::pair<std::size_t, std::size_t>>;  // (pred, gt)
using Weights = std::vector<std::vector<IouFraction>>;               // [pred][gt]

Rational to_rational(const IouFraction& f) { return Rational(f.intersection_ms, f.union_ms); }

// a < b, exactly.
bool less(const IouFraction& a, const IouFraction& b) {
  return static_cast<Wide>(a.intersection_ms) * b.union_ms <
         static_cast<Wide>(b.intersection_ms) * a.union_ms;
}

// Above this many spans on the smaller side the subset DP gets expensive and
// the Hungarian method on doubles takes over.
constexpr std::size_t kExactLimit = 12;

// Max-weight matching by DP over subsets of the smaller side, exact.
Assignment assign_exact(const Weights& w, std::size_t np, std::size_t ng) {
  const bool rows_are_pred = np >= ng;
  const std::size_t rows = rows_are_pred ? np : ng;
  const std::size_t cols = rows_are_pred ? ng : np;
  auto weight = [&](std::size_t r, std::size_t c) -> const IouFraction& {
    return rows_are_pred ? w[r][c] : w[c][r];
  };
  const std::size_t states = std::size_t{1} << cols;
  std::vector<std::optional<Rational>> dp(states);
  dp[0] = Rational(0);
  std::vector<std::vector<int>> choice(rows, std::vector<int>(states, -1));
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::optional<Rational>> next = dp;  // row left unmatched
    for (std::size_t mask = 0; mask < states; ++mask) {
      if (!dp[mask]) continue;
      for (std::size_t c = 0; c < cols; ++c) {
        if (mask & (std::size_t{1} << c)) continue;
        const IouFraction& f = weight(r, c);
        if (f.intersection_ms == 0) continue;
        const std::size_t to = mask | (std::size_t{1} << c);
        Rational v = *dp[mask] + to_rational(f);
        if (!next[to] || v > *next[to]) {
          next[to] = std::move(v);
          choice[r][to] = static_cast<int>(c);
        }
      }
    }
    dp = std::move(next);
  }
  std::size_t best = 0;
  for (std::size_t mask = 1; mask < states; ++mask) {
    if (dp[mask] && *dp[mask] > *dp[best]) best = mask;
  }
  Assignment out;
  std::size_t mask = best;
  // choice[r][state] is the column row r took to reach `state`, or -1 when
  // the row was left unmatched and the state carried over.
  for (std::size_t r = rows; r-- > 0;) {
    const int c = choice[r][mask];
    if (c >= 0) {
      out.emplace_back(rows_are_pred ? r : static_cast<std::size_t>(c),
                       rows_are_pred ? static_cast<std::size_t>(c) : r);
      mask ^= std::size_t{1} << c;
    }
  }
  return out;
}

// Hungarian method (potentials, O(n^2 m)) maximizing total IoU, n <= m.
Assignment assign_hungarian(const Weights& w, std::size_t np, std::size_t ng) {
  const bool rows_are_pred = np <= ng;
  const std::size_t n = rows_are_pred ? np : ng;
  const std::size_t m = rows_are_pred ? ng : np;
  auto cost = [&](std::size_t r, std::size_t c) {
    return -(rows_are_pred ? w[r][c] : w[c][r]).value();
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    const std::size_t r = p[j] - 1, c = j - 1;
    const std::size_t pi = rows_are_pred ? r : c, gi = rows_are_pred ? c : r;
    if (w[pi][gi].intersection_ms > 0) out.emplace_back(pi, gi);
  }
  return out;
}

Assignment assign_greedy(const Weights& w, std::size_t np, std::size_t ng) {
  std::vector<std::pair<std::size_t, std::size_t>> cand;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) {
      if (w[i][j].intersection_ms > 0) cand.emplace_back(i, j);
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [&](const auto& a, const auto& b) {
    return less(w[b.first][b.second], w[a.first][a.second]);
  });
  std::vector<bool> pu(np, false), gu(ng, false);
  Assignment out;
  for (const auto& [i, j] : cand) {
    if (pu[i] || gu[j]) continue;
    pu[i] = gu[j] = true;
    out.emplace_back(i, j);
  }
  return out;
}

}  // namespace

std::vector<MatchedPair> match_spans(const SpanSet& pred, const SpanSet& gt,
                                     MatchingPolicy policy) {
  const std::size_t np = pred.size(), ng = gt.size();
  Weights w(np, std::vector<IouFraction>(ng));
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < ng; ++j) w[i][j] = span_iou_fraction(pred[i], gt[j]);
  }
  Assignment a;
  if (np > 0 && ng > 0) {
    if (policy == MatchingPolicy::Greedy) {
      a = assign_greedy(w, np, ng);
    } else if (std::min(np, ng) <= kExactLimit) {
      a = assign_exact(w, np, ng);
    } else {
      a = assign_hungarian(w, np, ng);
    }
  }
  std::sort(a.begin(), a.end());
  std::vector<MatchedPair> out;
  std::vector<bool> pu(np, false), gu(ng, false);
  for (const auto& [i, j] : a) {
    out.push_back({pred[i], gt[j], w[i][j]});
    pu[i] = gu[j] = true;
  }
  for (std::size_t i = 0; i < np; ++i) {
    if (!pu[i]) out.push_back({pred[i], std::nullopt, {0, 1}});
  }
  for (std::size_t j = 0; j < ng; ++j) {
    if (!gu[j]) out.push_back({std::nullopt, gt[j], {0, 1}});
  }
  return out;
}

Rational mean_iou_exact(const SpanSet& pred, const SpanSet& gt, MatchingPolicy policy) {
  if (gt.empty()) fail(Errc::EmptyGroundTruth, "mean IoU needs at least one ground-truth span");
  Rational sum(0);
  for (const auto& p : match_spans(pred, gt, policy)) {
    if (p.iou.intersection_ms > 0) sum += to_rational(p.iou);
  }
  return sum / Rational(static_cast<long long>(std::max(pred.size(), gt.size())));
}

double mean_iou(const SpanSet& pred, const SpanSet& gt, MatchingPolicy policy) {
  return mean_iou_exact(pred, gt, policy).convert_to<double>();
}

// ---- judge ---------------------------------------------------------------

JudgeBackend JudgeBackend::stub(std::vector<StubRule> rules) {
  JudgeBackend b;
  b.kind = JudgeKind::Stub;
  b.rules = std::move(rules);
  return b;
}

JudgeBackend JudgeBackend::remote(std::string endpoint, CompletionFn complete) {
  if (endpoint.empty()) fail(Errc::ConfigError, "the remote judge needs an endpoint");
  if (!complete) fail(Errc::ConfigError, "the remote judge needs a completion function");
  JudgeBackend b;
  b.kind = JudgeKind::Remote;
  b.endpoint = std::move(endpoint);
  b.complete = std::move(complete);
  return b;
}

std::vector<StubRule> stub_rules_from_json(const nlohmann::json& doc) {
  JsonCursor c(doc);
  std::vector<StubRule> rules;
  for (std::size_t i = 0; i < c.array().size(); ++i) {
    const auto r = c.at(i);
    const auto s = r.at("score");
    auto dim = [&](const char* k) { return static_cast<int>(s.at(k).integer()); };
    try {
      rules.push_back({r.at("answer_contains").str(),
                       JudgeScore::make(dim("ci"), dim("do"), dim("cu"), dim("tu"))});
    } catch (const Error& e) {
      if (e.code() != Errc::InvalidArgument) throw;
      s.schema_fail(e.what());
    }
  }
  return rules;
}

namespace {

std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char ch : s) {
    if (std::isalnum(ch)) {
      cur += static_cast<char>(std::tolower(ch));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

double token_f1(const std::string& a, const std::string& b) {
  auto ta = tokens(a), tb = tokens(b);
  if (ta.empty() || tb.empty()) return ta.empty() && tb.empty() ? 1.0 : 0.0;
  std::sort(ta.begin(), ta.end());
  std::sort(tb.begin(), tb.end());
  std::vector<std::string> common;
  std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  const double precision = static_cast<double>(common.size()) / static_cast<double>(ta.size());
  const double recall = static_cast<double>(common.size()) / static_cast<double>(tb.size());
  return 2 * precision * recall / (precision + recall);
}

JudgeScore stub_judge(const std::string&, const std::string& gold, const std::string& answer,
                      const std::vector<StubRule>& rules) {
  const std::string a = trim(answer);
  if (a == trim(gold)) return JudgeScore::uniform(JudgeScore::kMax);
  if (a.empty()) return JudgeScore::uniform(JudgeScore::kMin);
  const std::string la = lower(a);
  for (const auto& r : rules) {
    if (la.find(lower(r.answer_contains)) != std::string::npos) return r.score;
  }
  return JudgeScore::uniform(static_cast<int>(std::lround(5.0 * token_f1(a, gold))));
}

std::string judge_prompt(const std::string& question, const std::string& gold,
                         const std::string& answer, const std::string& template_id) {
  const auto tmpl = prompt_template(template_id);
  if (!tmpl) fail(Errc::ConfigError, "unknown judge prompt template '" + template_id + "'");
  return render_template(*tmpl, {{"question", question}, {"gold", gold}, {"answer", answer}});
}

JudgeScore parse_judge_reply(const std::string& reply) {
  const auto open = reply.find('{');
  if (open == std::string::npos) fail(Errc::JudgeParseError, "judge reply has no JSON object");
  int depth = 0;
  bool in_string = false, escaped = false;
  std::size_t close = std::string::npos;
  for (std::size_t i = open; i < reply.size() && close == std::string::npos; ++i) {
    const char ch = reply[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (ch == '\\') escaped = true;
      else if (ch == '"') in_string = false;
    } else if (ch == '"') {
      in_string = true;
    } else if (ch == '{') {
      ++depth;
    } else if (ch == '}' && --depth == 0) {
      close = i;
    }
  }
  if (close == std::string::npos) fail(Errc::JudgeParseError, "judge reply has an unterminated object");
  const auto j = nlohmann::json::parse(reply.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded()) fail(Errc::JudgeParseError, "judge reply is not valid JSON");
  return judge_score_from_json(j);
}

JudgeScore judge_answer(const std::string& question, const std::string& gold,
                        const std::string& answer, const JudgeBackend& backend) {
  if (trim(question).empty()) fail(Errc::InvalidArgument, "judge needs a question");
  if (trim(gold).empty()) fail(Errc::InvalidArgument, "judge needs a gold answer");
  if (backend.kind == JudgeKind::Stub) return stub_judge(question, gold, answer, backend.rules);
  if (!backend.complete) fail(Errc::ConfigError, "the remote judge has no completion function");
  const std::string prompt = judge_prompt(question, gold, answer, backend.prompt_template_id);
  try {
    return parse_judge_reply(backend.complete(prompt));
  } catch (const Error& e) {
    if (e.code() != Errc::JudgeParseError) throw;
    const std::string reask = prompt + "\n\nYour previous reply could not be used (" + e.what() +
                              "). Reply with only the JSON object.";
    return parse_judge_reply(backend.complete(reask));
  }
}

// ---- evaluation and reports ----------------------------------------------

nlohmann::json item_eval_to_json(const ItemEval& e) {
  nlohmann::json j = {
      {"qa_id", e.qa_id},
      {"qa_type", std::string(to_string(e.qa_type))},
      {"judge", e.judge ? judge_score_to_json(*e.judge) : nlohmann::json(nullptr)},
      {"score", e.score()},
      {"iou", e.iou},
      {"failure", e.failure},
  };
  if (e.failure) j["failure_reason"] = e.failure_reason;
  return j;
}

ItemEval item_eval_from_json(const nlohmann::json& j) {
  JsonCursor c(j);
  c.object();
  ItemEval e;
  e.qa_id = c.at("qa_id").str();
  const auto t = c.at("qa_type");
  const auto qt = parse_qa_type(t.str());
  if (!qt) t.schema_fail("unknown qa_type '" + t.str() + "'");
  e.qa_type = *qt;
  if (auto judge = c.maybe("judge")) {
    try {
      e.judge = judge_score_from_json(judge->node());
    } catch (const Error& err) {
      judge->schema_fail(err.what());
    }
  }
  e.iou = c.at("iou").number();
  if (!(e.iou >= 0.0 && e.iou <= 1.0)) c.at("iou").schema_fail("iou must lie in [0, 1]");
  e.failure = c.at("failure").boolean();
  if (auto r = c.maybe("failure_reason")) e.failure_reason = r->str();
  return e;
}

std::string item_evals_to_text(const std::vector<ItemEval>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) arr.push_back(item_eval_to_json(r));
  return arr.dump(2) + "\n";
}

std::vector<ItemEval> load_item_evals(const std::filesystem::path& path) {
  const auto doc = read_json_file(path);
  JsonCursor c(doc);
  std::vector<ItemEval> rows;
  for (std::size_t i = 0; i < c.array().size(); ++i) rows.push_back(item_eval_from_json(c.at(i).node()));
  return rows;
}

std::vector<ItemEval> evaluate_predictions(const Dataset& dataset,
                                           const std::vector<Prediction>& predictions,
                                           const JudgeBackend& judge, MatchingPolicy policy,
                                           std::size_t parallelism) {
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) {
    if (!dataset.find_item(p.qa_id)) {
      Error err(Errc::UnknownItem, "prediction for unknown item '" + p.qa_id + "'");
      err.qa_id = p.qa_id;
      throw err;
    }
    by_id[p.qa_id] = &p;
  }
  std::vector<ItemEval> rows(dataset.items.size());
  parallel_for(rows.size(), std::max<std::size_t>(1, parallelism), [&](std::size_t i) {
    const QAItem& item = dataset.items[i];
    ItemEval& row = rows[i];
    row.qa_id = item.qa_id;
    row.qa_type = item.qa_type;
    auto it = by_id.find(item.qa_id);
    if (it == by_id.end()) {
      row.failure = true;
      row.failure_reason = "no prediction";
      return;
    }
    const Prediction& p = *it->second;
    row.iou = mean_iou(p.evidence, item.gold_evidence, policy);
    try {
      row.judge = judge_answer(item.question, item.gold_answer, p.answer, judge);
    } catch (const Error& e) {
      row.failure = true;
      row.failure_reason = std::string(errc_name(e.code())) + ": " + e.what();
    }
  });
  return rows;
}

BenchmarkReport aggregate_rows(const std::vector<ItemEval>& rows) {
  struct Acc {
    std::size_t n = 0, failures = 0;
    double score = 0.0, iou = 0.0;
  };
  std::map<QaType, Acc> per;
  Acc all;
  for (const auto& r : rows) {
    for (Acc* a : {&per[r.qa_type], &all}) {
      ++a->n;
      a->failures += r.failure ? 1 : 0;
      a->score += r.score();
      a->iou += r.iou;
    }
  }
  auto cell = [](const Acc& a) {
    ReportCell c;
    c.count = a.n;
    c.failures = a.failures;
    if (a.n > 0) {
      c.mean_score = a.score / static_cast<double>(a.n);
      c.miou_pct = 100.0 * a.iou / static_cast<double>(a.n);
    }
    return c;
  };
  BenchmarkReport report;
  for (const auto& [t, a] : per) report.per_type[t] = cell(a);
  report.overall = cell(all);
  return report;
}

BenchmarkReport aggregate_report(const std::vector<QAItem>& items,
                                 const std::map<std::string, ItemScore>& scores) {
  std::set<std::string> ids;
  for (const auto& item : items) ids.insert(item.qa_id);
  for (const auto& [id, _] : scores) {
    if (!ids.contains(id)) fail(Errc::UnknownItem, "score for unknown item '" + id + "'");
  }
  std::vector<ItemEval> rows;
  for (const auto& item : items) {
    ItemEval r;
    r.qa_id = item.qa_id;
    r.qa_type = item.qa_type;
    auto it = scores.find(item.qa_id);
    if (it == scores.end()) {
      r.failure = true;
      r.failure_reason = "no prediction";
    } else {
      r.judge = it->second.judge;
      r.iou = it->second.iou;
    }
    rows.push_back(std::move(r));
  }
  return aggregate_rows(rows);
}

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

nlohmann::json cell_json(const ReportCell& c) {
  return {{"count", c.count},
          {"failures", c.failures},
          {"score", round2(c.mean_score)},
          {"miou_pct", round2(c.miou_pct)}};
}

std::string fixed2(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string rstrip(std::string s) {
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

// Column headings as in the published results tables.
std::string_view column_title(QaType t) {
  switch (t) {
    case QaType::Preparation: return "Preparation";
    case QaType::Evolution: return "Evolution";
    case QaType::Counterfactual: return "Counterfact";
    case QaType::Mistake: return "Mistake";
  }
  return "?";
}

}  // namespace

nlohmann::json report_to_json(const BenchmarkReport& report) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [t, c] : report.per_type) per[std::string(to_string(t))] = cell_json(c);
  return {{"per_type", per}, {"overall", cell_json(report.overall)}};
}

std::string format_report_table(const BenchmarkReport& report, const std::string& row_label) {
  constexpr std::size_t kLabel = 14, kScore = 8, kGroup = 18;
  std::string titles = pad("", kLabel), heads = pad("Model", kLabel);
  std::string values = pad(row_label, kLabel), counts = pad("items", kLabel),
              fails = pad("failures", kLabel);
  auto add = [&](std::string_view title, const ReportCell* c) {
    titles += pad(std::string(title), kGroup);
    heads += pad(pad("Score", kScore) + "mIoU%", kGroup);
    if (c && c->count > 0) {
      values += pad(pad(fixed2(c->mean_score), kScore) + fixed2(c->miou_pct), kGroup);
      counts += pad(std::to_string(c->count), kGroup);
      fails += pad(std::to_string(c->failures), kGroup);
    } else {
      values += pad(pad("-", kScore) + "-", kGroup);
      counts += pad("0", kGroup);
      fails += pad("0", kGroup);
    }
  };
  for (QaType t : kAllQaTypes) {
    auto it = report.per_type.find(t);
    add(column_title(t), it == report.per_type.end() ? nullptr : &it->second);
  }
  add("Average", &report.overall);
  return rstrip(titles) + "\n" + rstrip(heads) + "\n" + rstrip(values) + "\n" + rstrip(counts) +
         "\n" + rstrip(fails) + "\n";
}

}  // namespace procqa
