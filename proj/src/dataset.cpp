#include "procqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include "procqa/error.hpp"
#include "procqa/json_util.hpp"
#include "procqa/parallel.hpp"

namespace procqa {

std::string_view to_string(VideoSource s) {
  switch (s) {
    case VideoSource::CaptainCook4D: return "CaptainCook4D";
    case VideoSource::COIN: return "COIN";
    case VideoSource::EgoPER: return "EgoPER";
    case VideoSource::Synthetic: return "Synthetic";
  }
  return "?";
}

std::string_view to_string(View v) { return v == View::Ego ? "ego" : "exo"; }

std::string_view to_string(QaType t) {
  switch (t) {
    case QaType::Preparation: return "Preparation";
    case QaType::Evolution: return "Evolution";
    case QaType::Counterfactual: return "Counterfactual";
    case QaType::Mistake: return "Mistake";
  }
  return "?";
}

std::optional<VideoSource> parse_video_source(std::string_view s) {
  for (auto v : {VideoSource::CaptainCook4D, VideoSource::COIN, VideoSource::EgoPER,
                 VideoSource::Synthetic}) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

std::optional<View> parse_view(std::string_view s) {
  if (s == "ego") return View::Ego;
  if (s == "exo") return View::Exo;
  return std::nullopt;
}

std::optional<QaType> parse_qa_type(std::string_view s) {
  for (auto t : kAllQaTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

const VideoMeta* Dataset::find_video(std::string_view video_id) const {
  for (const auto& v : videos) {
    if (v.video_id == video_id) return &v;
  }
  return nullptr;
}

const QAItem* Dataset::find_item(std::string_view qa_id) const {
  for (const auto& i : items) {
    if (i.qa_id == qa_id) return &i;
  }
  return nullptr;
}

namespace {

VideoMeta parse_video(const JsonCursor& c) {
  c.object();
  VideoMeta v;
  v.video_id = c.at("video_id").str();
  if (v.video_id.empty()) c.at("video_id").schema_fail("video_id must be non-empty");
  const auto src = c.at("source");
  auto source = parse_video_source(src.str());
  if (!source) src.schema_fail("unknown source '" + src.str() + "'");
  v.source = *source;
  const auto dur = c.at("duration_ms");
  v.duration_ms = dur.integer();
  if (v.duration_ms <= 0) dur.schema_fail("duration_ms must be positive");
  const auto view_c = c.at("view");
  auto view = parse_view(view_c.str());
  if (!view) view_c.schema_fail("view must be 'ego' or 'exo'");
  v.view = *view;
  v.activity = c.at("activity").str();
  v.path_or_uri = c.at("path_or_uri").str();
  return v;
}

[[noreturn]] void span_fail(const JsonCursor& c, const std::string& qa_id, const std::string& msg) {
  Error err(Errc::SpanError, "item " + qa_id + " " + c.display_path() + ": " + msg);
  err.json_path = c.display_path();
  err.qa_id = qa_id;
  throw err;
}

QAItem parse_item(const JsonCursor& c, const std::unordered_map<std::string, Millis>& durations) {
  c.object();
  QAItem item;
  item.qa_id = c.at("qa_id").str();
  if (item.qa_id.empty()) c.at("qa_id").schema_fail("qa_id must be non-empty");
  const auto vid = c.at("video_id");
  item.video_id = vid.str();
  const auto type_c = c.at("qa_type");
  auto type = parse_qa_type(type_c.str());
  if (!type) type_c.schema_fail("unknown qa_type '" + type_c.str() + "'");
  item.qa_type = *type;
  item.question = c.at("question").str();
  item.gold_answer = c.at("gold_answer").str();
  if (auto et = c.maybe("error_type")) item.error_type = et->str();
  if (auto oh = c.maybe("object_hint")) item.object_hint = oh->str();

  if (item.qa_type == QaType::Mistake && !item.error_type) {
    c.schema_fail("Mistake item " + item.qa_id + " requires error_type");
  }
  if (item.qa_type != QaType::Mistake && item.error_type) {
    c.at("error_type").schema_fail("error_type is only allowed on Mistake items");
  }

  auto dur_it = durations.find(item.video_id);
  if (dur_it == durations.end()) {
    Error err(Errc::ReferentialError,
              "item " + item.qa_id + " references unknown video '" + item.video_id + "'");
    err.json_path = vid.display_path();
    err.qa_id = item.qa_id;
    throw err;
  }

  const auto ev = c.at("gold_evidence");
  ev.array();
  if (ev.node().empty()) ev.schema_fail("gold_evidence must be non-empty");
  std::vector<TimeSpan> spans;
  for (std::size_t i = 0; i < ev.node().size(); ++i) {
    const auto sc = ev.at(i);
    const auto& n = sc.node();
    if (!n.is_array() || n.size() != 2 || !n[0].is_number() || !n[1].is_number()) {
      sc.schema_fail("span must be a [start_seconds, end_seconds] pair");
    }
    const Millis s = seconds_to_ms(n[0].get<double>());
    const Millis e = seconds_to_ms(n[1].get<double>());
    if (s < 0 || e <= s) span_fail(sc, item.qa_id, "invalid span");
    if (e > dur_it->second) {
      span_fail(sc, item.qa_id,
                "evidence ends at " + format_seconds(e) + "s beyond video duration " +
                    format_seconds(dur_it->second) + "s");
    }
    spans.push_back(TimeSpan::make(s, e));
  }
  item.gold_evidence = SpanSet::normalize(std::move(spans));
  return item;
}

}  // namespace

Dataset dataset_from_json(const nlohmann::json& doc) {
  JsonCursor root(doc);
  root.object();
  Dataset ds;
  std::unordered_map<std::string, Millis> durations;
  const auto videos = root.at("videos");
  for (std::size_t i = 0; i < videos.array().size(); ++i) {
    const auto vc = videos.at(i);
    VideoMeta v = parse_video(vc);
    if (!durations.emplace(v.video_id, v.duration_ms).second) {
      vc.at("video_id").schema_fail("duplicate video_id '" + v.video_id + "'");
    }
    ds.videos.push_back(std::move(v));
  }
  std::set<std::string> qa_ids;
  const auto items = root.at("items");
  for (std::size_t i = 0; i < items.array().size(); ++i) {
    const auto ic = items.at(i);
    QAItem item = parse_item(ic, durations);
    if (!qa_ids.insert(item.qa_id).second) {
      ic.at("qa_id").schema_fail("duplicate qa_id '" + item.qa_id + "'");
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  return dataset_from_json(read_json_file(path));
}

nlohmann::json video_meta_to_json(const VideoMeta& v) {
  return {{"video_id", v.video_id},
          {"source", to_string(v.source)},
          {"duration_ms", v.duration_ms},
          {"view", to_string(v.view)},
          {"activity", v.activity},
          {"path_or_uri", v.path_or_uri}};
}

nlohmann::json qa_item_to_json(const QAItem& item) {
  nlohmann::json j = {{"qa_id", item.qa_id},
                      {"video_id", item.video_id},
                      {"qa_type", to_string(item.qa_type)},
                      {"question", item.question},
                      {"gold_answer", item.gold_answer},
                      {"gold_evidence", spanset_to_json(item.gold_evidence)}};
  if (item.error_type) j["error_type"] = *item.error_type;
  if (item.object_hint) j["object_hint"] = *item.object_hint;
  return j;
}

nlohmann::json dataset_to_json(const Dataset& ds) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : ds.videos) videos.push_back(video_meta_to_json(v));
  nlohmann::json items = nlohmann::json::array();
  for (const auto& i : ds.items) items.push_back(qa_item_to_json(i));
  return {{"videos", std::move(videos)}, {"items", std::move(items)}};
}

DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  st.n_videos = ds.videos.size();
  st.n_qa = ds.items.size();
  if (!ds.videos.empty()) {
    double sum = 0.0;
    for (const auto& v : ds.videos) sum += ms_to_seconds(v.duration_ms);
    st.mean_duration_s = sum / static_cast<double>(ds.videos.size());
    double sq = 0.0;
    for (const auto& v : ds.videos) {
      const double d = ms_to_seconds(v.duration_ms) - st.mean_duration_s;
      sq += d * d;
    }
    st.std_duration_s = std::sqrt(sq / static_cast<double>(ds.videos.size()));

    std::map<VideoSource, std::size_t> counts;
    for (const auto& v : ds.videos) ++counts[v.source];
    for (const auto& [src, n] : counts) {
      st.source_fractions[src] = static_cast<double>(n) / static_cast<double>(ds.videos.size());
    }
  }
  if (!ds.items.empty()) {
    std::map<QaType, std::size_t> counts;
    std::set<std::string> mistake_videos;
    for (const auto& item : ds.items) {
      ++counts[item.qa_type];
      if (item.qa_type == QaType::Mistake) mistake_videos.insert(item.video_id);
    }
    for (const auto& [type, n] : counts) {
      st.qa_type_fractions[type] = static_cast<double>(n) / static_cast<double>(ds.items.size());
    }
    st.n_mistake_videos = mistake_videos.size();
  }
  return st;
}

nlohmann::json stats_to_json(const DatasetStats& st) {
  nlohmann::json types = nlohmann::json::object();
  for (const auto& [t, f] : st.qa_type_fractions) types[std::string(to_string(t))] = f;
  nlohmann::json sources = nlohmann::json::object();
  for (const auto& [s, f] : st.source_fractions) sources[std::string(to_string(s))] = f;
  return {{"n_videos", st.n_videos},
          {"n_qa", st.n_qa},
          {"mean_duration_s", st.mean_duration_s},
          {"std_duration_s", st.std_duration_s},
          {"qa_type_fractions", types},
          {"source_fractions", sources},
          {"n_mistake_videos", st.n_mistake_videos}};
}

std::string format_stats_table(const DatasetStats& st) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "videos            %zu\nqa pairs          %zu\n", st.n_videos,
                st.n_qa);
  out << buf;
  std::snprintf(buf, sizeof buf, "duration (s)      %.1f +- %.1f\n", st.mean_duration_s,
                st.std_duration_s);
  out << buf;
  std::snprintf(buf, sizeof buf, "mistake videos    %zu\n", st.n_mistake_videos);
  out << buf;
  for (const auto& [t, f] : st.qa_type_fractions) {
    std::snprintf(buf, sizeof buf, "  %-16s%6.1f%%\n", std::string(to_string(t)).c_str(),
                  100.0 * f);
    out << buf;
  }
  for (const auto& [s, f] : st.source_fractions) {
    std::snprintf(buf, sizeof buf, "  %-16s%6.1f%%\n", std::string(to_string(s)).c_str(),
                  100.0 * f);
    out << buf;
  }
  return out.str();
}

std::size_t edit_distance(const ActionSequence& a, const ActionSequence& b) {
  // Two-row Wagner-Fischer.
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    fail(Errc::DimensionMismatch, "embedding dimensions differ: " + std::to_string(u.size()) +
                                      " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) fail(Errc::ZeroVector, "cosine similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

std::vector<std::string> redundancy_filter(
    const std::vector<VideoMeta>& videos,
    const std::map<std::string, ActionSequence>& sequences,
    const std::map<std::string, std::vector<double>>& embeddings,
    const RedundancyThresholds& thresholds) {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(thresholds.max_edit_ratio) || !in_unit(thresholds.min_cosine)) {
    fail(Errc::InvalidArgument, "redundancy thresholds must lie in [0, 1]");
  }
  for (const auto& v : videos) {
    if (!sequences.contains(v.video_id)) {
      fail(Errc::MissingAnnotation, "video " + v.video_id + " has no action sequence");
    }
    if (!embeddings.contains(v.video_id)) {
      fail(Errc::MissingAnnotation, "video " + v.video_id + " has no embedding");
    }
  }

  std::map<std::string, std::vector<const VideoMeta*>> kept_by_activity;
  std::vector<std::string> kept;
  for (const auto& cand : videos) {
    const auto& cand_seq = sequences.at(cand.video_id);
    const auto& cand_emb = embeddings.at(cand.video_id);
    auto& group = kept_by_activity[cand.activity];
    const bool redundant = std::any_of(group.begin(), group.end(), [&](const VideoMeta* k) {
      const auto& seq = sequences.at(k->video_id);
      const std::size_t longest = std::max(seq.size(), cand_seq.size());
      const double ratio =
          longest == 0 ? 0.0
                       : static_cast<double>(edit_distance(seq, cand_seq)) /
                             static_cast<double>(longest);
      if (ratio <= thresholds.max_edit_ratio) return true;
      return cosine_similarity(embeddings.at(k->video_id), cand_emb) >= thresholds.min_cosine;
    });
    if (!redundant) {
      group.push_back(&cand);
      kept.push_back(cand.video_id);
    }
  }
  return kept;
}

BlindFilterResult blind_filter(const std::vector<QAItem>& items, const BlindAnswerFn& answer_fn,
                               const BlindJudgeFn& judge_fn, double threshold,
                               std::size_t parallelism) {
  if (!(threshold >= 0.0 && threshold <= 5.0)) {
    fail(Errc::InvalidArgument, "blind-filter threshold must lie in [0, 5]");
  }
  std::vector<BlindAudit> audit(items.size());
  parallel_for(items.size(), parallelism, [&](std::size_t i) {
    const auto& item = items[i];
    try {
      auto& rec = audit[i];
      rec.qa_id = item.qa_id;
      rec.blind_answer = answer_fn(item.question);
      rec.score = judge_fn(item.question, item.gold_answer, rec.blind_answer);
      rec.dropped = rec.score.average() >= threshold;
    } catch (Error& e) {
      if (!e.qa_id) e.qa_id = item.qa_id;
      throw;
    } catch (const std::exception& e) {
      Error err(Errc::BackendError, "item " + item.qa_id + ": " + e.what());
      err.qa_id = item.qa_id;
      throw err;
    }
  });
  BlindFilterResult result;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!audit[i].dropped) result.kept.push_back(items[i]);
  }
  result.audit = std::move(audit);
  return result;
}

nlohmann::json blind_audit_to_json(const BlindAudit& a) {
  return {{"qa_id", a.qa_id},
          {"blind_answer", a.blind_answer},
          {"judge", judge_score_to_json(a.score)},
          {"dropped", a.dropped}};
}

}  // namespace procqa
