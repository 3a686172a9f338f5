#include "procqa/judge_score.hpp"

#include <cstdint>
#include <string>

#include "procqa/error.hpp"

namespace procqa {

JudgeScore JudgeScore::make(int ci, int do_, int cu, int tu) {
  JudgeScore s;
  s.dims_ = {ci, do_, cu, tu};
  for (int d : s.dims_) {
    if (d < kMin || d > kMax) {
      fail(Errc::InvalidArgument, "judge dimension " + std::to_string(d) + " outside [0, 5]");
    }
  }
  return s;
}

nlohmann::json judge_score_to_json(const JudgeScore& s) {
  return {{"ci", s.ci()}, {"do", s.do_()}, {"cu", s.cu()}, {"tu", s.tu()},
          {"average", s.average()}};
}

JudgeScore judge_score_from_json(const nlohmann::json& j) {
  auto dim = [&](const char* key) {
    if (!j.is_object() || !j.contains(key) || !j[key].is_number_integer()) {
      fail(Errc::JudgeParseError, std::string("judge field '") + key + "' missing or not an integer");
    }
    const auto v = j[key].get<std::int64_t>();
    if (v < JudgeScore::kMin || v > JudgeScore::kMax) {
      fail(Errc::JudgeParseError, std::string("judge field '") + key + "' = " + std::to_string(v) +
                                      " outside [0, 5]");
    }
    return static_cast<int>(v);
  };
  const int ci = dim("ci"), d = dim("do"), cu = dim("cu"), tu = dim("tu");
  try {
    return JudgeScore::make(ci, d, cu, tu);
  } catch (const Error& e) {
    fail(Errc::JudgeParseError, e.what());
  }
}

}  // namespace procqa
