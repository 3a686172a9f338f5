#pragma once

#include <array>

#include <nlohmann/json.hpp>

namespace procqa {

// Four rubric dimensions, each an integer in [0, 5]:
// contextual integration, detail orientation, contextual understanding,
// temporal understanding. The average is always recomputed locally.
class JudgeScore {
 public:
  static constexpr int kMin = 0;
  static constexpr int kMax = 5;

  JudgeScore() = default;
  // Throws Error(InvalidArgument) when any dimension is outside [0, 5].
  static JudgeScore make(int ci, int do_, int cu, int tu);
  static JudgeScore uniform(int value) { return make(value, value, value, value); }

  int ci() const noexcept { return dims_[0]; }
  int do_() const noexcept { return dims_[1]; }
  int cu() const noexcept { return dims_[2]; }
  int tu() const noexcept { return dims_[3]; }
  int total() const noexcept { return dims_[0] + dims_[1] + dims_[2] + dims_[3]; }
  double average() const noexcept { return total() / 4.0; }

  bool operator==(const JudgeScore&) const = default;

 private:
  std::array<int, 4> dims_{0, 0, 0, 0};
};

nlohmann::json judge_score_to_json(const JudgeScore& s);
// Reads {"ci","do","cu","tu"}; any stored "average" is ignored.
JudgeScore judge_score_from_json(const nlohmann::json& j);

}  // namespace procqa
