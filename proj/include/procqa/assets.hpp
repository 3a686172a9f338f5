#pragma once

// Versioned text assets compiled into the library from assets/.

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace procqa {

std::string_view plan_grammar_ebnf();

// Prompt templates by id: "planner_v1", "judge_v1".
std::optional<std::string_view> prompt_template(std::string_view id);

// Replaces every {{name}} with vars[name]; unknown placeholders are an
// InvalidArgument error so a template typo cannot ship silently.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace procqa
