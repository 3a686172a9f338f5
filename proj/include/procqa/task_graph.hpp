#pragma once

// Procedural task graphs in a DOT subset:
//
//   [strict] digraph [id] { stmt* }
//   stmt := node_id [attrs]
//         | node_id ("->" node_id)+ [attrs]
//         | ("graph" | "node" | "edge") attrs
//         | id "=" id
//
// Identifiers may be bare, numerals, or double-quoted. Attributes, ports and
// comments are ignored; subgraphs and undirected graphs are rejected.

#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace procqa {

struct TaskGraph {
  std::set<std::string> nodes;
  std::set<std::pair<std::string, std::string>> edges;

  bool operator==(const TaskGraph&) const = default;
};

// Throws ParseError / UnsupportedConstruct (with line and column) or
// InvalidGraph for self-loops.
TaskGraph parse_task_graph(std::string_view dot_text);

// One "from -> to" line per edge, in sorted order, for prompt/context use.
std::vector<std::string> task_graph_lines(const TaskGraph& graph);

}  // namespace procqa
