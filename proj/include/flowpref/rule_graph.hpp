#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace flowpref::rules {

enum class RuleKind { Goal, Constraint };

std::string kind_name(RuleKind kind);
RuleKind kind_from_name(const std::string& name);

struct Rule {
  std::string id;
  RuleKind kind = RuleKind::Goal;
  std::string text;  // used verbatim in evaluator prompts
};

// Scoring parameters shared across the pipeline.
//   alpha  weight factor for failed predecessor goals, in [0,1)
//   beta   weight factor for failed constraints, in [0,1)
//   gamma  constant weight of constraint rules
//   t1/t2  thresholds for predecessor / constraint satisfaction
//   d      trajectory discount, in (0,1]
//   k      evaluator repetitions per rule
//   n      trajectory horizon (future rounds considered)
struct ScoreParams {
  double alpha = 0.1;
  double beta = 0.8;
  double gamma = 0.1;
  double t1 = 1.0;
  double t2 = 1.0;
  double d = 0.65;
  int k = 5;
  int n = 3;

  void validate() const;  // throws std::invalid_argument
};

struct GraphError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a weight computation references a rule without a score.
struct IncompleteEvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Directed acyclic rule graph. Predecessor edges (r' before r) connect goal
// rules; constraint edges attach a constraint rule to a goal rule.
// Immutable after construction; construction validates the full shape.
class RuleGraph {
 public:
  using Edge = std::pair<std::string, std::string>;  // (from, to)

  RuleGraph(std::vector<Rule> rules, std::vector<Edge> predecessor_edges,
            std::vector<Edge> constraint_edges);

  const std::vector<Rule>& rules() const { return rules_; }
  const std::vector<Edge>& predecessor_edges() const { return predecessor_edges_; }
  const std::vector<Edge>& constraint_edges() const { return constraint_edges_; }

  bool has_rule(const std::string& id) const;
  const Rule& rule(const std::string& id) const;

  // Incoming adjacency, in declaration order of the edge lists.
  const std::vector<std::string>& predecessors_of(const std::string& id) const;
  const std::vector<std::string>& constraints_of(const std::string& id) const;

  std::size_t goal_count() const;
  std::size_t constraint_count() const;

 private:
  std::vector<Rule> rules_;
  std::vector<Edge> predecessor_edges_;
  std::vector<Edge> constraint_edges_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::vector<std::string>> predecessors_;
  std::map<std::string, std::vector<std::string>> constraints_;

  void validate() const;
};

using RuleScores = std::map<std::string, double>;

// Threshold value function: 1 when x >= t, y otherwise.
double value_function(double x, double t, double y);

// Weight of one rule given the per-rule scores of the same dialogue prefix.
// Constraint rules get the constant gamma; goal rules get the product of
// threshold factors over their predecessors and attached constraints.
double rule_weight(const RuleGraph& graph, const std::string& rule_id,
                   const RuleScores& per_rule_values, const ScoreParams& params);

// The shipped six-rule diagnostic-process graph. Texts for rules C, D and F
// are paraphrases; the goal chain runs A -> B -> C.
RuleGraph default_graph();

struct GraphConfig {
  RuleGraph graph;
  ScoreParams params;
};

nlohmann::json graph_config_to_json(const GraphConfig& config);
GraphConfig graph_config_from_json(const nlohmann::json& value);
GraphConfig load_graph_config(const std::filesystem::path& path);

}  // namespace flowpref::rules
