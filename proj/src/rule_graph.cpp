#include "flowpref/rule_graph.hpp"

#include <algorithm>
#include <set>

#include "flowpref/util.hpp"

namespace flowpref::rules {

using nlohmann::json;

std::string kind_name(RuleKind kind) {
  return kind == RuleKind::Goal ? "goal" : "constraint";
}

RuleKind kind_from_name(const std::string& name) {
  if (name == "goal") return RuleKind::Goal;
  if (name == "constraint") return RuleKind::Constraint;
  throw std::invalid_argument("unknown rule kind: " + name);
}

void ScoreParams::validate() const {
  if (alpha < 0.0 || alpha >= 1.0) throw std::invalid_argument("alpha must be in [0,1)");
  if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("beta must be in [0,1)");
  if (gamma <= 0.0) throw std::invalid_argument("gamma must be positive");
  if (d <= 0.0 || d > 1.0) throw std::invalid_argument("d must be in (0,1]");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < 0) throw std::invalid_argument("n must be >= 0");
}

RuleGraph::RuleGraph(std::vector<Rule> rules, std::vector<Edge> predecessor_edges,
                     std::vector<Edge> constraint_edges)
    : rules_(std::move(rules)),
      predecessor_edges_(std::move(predecessor_edges)),
      constraint_edges_(std::move(constraint_edges)) {
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (rules_[i].id.empty()) throw GraphError("rule id is empty");
    if (rules_[i].text.empty()) throw GraphError("rule " + rules_[i].id + " has empty text");
    if (!index_.emplace(rules_[i].id, i).second) {
      throw GraphError("duplicate rule id: " + rules_[i].id);
    }
  }
  for (const auto& [from, to] : predecessor_edges_) predecessors_[to].push_back(from);
  for (const auto& [from, to] : constraint_edges_) constraints_[to].push_back(from);
  validate();
}

bool RuleGraph::has_rule(const std::string& id) const { return index_.count(id) > 0; }

const Rule& RuleGraph::rule(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw GraphError("unknown rule id: " + id);
  return rules_[it->second];
}

const std::vector<std::string>& RuleGraph::predecessors_of(const std::string& id) const {
  static const std::vector<std::string> kEmpty;
  auto it = predecessors_.find(id);
  return it == predecessors_.end() ? kEmpty : it->second;
}

const std::vector<std::string>& RuleGraph::constraints_of(const std::string& id) const {
  static const std::vector<std::string> kEmpty;
  auto it = constraints_.find(id);
  return it == constraints_.end() ? kEmpty : it->second;
}

std::size_t RuleGraph::goal_count() const {
  return static_cast<std::size_t>(
      std::count_if(rules_.begin(), rules_.end(),
                    [](const Rule& r) { return r.kind == RuleKind::Goal; }));
}

std::size_t RuleGraph::constraint_count() const { return rules_.size() - goal_count(); }

void RuleGraph::validate() const {
  for (const auto& [from, to] : predecessor_edges_) {
    if (!has_rule(from) || !has_rule(to)) {
      throw GraphError("predecessor edge references unknown rule: " + from + " -> " + to);
    }
    if (rule(from).kind != RuleKind::Goal || rule(to).kind != RuleKind::Goal) {
      throw GraphError("predecessor edge must connect goal rules: " + from + " -> " + to);
    }
  }
  for (const auto& [from, to] : constraint_edges_) {
    if (!has_rule(from) || !has_rule(to)) {
      throw GraphError("constraint edge references unknown rule: " + from + " -> " + to);
    }
    if (rule(from).kind == RuleKind::Goal) {
      throw GraphError("constraint edge originates at a goal rule: " + from + " -> " + to);
    }
    if (rule(to).kind != RuleKind::Goal) {
      throw GraphError("constraint edge must target a goal rule: " + from + " -> " + to);
    }
  }

  // Cycle check over predecessor edges (iterative DFS, three colours).
  std::map<std::string, int> colour;
  std::map<std::string, std::vector<std::string>> outgoing;
  for (const auto& [from, to] : predecessor_edges_) outgoing[from].push_back(to);
  for (const auto& r : rules_) {
    if (colour[r.id] != 0) continue;
    std::vector<std::pair<std::string, std::size_t>> stack{{r.id, 0}};
    colour[r.id] = 1;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& outs = outgoing[node];
      if (next < outs.size()) {
        const std::string& child = outs[next++];
        if (colour[child] == 1) throw GraphError("predecessor edges contain a cycle through " + child);
        if (colour[child] == 0) {
          colour[child] = 1;
          stack.emplace_back(child, 0);
        }
      } else {
        colour[node] = 2;
        stack.pop_back();
      }
    }
  }
}

double value_function(double x, double t, double y) { return x >= t ? 1.0 : y; }

double rule_weight(const RuleGraph& graph, const std::string& rule_id,
                   const RuleScores& per_rule_values, const ScoreParams& params) {
  const Rule& r = graph.rule(rule_id);
  if (r.kind == RuleKind::Constraint) return params.gamma;

  auto score_of = [&](const std::string& id) {
    auto it = per_rule_values.find(id);
    if (it == per_rule_values.end()) {
      throw IncompleteEvaluationError("no score for rule " + id + " referenced by " + rule_id);
    }
    return it->second;
  };

  double weight = 1.0;
  for (const auto& pred : graph.predecessors_of(rule_id)) {
    weight *= value_function(score_of(pred), params.t1, params.alpha);
  }
  for (const auto& constraint : graph.constraints_of(rule_id)) {
    weight *= value_function(score_of(constraint), params.t2, params.beta);
  }
  return weight;
}

RuleGraph default_graph() {
  std::vector<Rule> rules{
      {"A", RuleKind::Goal,
       "The doctor should actively collect the patient's information and validate it before "
       "drawing conclusions."},
      {"B", RuleKind::Goal,
       "The doctor should provide a clear diagnosis of the patient's disease once enough "
       "information has been collected."},
      {"C", RuleKind::Goal,
       "The doctor should propose a concrete treatment plan for the diagnosed disease."},
      {"D", RuleKind::Constraint,
       "The doctor should follow the diagnostic process step by step without skipping stages."},
      {"E", RuleKind::Constraint,
       "The doctor should answer the patient's questions positively and never refuse to engage."},
      {"F", RuleKind::Constraint,
       "The doctor should keep the patient safe and avoid advice that could cause harm."},
  };
  std::vector<RuleGraph::Edge> predecessor_edges{{"A", "B"}, {"B", "C"}};
  std::vector<RuleGraph::Edge> constraint_edges{
      {"D", "B"}, {"D", "C"}, {"E", "A"}, {"E", "B"}, {"E", "C"},
      {"F", "A"}, {"F", "B"}, {"F", "C"},
  };
  return RuleGraph(std::move(rules), std::move(predecessor_edges), std::move(constraint_edges));
}

json graph_config_to_json(const GraphConfig& config) {
  json rules = json::array();
  for (const auto& r : config.graph.rules()) {
    rules.push_back({{"id", r.id}, {"kind", kind_name(r.kind)}, {"text", r.text}});
  }
  json predecessor_edges = json::array();
  for (const auto& [from, to] : config.graph.predecessor_edges()) {
    predecessor_edges.push_back(json::array({from, to}));
  }
  json constraint_edges = json::array();
  for (const auto& [from, to] : config.graph.constraint_edges()) {
    constraint_edges.push_back(json::array({from, to}));
  }
  json params{{"alpha", config.params.alpha}, {"beta", config.params.beta},
              {"gamma", config.params.gamma}, {"t1", config.params.t1},
              {"t2", config.params.t2},       {"d", config.params.d},
              {"k", config.params.k},         {"n", config.params.n}};
  return json{{"rules", std::move(rules)},
              {"predecessor_edges", std::move(predecessor_edges)},
              {"constraint_edges", std::move(constraint_edges)},
              {"params", std::move(params)}};
}

GraphConfig graph_config_from_json(const json& value) {
  std::vector<Rule> rules;
  for (const auto& entry : value.at("rules")) {
    rules.push_back({entry.at("id").get<std::string>(),
                     kind_from_name(entry.at("kind").get<std::string>()),
                     entry.at("text").get<std::string>()});
  }
  auto read_edges = [&](const char* key) {
    std::vector<RuleGraph::Edge> edges;
    if (value.contains(key)) {
      for (const auto& entry : value.at(key)) {
        edges.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<std::string>());
      }
    }
    return edges;
  };
  GraphConfig config{
      RuleGraph(std::move(rules), read_edges("predecessor_edges"), read_edges("constraint_edges")),
      ScoreParams{}};
  if (value.contains("params")) {
    const auto& p = value.at("params");
    config.params.alpha = p.value("alpha", config.params.alpha);
    config.params.beta = p.value("beta", config.params.beta);
    config.params.gamma = p.value("gamma", config.params.gamma);
    config.params.t1 = p.value("t1", config.params.t1);
    config.params.t2 = p.value("t2", config.params.t2);
    config.params.d = p.value("d", config.params.d);
    config.params.k = p.value("k", config.params.k);
    config.params.n = p.value("n", config.params.n);
  }
  config.params.validate();
  return config;
}

GraphConfig load_graph_config(const std::filesystem::path& path) {
  json value;
  try {
    value = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw GraphError("malformed rule config " + path.string() + ": " + e.what());
  }
  return graph_config_from_json(value);
}

}  // namespace flowpref::rules
