#include <algorithm>
#include <array>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>

#include <json.hpp>

#include "varshift/lint.hpp"

namespace varshift {

namespace {

using json = nlohmann::json;

constexpr std::array<std::pair<OpKind, std::string_view>, 10> kOpNames{{
    {OpKind::BN, "BN"},
    {OpKind::ReLU, "ReLU"},
    {OpKind::ELU, "ELU"},
    {OpKind::Weight, "Weight"},
    {OpKind::Dropout, "Dropout"},
    {OpKind::Add, "Add"},
    {OpKind::GAP, "GAP"},
    {OpKind::FC, "FC"},
    {OpKind::Input, "Input"},
    {OpKind::Output, "Output"},
}};

std::string ticked(std::string_view id) { return "'" + std::string(id) + "'"; }

// Reports the first back edge met by a DFS that starts from nodes in document order.
void reject_cycles(const std::vector<GraphNode>& nodes,
                   const std::vector<std::vector<std::size_t>>& succs) {
  enum Color : unsigned char { White, Gray, Black };
  std::vector<Color> color(nodes.size(), White);
  std::vector<std::pair<std::size_t, std::size_t>> stack;  // (node, next successor slot)
  for (std::size_t root = 0; root < nodes.size(); ++root) {
    if (color[root] != White) continue;
    color[root] = Gray;
    stack.emplace_back(root, 0);
    while (!stack.empty()) {
      auto& [u, slot] = stack.back();
      if (slot == succs[u].size()) {
        color[u] = Black;
        stack.pop_back();
        continue;
      }
      const std::size_t v = succs[u][slot++];
      if (color[v] == Gray) {
        throw GraphError("graph has a cycle: back edge " + ticked(nodes[u].id) + " -> " +
                         ticked(nodes[v].id));
      }
      if (color[v] == White) {
        color[v] = Gray;
        stack.emplace_back(v, 0);
      }
    }
  }
}

}  // namespace

std::string_view to_string(OpKind op) noexcept {
  for (const auto& [kind, name] : kOpNames) {
    if (kind == op) return name;
  }
  return "?";
}

std::optional<OpKind> parse_op_kind(std::string_view name) noexcept {
  for (const auto& [kind, n] : kOpNames) {
    if (n == name) return kind;
  }
  return std::nullopt;
}

ModelGraph::ModelGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  const std::size_t n = nodes_.size();
  std::optional<std::size_t> input, output;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes_[i];
    if (node.id.empty()) throw GraphError("node " + std::to_string(i) + " has an empty id");
    if (!index_.emplace(node.id, i).second) throw GraphError("duplicate node id " + ticked(node.id));
    if (node.op == OpKind::Input || node.op == OpKind::Output) {
      auto& slot = node.op == OpKind::Input ? input : output;
      if (slot) {
        throw GraphError("graph has more than one " + std::string(to_string(node.op)) + " node: " +
                         ticked(nodes_[*slot].id) + " and " + ticked(node.id));
      }
      slot = i;
    }
  }
  if (!input) throw GraphError("graph has no Input node");
  if (!output) throw GraphError("graph has no Output node");
  input_ = *input;
  output_ = *output;

  preds_.assign(n, {});
  succs_.assign(n, {});
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& [from, to] = edges_[e];
    const auto f = index_.find(from);
    const auto t = index_.find(to);
    if (f == index_.end() || t == index_.end()) {
      throw GraphError("edge " + ticked(from) + " -> " + ticked(to) + " references unknown node " +
                       ticked(f == index_.end() ? from : to));
    }
    if (f->second == t->second) throw GraphError("self-loop on node " + ticked(from));
    auto& s = succs_[f->second];
    if (std::find(s.begin(), s.end(), t->second) != s.end()) {
      throw GraphError("duplicate edge " + ticked(from) + " -> " + ticked(to));
    }
    s.push_back(t->second);
    preds_[t->second].push_back(f->second);
  }

  reject_cycles(nodes_, succs_);

  for (std::size_t i = 0; i < n; ++i) {
    const auto& node = nodes_[i];
    const std::size_t np = preds_[i].size();
    const std::size_t expected = node.op == OpKind::Input ? 0 : node.op == OpKind::Add ? 2 : 1;
    if (np != expected) {
      throw GraphError(std::string(to_string(node.op)) + " node " + ticked(node.id) + " has " +
                       std::to_string(np) + " predecessors, expected " + std::to_string(expected));
    }
    if (node.op == OpKind::Output && !succs_[i].empty()) {
      throw GraphError("Output node " + ticked(node.id) + " has successors");
    }
    if (node.op != OpKind::Output && succs_[i].empty()) {
      throw GraphError("node " + ticked(node.id) + " does not lead to the Output");
    }
  }

  // Kahn's algorithm; the min-heap on document index makes the order canonical.
  std::vector<std::size_t> indegree(n);
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i) {
    indegree[i] = preds_[i].size();
    if (indegree[i] == 0) ready.push(i);
  }
  rank_.assign(n, 0);
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    rank_[u] = topo_.size();
    topo_.push_back(u);
    for (std::size_t v : succs_[u]) {
      if (--indegree[v] == 0) ready.push(v);
    }
  }
}

std::size_t ModelGraph::index_of(std::string_view id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown node " + ticked(id));
  return it->second;
}

std::vector<bool> ModelGraph::ancestors(std::size_t i) const {
  std::vector<bool> seen(size(), false);
  std::vector<std::size_t> stack{i};
  seen.at(i) = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : preds_[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
  return seen;
}

bool ModelGraph::structurally_equal(const ModelGraph& other) const {
  if (size() != other.size() || edges_.size() != other.edges_.size()) return false;
  for (const auto& node : nodes_) {
    const auto it = other.index_.find(node.id);
    if (it == other.index_.end() || other.nodes_[it->second] != node) return false;
  }
  auto a = edges_;
  auto b = other.edges_;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

ModelGraph parse_model_graph(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw GraphError(std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw GraphError("graph document must be a JSON object");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) {
    throw GraphError("graph document needs a \"nodes\" array");
  }
  if (!doc.contains("edges") || !doc["edges"].is_array()) {
    throw GraphError("graph document needs an \"edges\" array");
  }

  std::vector<GraphNode> nodes;
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
    const json& entry = doc["nodes"][i];
    if (!entry.is_object() || !entry.contains("id") || !entry["id"].is_string()) {
      throw GraphError("node " + std::to_string(i) + " needs a string \"id\"");
    }
    const std::string id = entry["id"].get<std::string>();
    if (!entry.contains("op") || !entry["op"].is_string()) {
      throw GraphError("node " + ticked(id) + " needs a string \"op\"");
    }
    const std::string op_name = entry["op"].get<std::string>();
    const auto op = parse_op_kind(op_name);
    if (!op) throw GraphError("node " + ticked(id) + " has unknown op " + ticked(op_name));
    GraphNode node{id, *op, {}};
    for (const auto& [key, value] : entry.items()) {
      if (key != "id" && key != "op") node.attributes.emplace(key, value.dump());
    }
    nodes.push_back(std::move(node));
  }

  std::vector<GraphEdge> edges;
  for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
    const json& e = doc["edges"][i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string()) {
      throw GraphError("edge " + std::to_string(i) + " must be a [from, to] pair of node ids");
    }
    edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  return ModelGraph(std::move(nodes), std::move(edges));
}

ModelGraph load_model_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GraphError("cannot read " + ticked(path));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_model_graph(buf.str());
  } catch (const GraphError& e) {
    throw GraphError(path + ": " + e.what());
  }
}

std::string serialize_model_graph(const ModelGraph& g) {
  nlohmann::ordered_json doc;
  auto nodes = nlohmann::ordered_json::array();
  for (const auto& node : g.nodes()) {
    nlohmann::ordered_json entry;
    entry["id"] = node.id;
    entry["op"] = std::string(to_string(node.op));
    for (const auto& [key, value] : node.attributes) entry[key] = nlohmann::ordered_json::parse(value);
    nodes.push_back(std::move(entry));
  }
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [from, to] : g.edges()) edges.push_back({from, to});
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  return doc.dump(2) + "\n";
}

namespace {

// Nodes in anc*(side) but not in anc*(fork), in topological order.
std::vector<std::size_t> side_nodes(const ModelGraph& g, const std::vector<bool>& side,
                                    const std::vector<bool>& fork) {
  std::vector<std::size_t> out;
  for (std::size_t u : g.topological_order()) {
    if (side[u] && !fork[u]) out.push_back(u);
  }
  return out;
}

std::string op_signature(const ModelGraph& g, const std::vector<std::size_t>& nodes) {
  std::string sig;
  for (std::size_t u : nodes) {
    sig += to_string(g.node(u).op);
    sig += ',';
  }
  return sig;
}

}  // namespace

std::vector<ResidualBlock> detect_blocks(const ModelGraph& g) {
  std::vector<ResidualBlock> blocks;
  for (std::size_t add : g.topological_order()) {
    if (g.node(add).op != OpKind::Add) continue;
    const std::size_t a = g.predecessors(add)[0];
    const std::size_t b = g.predecessors(add)[1];
    const auto anc_a = g.ancestors(a);
    const auto anc_b = g.ancestors(b);
    // Latest common ancestor in topological order.
    std::size_t fork = g.input();
    for (std::size_t u : g.topological_order()) {
      if (anc_a[u] && anc_b[u]) fork = u;
    }
    const auto anc_fork = g.ancestors(fork);
    auto side_a = side_nodes(g, anc_a, anc_fork);
    auto side_b = side_nodes(g, anc_b, anc_fork);
    std::size_t skip_pred = b;
    // The branch is the longer side; ties resolve on op sequence so that
    // node naming and edge order cannot change the choice.
    const bool swap = side_a.size() < side_b.size() ||
                      (side_a.size() == side_b.size() && op_signature(g, side_a) < op_signature(g, side_b));
    if (swap) {
      std::swap(side_a, side_b);
      skip_pred = a;
    }

    ResidualBlock block;
    block.index = blocks.size();
    block.add = g.node(add).id;
    block.fork = g.node(fork).id;
    for (std::size_t u : side_a) block.branch.push_back(g.node(u).id);
    for (std::size_t u : side_b) block.shortcut.push_back(g.node(u).id);
    block.skip_edge = {g.node(skip_pred).id, block.add};
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace varshift
