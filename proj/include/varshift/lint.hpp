#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace varshift {

enum class OpKind { BN, ReLU, ELU, Weight, Dropout, Add, GAP, FC, Input, Output };

[[nodiscard]] std::string_view to_string(OpKind op) noexcept;
[[nodiscard]] std::optional<OpKind> parse_op_kind(std::string_view name) noexcept;

struct GraphNode {
  std::string id;
  OpKind op;
  /// Extra node fields, each kept as its compact JSON text.
  std::map<std::string, std::string> attributes;

  bool operator==(const GraphNode&) const = default;
};

using GraphEdge = std::pair<std::string, std::string>;

/// Malformed or invalid graph document. The message names the offending node or edge.
class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validated DAG with exactly one Input and one Output. Add nodes have two
/// predecessors, Input none, every other node exactly one; only Output is a sink.
class ModelGraph {
 public:
  ModelGraph(std::vector<GraphNode> nodes, std::vector<GraphEdge> edges);

  [[nodiscard]] const std::vector<GraphNode>& nodes() const noexcept { return nodes_; }
  [[nodiscard]] const std::vector<GraphEdge>& edges() const noexcept { return edges_; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  [[nodiscard]] const GraphNode& node(std::size_t i) const { return nodes_.at(i); }
  [[nodiscard]] std::size_t index_of(std::string_view id) const;
  [[nodiscard]] const std::vector<std::size_t>& predecessors(std::size_t i) const { return preds_.at(i); }
  [[nodiscard]] const std::vector<std::size_t>& successors(std::size_t i) const { return succs_.at(i); }
  /// Node indices in topological order; ties follow document order.
  [[nodiscard]] const std::vector<std::size_t>& topological_order() const noexcept { return topo_; }
  /// Position of node i within topological_order().
  [[nodiscard]] std::size_t rank(std::size_t i) const { return rank_.at(i); }
  /// Flags node i and every node with a path to it.
  [[nodiscard]] std::vector<bool> ancestors(std::size_t i) const;
  [[nodiscard]] std::size_t input() const noexcept { return input_; }
  [[nodiscard]] std::size_t output() const noexcept { return output_; }

  /// Same node ids with the same ops and attributes, and the same edge multiset.
  [[nodiscard]] bool structurally_equal(const ModelGraph& other) const;

 private:
  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::vector<std::size_t>> succs_;
  std::vector<std::size_t> topo_;
  std::vector<std::size_t> rank_;
  std::size_t input_ = 0;
  std::size_t output_ = 0;
};

/// Parses `{"nodes": [{"id": str, "op": str, ...}], "edges": [[from, to], ...]}`.
[[nodiscard]] ModelGraph parse_model_graph(std::string_view document);
[[nodiscard]] ModelGraph load_model_graph(const std::string& path);
[[nodiscard]] std::string serialize_model_graph(const ModelGraph& g);

struct ResidualBlock {
  std::size_t index;
  std::string add;
  /// Last node shared by the branch and the skip path.
  std::string fork;
  /// Branch nodes in topological order.
  std::vector<std::string> branch;
  /// Skip-path nodes; empty for an identity shortcut.
  std::vector<std::string> shortcut;
  /// Edge entering `add` from the skip side.
  GraphEdge skip_edge;
};

/// One block per Add node, in topological order of the Add.
[[nodiscard]] std::vector<ResidualBlock> detect_blocks(const ModelGraph& g);

enum class PositionLabel { P0, P1, P2, P3, P4, P5, P6, P7, H1, H2, H3, H4, H5, H6, H7, Unknown };

[[nodiscard]] std::string_view to_string(PositionLabel label) noexcept;
[[nodiscard]] bool is_block_position(PositionLabel label) noexcept;
[[nodiscard]] bool is_head_position(PositionLabel label) noexcept;

struct DropoutPosition {
  std::string node_id;
  PositionLabel label;
  /// Block the dropout belongs to (or precedes, for P0).
  std::optional<std::size_t> block;
};

/// One entry per Dropout node, in topological order.
[[nodiscard]] std::vector<DropoutPosition> classify_dropout_positions(const ModelGraph& g);

enum class Verdict { Pass, Warn, Fail };
enum class Rule { Guideline1, Guideline2, MultipleDropout, UnknownPosition };

[[nodiscard]] std::string_view to_string(Verdict verdict) noexcept;
[[nodiscard]] std::string_view to_string(Rule rule) noexcept;

struct Diagnostic {
  std::string node_id;
  PositionLabel label;
  Verdict verdict;
  Rule rule;
  std::string message;
};

/// Exactly one diagnostic per Dropout node, in topological order.
[[nodiscard]] std::vector<Diagnostic> check_guidelines(const ModelGraph& g);

[[nodiscard]] bool has_failure(const std::vector<Diagnostic>& diagnostics) noexcept;

/// `<verdict> <node> <label> <rule>: <message>`
[[nodiscard]] std::string format_text(const Diagnostic& d);
/// `{"node": .., "label": .., "verdict": .., "rule": .., "message": ..}` on one line.
[[nodiscard]] std::string format_json_line(const Diagnostic& d);

}  // namespace varshift
