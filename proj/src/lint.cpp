#include <algorithm>
#include <string>

#include <json.hpp>

#include "varshift/lint.hpp"

namespace varshift {

namespace {

constexpr std::string_view kLabelNames[] = {"P0", "P1", "P2", "P3", "P4", "P5", "P6", "P7",
                                            "H1", "H2", "H3", "H4", "H5", "H6", "H7", "Unknown"};

bool is_activation(OpKind op) { return op == OpKind::ReLU || op == OpKind::ELU; }

// `ops` are the branch's non-dropout ops in order; the dropout sits after ops[t-1].
PositionLabel branch_label(const std::vector<OpKind>& ops, std::size_t t) {
  const auto last = [&](OpKind k) -> std::ptrdiff_t {
    for (std::size_t i = ops.size(); i-- > 0;) {
      if (ops[i] == k) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };
  const std::ptrdiff_t last_bn = last(OpKind::BN);
  const std::ptrdiff_t last_w = last(OpKind::Weight);
  if (last_bn < 0 || last_w < 0) return PositionLabel::Unknown;
  if (t == 0) return PositionLabel::P1;

  const auto pos = static_cast<std::ptrdiff_t>(t);
  const OpKind prev = ops[t - 1];
  if (pos > last_bn && pos > last_w) {
    if (prev == OpKind::Weight) return PositionLabel::P7;
    if (prev == OpKind::BN) return PositionLabel::P5;
    if (is_activation(prev)) return PositionLabel::P6;
    return PositionLabel::Unknown;
  }
  if (pos > last_bn) {
    if (prev == OpKind::BN) return PositionLabel::P5;
    if (is_activation(prev)) return PositionLabel::P6;
    return PositionLabel::Unknown;
  }
  if (prev == OpKind::BN) return PositionLabel::P2;
  if (is_activation(prev)) return PositionLabel::P3;
  if (prev == OpKind::Weight) return PositionLabel::P4;
  return PositionLabel::Unknown;
}

// `ops` are the head's non-dropout ops in order; the dropout sits after ops[t-1].
PositionLabel head_label(const std::vector<OpKind>& ops, std::size_t t) {
  const auto gap = std::find(ops.begin(), ops.end(), OpKind::GAP);
  if (gap == ops.end()) return PositionLabel::Unknown;
  const auto gap_idx = static_cast<std::size_t>(gap - ops.begin());
  if (t <= gap_idx) {
    switch (ops[t]) {
      case OpKind::Weight: return PositionLabel::H1;
      case OpKind::BN: return PositionLabel::H2;
      case OpKind::ReLU:
      case OpKind::ELU: return PositionLabel::H3;
      case OpKind::GAP: return PositionLabel::H4;
      default: return PositionLabel::Unknown;
    }
  }
  const OpKind prev = ops[t - 1];
  if (prev == OpKind::GAP) return PositionLabel::H5;
  if (prev == OpKind::FC) return PositionLabel::H6;
  const bool after_fc = std::find(gap + 1, ops.begin() + static_cast<std::ptrdiff_t>(t), OpKind::FC) !=
                        ops.begin() + static_cast<std::ptrdiff_t>(t);
  if (after_fc && is_activation(prev)) return PositionLabel::H7;
  return PositionLabel::Unknown;
}

// Non-dropout ops of `region` (topological order) and, per dropout, how many precede it.
struct Region {
  std::vector<OpKind> ops;
  std::vector<std::pair<std::size_t, std::size_t>> dropouts;  // (node, t)
};

Region make_region(const ModelGraph& g, const std::vector<std::size_t>& nodes) {
  Region r;
  for (std::size_t u : nodes) {
    const OpKind op = g.node(u).op;
    if (op == OpKind::Dropout) {
      r.dropouts.emplace_back(u, r.ops.size());
    } else {
      r.ops.push_back(op);
    }
  }
  return r;
}

struct Classified {
  DropoutPosition position;
  // Dropouts sharing this block branch or the head, including this one.
  std::size_t region_dropouts = 1;
};

std::vector<Classified> classify(const ModelGraph& g) {
  const auto blocks = detect_blocks(g);
  const std::size_t n = g.size();
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  // Innermost block whose branch (or shortcut) holds each node.
  std::vector<std::size_t> branch_of(n, kNone), shortcut_of(n, kNone);
  std::vector<std::vector<std::size_t>> branch_nodes(blocks.size());
  for (const auto& b : blocks) {
    for (const auto& id : b.branch) branch_nodes[b.index].push_back(g.index_of(id));
  }
  for (const auto& b : blocks) {
    for (std::size_t u : branch_nodes[b.index]) {
      if (branch_of[u] == kNone || branch_nodes[branch_of[u]].size() > branch_nodes[b.index].size()) {
        branch_of[u] = b.index;
      }
    }
    for (const auto& id : b.shortcut) {
      const std::size_t u = g.index_of(id);
      if (shortcut_of[u] == kNone) shortcut_of[u] = b.index;
    }
  }

  std::vector<std::vector<bool>> fork_ancestors;
  for (const auto& b : blocks) fork_ancestors.push_back(g.ancestors(g.index_of(b.fork)));

  std::vector<std::size_t> head_nodes;
  {
    std::vector<bool> before_head(n, false);
    if (!blocks.empty()) before_head = g.ancestors(g.index_of(blocks.back().add));
    for (std::size_t u : g.topological_order()) {
      const OpKind op = g.node(u).op;
      if (!before_head[u] && op != OpKind::Input && op != OpKind::Output) head_nodes.push_back(u);
    }
  }

  std::vector<Classified> result;
  auto emit = [&](std::size_t u, PositionLabel label, std::optional<std::size_t> block, std::size_t count) {
    result.push_back(Classified{DropoutPosition{g.node(u).id, label, block}, count});
  };

  std::vector<bool> done(n, false);
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    std::vector<std::size_t> own;
    for (std::size_t u : branch_nodes[bi]) {
      if (branch_of[u] == bi) own.push_back(u);
    }
    const Region r = make_region(g, own);
    for (const auto& [u, t] : r.dropouts) {
      emit(u, branch_label(r.ops, t), bi, r.dropouts.size());
      done[u] = true;
    }
  }
  {
    const Region r = make_region(g, head_nodes);
    for (const auto& [u, t] : r.dropouts) {
      emit(u, head_label(r.ops, t), std::nullopt, r.dropouts.size());
      done[u] = true;
    }
  }
  for (std::size_t u : g.topological_order()) {
    if (g.node(u).op != OpKind::Dropout || done[u]) continue;
    if (shortcut_of[u] != kNone) {
      emit(u, PositionLabel::Unknown, shortcut_of[u], 1);
      continue;
    }
    std::optional<std::size_t> block;
    for (std::size_t bi = 0; bi < blocks.size() && !block; ++bi) {
      if (fork_ancestors[bi][u]) block = bi;
    }
    emit(u, block ? PositionLabel::P0 : PositionLabel::Unknown, block, 1);
  }

  std::sort(result.begin(), result.end(), [&](const Classified& a, const Classified& b) {
    return g.rank(g.index_of(a.position.node_id)) < g.rank(g.index_of(b.position.node_id));
  });
  return result;
}

std::string block_name(const std::optional<std::size_t>& block) {
  return block ? "block " + std::to_string(*block) : "the network";
}

Diagnostic judge(const Classified& c) {
  const auto& pos = c.position;
  const std::string where = block_name(pos.block);
  Diagnostic d{pos.node_id, pos.label, Verdict::Fail, Rule::Guideline1, {}};
  switch (pos.label) {
    case PositionLabel::P0:
      d.message = "dropout on the trunk before the split of " + where +
                  " also reaches the skip path; move it into the residual branch";
      break;
    case PositionLabel::P1:
      d.message = "dropout at the start of the residual branch of " + where +
                  " shifts the input variance of its first BN";
      break;
    case PositionLabel::P2:
    case PositionLabel::P3:
    case PositionLabel::P4:
      d.message = "dropout precedes the last BN of " + where +
                  " and shifts its input variance; place it after the last BN";
      break;
    case PositionLabel::P5:
    case PositionLabel::P6:
      d.verdict = Verdict::Pass;
      d.message = "dropout after the last BN and before the last weight layer of " + where;
      break;
    case PositionLabel::P7:
      d.verdict = Verdict::Warn;
      d.message = "dropout after the last weight layer of " + where +
                  "; prefer placing it before that weight layer";
      break;
    case PositionLabel::H1:
    case PositionLabel::H2:
      d.rule = Rule::Guideline2;
      d.message = "dropout precedes the head BN and shifts its input variance; place it after the BN";
      break;
    case PositionLabel::H3:
    case PositionLabel::H4:
      d.rule = Rule::Guideline2;
      d.verdict = Verdict::Pass;
      d.message = "dropout after the head BN and before global average pooling";
      break;
    case PositionLabel::H5:
      d.rule = Rule::Guideline2;
      d.verdict = Verdict::Warn;
      d.message = "dropout after global average pooling; the slot before pooling gives lower train-phase variance";
      break;
    case PositionLabel::H6:
    case PositionLabel::H7:
      d.rule = Rule::Guideline2;
      d.message = "dropout after the final FC layer acts on the prediction itself; move it before pooling";
      break;
    case PositionLabel::Unknown:
      d.rule = Rule::UnknownPosition;
      d.verdict = Verdict::Warn;
      d.message = "dropout position in " + where + " does not match a known block or head slot";
      break;
  }
  if (c.region_dropouts > 1 && d.verdict != Verdict::Fail) {
    d.rule = Rule::MultipleDropout;
    d.verdict = Verdict::Warn;
    d.message = (pos.block ? where : std::string("the head")) + " has " +
                std::to_string(c.region_dropouts) + " dropout nodes; use one (" + d.message + ")";
  }
  return d;
}

}  // namespace

std::string_view to_string(PositionLabel label) noexcept {
  return kLabelNames[static_cast<std::size_t>(label)];
}

bool is_block_position(PositionLabel label) noexcept {
  return label >= PositionLabel::P0 && label <= PositionLabel::P7;
}

bool is_head_position(PositionLabel label) noexcept {
  return label >= PositionLabel::H1 && label <= PositionLabel::H7;
}

std::string_view to_string(Verdict verdict) noexcept {
  switch (verdict) {
    case Verdict::Pass: return "pass";
    case Verdict::Warn: return "warn";
    case Verdict::Fail: return "fail";
  }
  return "?";
}

std::string_view to_string(Rule rule) noexcept {
  switch (rule) {
    case Rule::Guideline1: return "Guideline1";
    case Rule::Guideline2: return "Guideline2";
    case Rule::MultipleDropout: return "MultipleDropout";
    case Rule::UnknownPosition: return "UnknownPosition";
  }
  return "?";
}

std::vector<DropoutPosition> classify_dropout_positions(const ModelGraph& g) {
  std::vector<DropoutPosition> out;
  for (auto& c : classify(g)) out.push_back(std::move(c.position));
  return out;
}

std::vector<Diagnostic> check_guidelines(const ModelGraph& g) {
  std::vector<Diagnostic> out;
  for (const auto& c : classify(g)) out.push_back(judge(c));
  return out;
}

bool has_failure(const std::vector<Diagnostic>& diagnostics) noexcept {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.verdict == Verdict::Fail; });
}

std::string format_text(const Diagnostic& d) {
  return std::string(to_string(d.verdict)) + " " + d.node_id + " " + std::string(to_string(d.label)) +
         " " + std::string(to_string(d.rule)) + ": " + d.message;
}

std::string format_json_line(const Diagnostic& d) {
  nlohmann::ordered_json j;
  j["node"] = d.node_id;
  j["label"] = std::string(to_string(d.label));
  j["verdict"] = std::string(to_string(d.verdict));
  j["rule"] = std::string(to_string(d.rule));
  j["message"] = d.message;
  return j.dump();
}

}  // namespace varshift
