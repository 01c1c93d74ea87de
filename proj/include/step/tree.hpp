#pragma once

// Subgoal tree: lazily grown, left-to-right, with a cursor marking the node
// whose children are currently being generated. Failed subtrees are detached
// from the active tree but their records stay for snapshots.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "step/world.hpp"

namespace step {

using NodeId = std::uint32_t;

enum class NodeStatus : std::uint8_t { Open, Expanding, Leaf, Done, Failed };

const char* to_string(NodeStatus s);

struct TreeError : std::runtime_error {
  enum class Kind { EmptyGoal, UnknownParent, ParentIsLeaf, CursorNotTerminal, ReplanAtRoot, UnknownNode };
  Kind kind;
  TreeError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

struct SubgoalNode {
  NodeId id = 0;
  std::string text;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;        // active (non-pruned) children, in creation order
  NodeStatus status = NodeStatus::Open;
  std::optional<PrimitiveAction> action;  // set when the node became a leaf
  int depth = 0;
  int sibling_index = 0;
  bool siblings_exhausted = false;     // the decomposer declared this node's child list complete
  int replan_count = 0;                // failed children charged to this node
};

struct CursorMove {
  enum class Kind { NextSibling, ReturnToParentNext, RootComplete } kind;
  NodeId parent = 0;  // the node to expand next (unset for RootComplete)
  bool operator==(const CursorMove&) const = default;
};

class SubgoalTree {
 public:
  // Throws TreeError{EmptyGoal} on an empty or whitespace-only goal.
  static SubgoalTree init(const std::string& goal_text);

  NodeId root() const { return root_; }
  NodeId cursor() const { return cursor_; }
  void set_cursor(NodeId id);

  const SubgoalNode& node(NodeId id) const;
  bool contains(NodeId id) const { return nodes_.count(id) > 0; }
  std::size_t size() const { return nodes_.size(); }
  int total_replans() const { return total_replans_; }

  // Appends a child; the parent moves Open -> Expanding.
  NodeId add_child(NodeId parent, const std::string& text);

  std::optional<NodeId> left_sibling(NodeId id) const;

  void set_leaf_action(NodeId id, const PrimitiveAction& a);
  void mark_done(NodeId id);
  void mark_exhausted(NodeId id);

  // Pre: cursor node is Done. Walks upward completing exhausted ancestors;
  // stops at the first ancestor still accepting siblings (or the root).
  CursorMove advance_cursor();

  // Prunes the failed subtree, clears the parent's exhausted mark, charges the
  // parent's replan counter, moves the cursor to the parent and returns it.
  NodeId replan_reset(NodeId failed);

  // Actions of executed leaves, in left-to-right tree order.
  std::vector<PrimitiveAction> leaf_sequence() const;
  // Texts of executed leaves, same order (chronological under the planner loop).
  std::vector<std::string> executed_leaf_texts() const;

  nlohmann::json snapshot() const;

  // Structural invariants of the active tree; first violation message.
  std::optional<std::string> validate() const;

 private:
  SubgoalNode& mut(NodeId id);

  std::map<NodeId, SubgoalNode> nodes_;
  NodeId root_ = 0;
  NodeId cursor_ = 0;
  NodeId next_id_ = 0;
  int total_replans_ = 0;
};

}  // namespace step
