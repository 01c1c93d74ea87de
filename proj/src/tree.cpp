#include "step/tree.hpp"

#include <algorithm>

namespace step {

const char* to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Open: return "Open";
    case NodeStatus::Expanding: return "Expanding";
    case NodeStatus::Leaf: return "Leaf";
    case NodeStatus::Done: return "Done";
    case NodeStatus::Failed: return "Failed";
  }
  return "?";
}

namespace {
bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}
}  // namespace

SubgoalTree SubgoalTree::init(const std::string& goal_text) {
  if (goal_text.empty() || blank(goal_text))
    throw TreeError(TreeError::Kind::EmptyGoal, "goal text is empty");
  SubgoalTree t;
  SubgoalNode root;
  root.id = t.next_id_++;
  root.text = goal_text;
  t.nodes_.emplace(root.id, root);
  t.root_ = root.id;
  t.cursor_ = root.id;
  return t;
}

const SubgoalNode& SubgoalTree::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw TreeError(TreeError::Kind::UnknownNode, "unknown node " + std::to_string(id));
  return it->second;
}

SubgoalNode& SubgoalTree::mut(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end())
    throw TreeError(TreeError::Kind::UnknownNode, "unknown node " + std::to_string(id));
  return it->second;
}

void SubgoalTree::set_cursor(NodeId id) {
  (void)node(id);
  cursor_ = id;
}

NodeId SubgoalTree::add_child(NodeId parent, const std::string& text) {
  auto it = nodes_.find(parent);
  if (it == nodes_.end())
    throw TreeError(TreeError::Kind::UnknownParent, "unknown parent " + std::to_string(parent));
  SubgoalNode& p = it->second;
  if (p.status == NodeStatus::Leaf || p.action)
    throw TreeError(TreeError::Kind::ParentIsLeaf,
                    "node " + std::to_string(parent) + " is a leaf");
  SubgoalNode c;
  c.id = next_id_++;
  c.text = text;
  c.parent = parent;
  c.depth = p.depth + 1;
  c.sibling_index = static_cast<int>(p.children.size());
  p.children.push_back(c.id);
  if (p.status == NodeStatus::Open) p.status = NodeStatus::Expanding;
  NodeId id = c.id;
  nodes_.emplace(id, std::move(c));
  return id;
}

std::optional<NodeId> SubgoalTree::left_sibling(NodeId id) const {
  const SubgoalNode& n = node(id);
  if (!n.parent) return std::nullopt;
  const SubgoalNode& p = node(*n.parent);
  auto it = std::find(p.children.begin(), p.children.end(), id);
  if (it == p.children.end() || it == p.children.begin()) return std::nullopt;
  return *(it - 1);
}

void SubgoalTree::set_leaf_action(NodeId id, const PrimitiveAction& a) {
  SubgoalNode& n = mut(id);
  n.status = NodeStatus::Leaf;
  n.action = a;
}

void SubgoalTree::mark_done(NodeId id) {
  SubgoalNode& n = mut(id);
  for (NodeId c : n.children)
    if (node(c).status != NodeStatus::Done)
      throw TreeError(TreeError::Kind::CursorNotTerminal,
                      "node " + std::to_string(id) + " has unfinished children");
  n.status = NodeStatus::Done;
}

void SubgoalTree::mark_exhausted(NodeId id) { mut(id).siblings_exhausted = true; }

CursorMove SubgoalTree::advance_cursor() {
  NodeId x = cursor_;
  if (node(x).status != NodeStatus::Done)
    throw TreeError(TreeError::Kind::CursorNotTerminal,
                    "cursor node " + std::to_string(x) + " is not finished");
  bool moved_up = false;
  while (true) {
    const SubgoalNode& n = node(x);
    if (!n.parent) {
      cursor_ = x;
      return {CursorMove::Kind::RootComplete, x};
    }
    NodeId p = *n.parent;
    if (!node(p).siblings_exhausted) {
      cursor_ = p;
      return {moved_up ? CursorMove::Kind::ReturnToParentNext : CursorMove::Kind::NextSibling, p};
    }
    mark_done(p);  // all siblings complete: the parent is finished too
    x = p;
    moved_up = true;
  }
}

NodeId SubgoalTree::replan_reset(NodeId failed) {
  SubgoalNode& n = mut(failed);
  if (!n.parent)
    throw TreeError(TreeError::Kind::ReplanAtRoot, "cannot replan the root goal");
  NodeId parent = *n.parent;

  // mark the whole subtree Failed; only the top node is detached
  std::vector<NodeId> stack{failed};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    SubgoalNode& m = mut(id);
    m.status = NodeStatus::Failed;
    for (NodeId c : m.children) stack.push_back(c);
  }

  SubgoalNode& p = mut(parent);
  p.children.erase(std::remove(p.children.begin(), p.children.end(), failed), p.children.end());
  p.siblings_exhausted = false;
  p.replan_count += 1;
  total_replans_ += 1;
  cursor_ = parent;
  return parent;
}

std::vector<PrimitiveAction> SubgoalTree::leaf_sequence() const {
  std::vector<PrimitiveAction> out;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    const SubgoalNode& n = node(id);
    if (n.action && n.status == NodeStatus::Done) out.push_back(*n.action);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<std::string> SubgoalTree::executed_leaf_texts() const {
  std::vector<std::string> out;
  std::vector<NodeId> stack{root_};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    const SubgoalNode& n = node(id);
    if (n.action && n.status == NodeStatus::Done) out.push_back(n.text);
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

nlohmann::json SubgoalTree::snapshot() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [id, n] : nodes_) {
    nlohmann::json jn;
    jn["id"] = n.id;
    jn["text"] = n.text;
    if (n.parent) jn["parent"] = *n.parent;
    jn["status"] = to_string(n.status);
    jn["sibling_index"] = n.sibling_index;
    if (n.action) jn["action"] = render_action(*n.action);
    nodes.push_back(jn);
  }
  return nlohmann::json{{"root", root_}, {"cursor", cursor_}, {"nodes", nodes}};
}

std::optional<std::string> SubgoalTree::validate() const {
  if (!contains(root_)) return "root missing";
  if (!contains(cursor_)) return "cursor missing";
  if (node(root_).parent) return "root has a parent";
  for (const auto& [id, n] : nodes_) {
    if (n.id != id) return "node id mismatch";
    int idx = 0;
    for (NodeId c : n.children) {
      if (!contains(c)) return "child missing: " + std::to_string(c);
      const SubgoalNode& cn = node(c);
      if (!cn.parent || *cn.parent != id) return "child parent link broken at " + std::to_string(c);
      if (cn.depth != n.depth + 1) return "depth wrong at " + std::to_string(c);
      (void)idx;
      ++idx;
    }
    if (n.action && !n.children.empty()) return "leaf with children at " + std::to_string(id);
    if (n.status == NodeStatus::Done && !n.action)
      for (NodeId c : n.children)
        if (node(c).status != NodeStatus::Done) return "done node with open child";
  }
  // active tree must be acyclic and reach the root through parent links
  for (const auto& [id, n] : nodes_) {
    if (n.status == NodeStatus::Failed) continue;
    NodeId cur = id;
    std::size_t hops = 0;
    while (node(cur).parent) {
      cur = *node(cur).parent;
      if (++hops > nodes_.size()) return "parent cycle at " + std::to_string(id);
    }
    if (cur != root_) return "node detached from root: " + std::to_string(id);
  }
  return std::nullopt;
}

}  // namespace step
