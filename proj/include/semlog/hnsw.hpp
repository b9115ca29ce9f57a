#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "semlog/vec.hpp"

namespace semlog::detail {

// Hierarchical navigable small-world graph over inner-product similarity of
// unit vectors. Removal leaves a tombstone that is still traversed but never
// returned or linked to; the owner rebuilds once tombstones dominate.
class HnswGraph {
 public:
  using NodeId = std::uint32_t;

  struct Scored {
    double sim;
    NodeId node;
  };

  HnswGraph(std::size_t max_degree, std::size_t construction_breadth, std::uint64_t seed)
      : max_degree_(std::max<std::size_t>(max_degree, 2)),
        construction_breadth_(std::max<std::size_t>(construction_breadth, 1)),
        level_mult_(1.0 / std::log(static_cast<double>(std::max<std::size_t>(max_degree, 2)))),
        rng_(seed) {}

  NodeId add(std::uint64_t payload, std::span<const double> vec) {
    const auto id = static_cast<NodeId>(nodes_.size());
    const int level = random_level();
    nodes_.push_back(Node{payload, std::vector<double>(vec.begin(), vec.end()), level,
                          std::vector<std::vector<NodeId>>(static_cast<std::size_t>(level) + 1),
                          false});
    if (!entry_) {
      entry_ = id;
      top_level_ = level;
      return id;
    }
    NodeId ep = *entry_;
    for (int l = top_level_; l > level; --l) ep = greedy(vec, ep, l);
    std::vector<NodeId> eps{ep};
    for (int l = std::min(level, top_level_); l >= 0; --l) {
      auto found = search_layer(vec, eps, construction_breadth_, l);
      auto selected = select_neighbors(vec, live_first(found), degree_at(l));
      nodes_[id].links[static_cast<std::size_t>(l)] = selected;
      for (NodeId n : selected) connect(n, id, l);
      eps.clear();
      for (const auto& s : found) eps.push_back(s.node);
    }
    if (level > top_level_) {
      top_level_ = level;
      entry_ = id;
    }
    return id;
  }

  void mark_deleted(NodeId n) {
    if (!nodes_[n].deleted) {
      nodes_[n].deleted = true;
      ++deleted_;
    }
  }

  std::size_t deleted_count() const { return deleted_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::uint64_t payload(NodeId n) const { return nodes_[n].payload; }
  bool is_deleted(NodeId n) const { return nodes_[n].deleted; }

  // Up to `breadth` closest nodes at layer 0 (tombstones included), best first.
  std::vector<Scored> search(std::span<const double> query, std::size_t breadth) const {
    if (!entry_) return {};
    NodeId ep = *entry_;
    for (int l = top_level_; l > 0; --l) ep = greedy(query, ep, l);
    return search_layer(query, {ep}, std::max<std::size_t>(breadth, 1), 0);
  }

 private:
  struct Node {
    std::uint64_t payload;
    std::vector<double> vec;
    int level;
    std::vector<std::vector<NodeId>> links;
    bool deleted;
  };

  // Orders by similarity, then by node id, so heaps are deterministic.
  struct Better {
    bool operator()(const Scored& a, const Scored& b) const {
      return a.sim != b.sim ? a.sim > b.sim : a.node < b.node;
    }
  };
  struct Worse {
    bool operator()(const Scored& a, const Scored& b) const { return Better{}(b, a); }
  };

  std::size_t degree_at(int level) const { return level == 0 ? 2 * max_degree_ : max_degree_; }

  int random_level() {
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    const double l = -std::log(u(rng_)) * level_mult_;
    return static_cast<int>(std::min(l, 16.0));
  }

  double sim(std::span<const double> q, NodeId n) const { return dot(q, nodes_[n].vec); }

  NodeId greedy(std::span<const double> q, NodeId ep, int level) const {
    double best = sim(q, ep);
    bool moved = true;
    while (moved) {
      moved = false;
      for (NodeId n : nodes_[ep].links[static_cast<std::size_t>(level)]) {
        const double s = sim(q, n);
        if (s > best || (s == best && n < ep)) {
          best = s;
          ep = n;
          moved = true;
        }
      }
    }
    return ep;
  }

  std::vector<Scored> search_layer(std::span<const double> q, const std::vector<NodeId>& eps,
                                   std::size_t ef, int level) const {
    std::vector<bool> visited(nodes_.size(), false);
    // candidates: best on top; results: worst on top.
    std::priority_queue<Scored, std::vector<Scored>, Worse> candidates;
    std::priority_queue<Scored, std::vector<Scored>, Better> results;
    for (NodeId e : eps) {
      if (visited[e]) continue;
      visited[e] = true;
      const Scored s{sim(q, e), e};
      candidates.push(s);
      results.push(s);
      if (results.size() > ef) results.pop();
    }
    while (!candidates.empty()) {
      const Scored c = candidates.top();
      candidates.pop();
      if (results.size() >= ef && Better{}(results.top(), c)) break;
      const auto& links = nodes_[c.node].links;
      if (static_cast<std::size_t>(level) >= links.size()) continue;
      for (NodeId n : links[static_cast<std::size_t>(level)]) {
        if (visited[n]) continue;
        visited[n] = true;
        const Scored s{sim(q, n), n};
        if (results.size() < ef || Better{}(s, results.top())) {
          candidates.push(s);
          results.push(s);
          if (results.size() > ef) results.pop();
        }
      }
    }
    std::vector<Scored> out;
    out.reserve(results.size());
    while (!results.empty()) {
      out.push_back(results.top());
      results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
  }

  // Live nodes only, unless everything found is a tombstone.
  std::vector<Scored> live_first(const std::vector<Scored>& found) const {
    std::vector<Scored> live;
    for (const auto& s : found) {
      if (!nodes_[s.node].deleted) live.push_back(s);
    }
    return live.empty() ? found : live;
  }

  // Neighbor-selection heuristic: keep a candidate only if it is closer to the
  // base than to every neighbor kept so far, then top up with the pruned ones.
  std::vector<NodeId> select_neighbors(std::span<const double> base,
                                       std::vector<Scored> candidates, std::size_t m) const {
    std::sort(candidates.begin(), candidates.end(), Better{});
    std::vector<NodeId> kept;
    std::vector<NodeId> pruned;
    for (const auto& c : candidates) {
      if (kept.size() >= m) break;
      bool diverse = true;
      for (NodeId k : kept) {
        if (dot(nodes_[c.node].vec, nodes_[k].vec) > c.sim) {
          diverse = false;
          break;
        }
      }
      (diverse ? kept : pruned).push_back(c.node);
    }
    for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i) kept.push_back(pruned[i]);
    (void)base;
    return kept;
  }

  void connect(NodeId from, NodeId to, int level) {
    auto& links = nodes_[from].links[static_cast<std::size_t>(level)];
    links.push_back(to);
    const std::size_t cap = degree_at(level);
    if (links.size() <= cap) return;
    std::vector<Scored> scored;
    scored.reserve(links.size());
    for (NodeId n : links) {
      if (nodes_[n].deleted) continue;
      scored.push_back({dot(nodes_[from].vec, nodes_[n].vec), n});
    }
    links = select_neighbors(nodes_[from].vec, std::move(scored), cap);
  }

  std::size_t max_degree_;
  std::size_t construction_breadth_;
  double level_mult_;
  std::mt19937_64 rng_;
  std::vector<Node> nodes_;
  std::optional<NodeId> entry_;
  int top_level_ = 0;
  std::size_t deleted_ = 0;
};

}  // namespace semlog::detail
