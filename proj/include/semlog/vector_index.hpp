#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "semlog/errors.hpp"
#include "semlog/hnsw.hpp"
#include "semlog/io.hpp"
#include "semlog/vec.hpp"

namespace semlog {

using ClusterId = std::uint64_t;
using TemplateId = std::uint64_t;

enum class ParseState : std::uint8_t { kUnparsed = 0, kParsed = 1, kFailed = 2 };

inline const char* to_string(ParseState s) {
  switch (s) {
    case ParseState::kUnparsed: return "unparsed";
    case ParseState::kParsed: return "parsed";
    case ParseState::kFailed: return "failed";
  }
  return "unknown";
}

struct ClusterCentroid {
  ClusterId id = 0;
  UnitVector vector;
  std::uint64_t weight = 1;
  std::optional<TemplateId> template_id;
  ParseState parse_state = ParseState::kUnparsed;

  friend bool operator==(const ClusterCentroid&, const ClusterCentroid&) = default;
};

struct SearchHit {
  ClusterId cluster_id;
  double similarity;
};

struct IndexParams {
  std::size_t max_degree = 16;
  std::size_t construction_breadth = 200;
  std::size_t search_breadth = 64;
  // Indices with at most this many centroids are searched exhaustively.
  // Unset means "use search_breadth".
  std::optional<std::size_t> exact_scan_limit;
  std::uint64_t seed = 0x5e1f5eedULL;

  static IndexParams for_expected_clusters(std::size_t expected) {
    IndexParams p;
    p.search_breadth = std::max<std::size_t>(64, 2 * expected);
    return p;
  }

  std::size_t exact_limit() const { return exact_scan_limit.value_or(search_breadth); }
};

// One weighted centroid per cluster behind an approximate nearest-neighbor
// graph. Readers (nearest, get) may run concurrently; writers serialize.
class VectorIndex {
 public:
  explicit VectorIndex(std::size_t dim, IndexParams params = {})
      : dim_(dim), params_(params), graph_(make_graph()) {
    if (dim == 0) throw ConfigError("index dimension must be positive");
  }

  VectorIndex(const VectorIndex&) = delete;
  VectorIndex& operator=(const VectorIndex&) = delete;
  VectorIndex(VectorIndex&& o) noexcept { *this = std::move(o); }
  VectorIndex& operator=(VectorIndex&& o) noexcept {
    if (this != &o) {
      std::scoped_lock lk(mu_, o.mu_);
      dim_ = o.dim_;
      params_ = o.params_;
      graph_ = std::move(o.graph_);
      centroids_ = std::move(o.centroids_);
      node_of_ = std::move(o.node_of_);
      next_id_ = o.next_id_;
      rejected_updates_ = o.rejected_updates_;
    }
    return *this;
  }

  std::size_t dim() const { return dim_; }
  const IndexParams& params() const { return params_; }

  std::size_t size() const {
    std::shared_lock lk(mu_);
    return centroids_.size();
  }

  bool contains(ClusterId id) const {
    std::shared_lock lk(mu_);
    return centroids_.count(id) != 0;
  }

  ClusterCentroid get(ClusterId id) const {
    std::shared_lock lk(mu_);
    return find(id);
  }

  // All centroids, ascending by id.
  std::vector<ClusterCentroid> centroids() const {
    std::shared_lock lk(mu_);
    std::vector<ClusterCentroid> out;
    out.reserve(centroids_.size());
    for (const auto& [id, c] : centroids_) out.push_back(c);
    return out;
  }

  std::vector<ClusterId> ids() const {
    std::shared_lock lk(mu_);
    std::vector<ClusterId> out;
    out.reserve(centroids_.size());
    for (const auto& [id, c] : centroids_) out.push_back(id);
    return out;
  }

  std::uint64_t total_weight() const {
    std::shared_lock lk(mu_);
    std::uint64_t s = 0;
    for (const auto& [id, c] : centroids_) s += c.weight;
    return s;
  }

  ClusterId next_id() const {
    std::shared_lock lk(mu_);
    return next_id_;
  }

  std::uint64_t rejected_updates() const {
    std::shared_lock lk(mu_);
    return rejected_updates_;
  }

  ClusterId insert(const UnitVector& v) {
    return insert_centroid(v, 1, std::nullopt, ParseState::kUnparsed);
  }

  ClusterId insert_centroid(const UnitVector& v, std::uint64_t weight,
                            std::optional<TemplateId> tpl, ParseState state) {
    check_vector(v);
    if (weight == 0) throw ContractViolation("centroid weight must be positive");
    if (state == ParseState::kParsed && !tpl) {
      throw ContractViolation("parsed centroid requires a template");
    }
    std::unique_lock lk(mu_);
    const ClusterId id = next_id_++;
    centroids_.emplace(id, ClusterCentroid{id, v, weight, tpl, state});
    node_of_[id] = graph_.add(id, v.values());
    return id;
  }

  std::optional<SearchHit> nearest(const UnitVector& query,
                                   std::optional<ClusterId> exclude = std::nullopt) const {
    if (query.dim() != dim_) throw ContractViolation("query dimension mismatch");
    std::shared_lock lk(mu_);
    if (centroids_.size() > params_.exact_limit()) {
      if (auto hit = graph_nearest(query, exclude)) return hit;
    }
    return exhaustive_nearest(query, exclude);
  }

  // v <- normalize(v + (incoming - v) / (w + 1)); w <- w + 1.
  ClusterCentroid update_moving_average(ClusterId id, const UnitVector& incoming) {
    check_vector(incoming);
    std::unique_lock lk(mu_);
    auto& c = find_mut(id);
    const auto old = c.vector.values();
    const double step = 1.0 / (static_cast<double>(c.weight) + 1.0);
    std::vector<double> moved(old.begin(), old.end());
    bool changed = false;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      const double d = incoming[i] - old[i];
      if (d != 0.0) changed = true;
      moved[i] += d * step;
    }
    c.weight += 1;
    if (!changed) return c;
    auto unit = normalized_or_empty(moved);
    if (unit.empty()) {
      ++rejected_updates_;
      return c;
    }
    c.vector = UnitVector::from_unit(std::move(unit));
    relink(id, c.vector);
    return c;
  }

  void set_template(ClusterId id, std::optional<TemplateId> tpl, ParseState state) {
    if (state == ParseState::kParsed && !tpl) {
      throw ContractViolation("parsed centroid requires a template");
    }
    std::unique_lock lk(mu_);
    auto& c = find_mut(id);
    c.template_id = tpl;
    c.parse_state = state;
  }

  void remove(ClusterId id) {
    std::unique_lock lk(mu_);
    find_mut(id);
    centroids_.erase(id);
    graph_.mark_deleted(node_of_.at(id));
    node_of_.erase(id);
    maybe_rebuild();
  }

  // Snapshot: "SLINDX01" framing; payload is dim, next id, count, then per
  // centroid id, weight, parse state, template flag + id, and the vector.
  std::string serialize() const {
    std::shared_lock lk(mu_);
    io::ByteWriter w;
    w.put<std::uint64_t>(dim_);
    w.put<std::uint64_t>(next_id_);
    w.put<std::uint64_t>(centroids_.size());
    for (const auto& [id, c] : centroids_) {
      w.put<std::uint64_t>(id);
      w.put<std::uint64_t>(c.weight);
      w.put<std::uint8_t>(static_cast<std::uint8_t>(c.parse_state));
      w.put<std::uint8_t>(c.template_id ? 1 : 0);
      w.put<std::uint64_t>(c.template_id.value_or(0));
      w.put_doubles(c.vector.values());
    }
    return io::seal(kSnapshotMagic, kSnapshotVersion, w.bytes());
  }

  static VectorIndex deserialize(std::string_view file, IndexParams params = {}) {
    io::ByteReader r(io::unseal(file, kSnapshotMagic, kSnapshotVersion));
    const auto dim = r.get<std::uint64_t>();
    const auto next = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();
    if (dim == 0 || dim > (1u << 20)) throw DataError("implausible snapshot dimension");
    if (count > r.remaining()) throw DataError("snapshot centroid count exceeds payload");
    std::vector<ClusterCentroid> loaded;
    loaded.reserve(count);
    std::vector<double> buf(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
      ClusterCentroid c;
      c.id = r.get<std::uint64_t>();
      c.weight = r.get<std::uint64_t>();
      const auto state = r.get<std::uint8_t>();
      const auto has_tpl = r.get<std::uint8_t>();
      const auto tpl = r.get<std::uint64_t>();
      r.get_doubles(buf);
      if (state > 2 || has_tpl > 1) throw DataError("invalid centroid flags in snapshot");
      c.parse_state = static_cast<ParseState>(state);
      if (has_tpl) c.template_id = tpl;
      if (c.weight == 0) throw DataError("zero-weight centroid in snapshot");
      if (c.parse_state == ParseState::kParsed && !c.template_id) {
        throw DataError("parsed centroid without template in snapshot");
      }
      if (c.id >= next) throw DataError("centroid id beyond next-id counter");
      if (!loaded.empty() && c.id <= loaded.back().id) throw DataError("unordered centroid ids");
      try {
        c.vector = UnitVector::from_unit(buf);
      } catch (const ContractViolation& e) {
        throw DataError(std::string("snapshot vector: ") + e.what());
      }
      loaded.push_back(std::move(c));
    }
    if (r.remaining() != 0) throw DataError("trailing bytes in snapshot payload");
    VectorIndex idx(dim, params);
    for (auto& c : loaded) {
      idx.node_of_[c.id] = idx.graph_.add(c.id, c.vector.values());
      idx.centroids_.emplace(c.id, std::move(c));
    }
    idx.next_id_ = next;
    return idx;
  }

  void snapshot(const std::filesystem::path& path) const {
    io::write_file_atomic(path, serialize());
  }

  static VectorIndex load(const std::filesystem::path& path, IndexParams params = {}) {
    return deserialize(io::read_file(path), params);
  }

 private:
  static constexpr std::string_view kSnapshotMagic = "SLINDX01";
  static constexpr std::uint32_t kSnapshotVersion = 1;

  detail::HnswGraph make_graph() const {
    return detail::HnswGraph(params_.max_degree, params_.construction_breadth, params_.seed);
  }

  void check_vector(const UnitVector& v) const {
    if (v.dim() != dim_) {
      throw ContractViolation("vector dimension " + std::to_string(v.dim()) + " != index " +
                              std::to_string(dim_));
    }
    if (std::abs(l2_norm(v.values()) - 1.0) > kUnitTolerance) {
      throw ContractViolation("vector is not unit-norm");
    }
  }

  const ClusterCentroid& find(ClusterId id) const {
    auto it = centroids_.find(id);
    if (it == centroids_.end()) throw NotFound("no cluster with id " + std::to_string(id));
    return it->second;
  }

  ClusterCentroid& find_mut(ClusterId id) {
    auto it = centroids_.find(id);
    if (it == centroids_.end()) throw NotFound("no cluster with id " + std::to_string(id));
    return it->second;
  }

  static bool better(double sim, ClusterId id, const std::optional<SearchHit>& best) {
    return !best || sim > best->similarity || (sim == best->similarity && id < best->cluster_id);
  }

  std::optional<SearchHit> exhaustive_nearest(const UnitVector& q,
                                              std::optional<ClusterId> exclude) const {
    std::optional<SearchHit> best;
    for (const auto& [id, c] : centroids_) {
      if (exclude && id == *exclude) continue;
      const double s = q.dot(c.vector);
      if (better(s, id, best)) best = SearchHit{id, s};
    }
    return best;
  }

  std::optional<SearchHit> graph_nearest(const UnitVector& q,
                                         std::optional<ClusterId> exclude) const {
    std::optional<SearchHit> best;
    for (const auto& s : graph_.search(q.values(), params_.search_breadth)) {
      if (graph_.is_deleted(s.node)) continue;
      const ClusterId id = graph_.payload(s.node);
      if (exclude && id == *exclude) continue;
      if (better(s.sim, id, best)) best = SearchHit{id, s.sim};
    }
    return best;
  }

  void relink(ClusterId id, const UnitVector& v) {
    graph_.mark_deleted(node_of_.at(id));
    node_of_[id] = graph_.add(id, v.values());
    maybe_rebuild();
  }

  void maybe_rebuild() {
    if (graph_.deleted_count() < 64 || graph_.deleted_count() <= centroids_.size()) return;
    graph_ = make_graph();
    for (const auto& [id, c] : centroids_) node_of_[id] = graph_.add(id, c.vector.values());
  }

  mutable std::shared_mutex mu_;
  std::size_t dim_ = 0;
  IndexParams params_;
  detail::HnswGraph graph_{16, 200, 0};
  std::map<ClusterId, ClusterCentroid> centroids_;
  std::unordered_map<ClusterId, detail::HnswGraph::NodeId> node_of_;
  ClusterId next_id_ = 0;
  std::uint64_t rejected_updates_ = 0;
};

}  // namespace semlog
