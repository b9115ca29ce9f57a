#pragma once

#include <json.hpp>

#include <chrono>
#include <cstddef>
#include <ctime>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "semlog/errors.hpp"
#include "semlog/vec.hpp"
#include "semlog/vector_index.hpp"

namespace semlog {

struct MergeRecord {
  ClusterId first = 0;   // the cluster being processed
  ClusterId second = 0;  // its nearest neighbor
  ClusterId survivor = 0;
  // Constituent whose template and representative log the survivor keeps.
  ClusterId inherited_from = 0;
  double similarity = 0.0;
};

struct MergeReport {
  std::vector<MergeRecord> merges;
  std::size_t passes = 0;
  std::size_t clusters_before = 0;
  std::size_t clusters_after = 0;
};

inline nlohmann::json to_json(const MergeReport& r) {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& m : r.merges) {
    merges.push_back({{"absorbed", {m.first, m.second}},
                      {"survivor", m.survivor},
                      {"inherited_from", m.inherited_from},
                      {"similarity", m.similarity}});
  }
  return {{"merges", merges},
          {"passes", r.passes},
          {"clusters_before", r.clusters_before},
          {"clusters_after", r.clusters_after}};
}

// Thrown when a pass fails midway; carries the merges completed so far.
class RebalanceError : public Error {
 public:
  RebalanceError(const Error& cause, MergeReport partial)
      : Error(cause.kind(), cause.what()), partial_(std::move(partial)) {}
  const MergeReport& partial() const { return partial_; }

 private:
  MergeReport partial_;
};

// normalize((w_a * a + w_b * b) / (w_a + w_b)); identical inputs pass through.
inline UnitVector weighted_merge(const UnitVector& a, std::uint64_t wa, const UnitVector& b,
                                 std::uint64_t wb) {
  if (a == b) return a;
  const double total = static_cast<double>(wa) + static_cast<double>(wb);
  std::vector<double> v(a.dim());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (static_cast<double>(wa) * a[i] + static_cast<double>(wb) * b[i]) / total;
  }
  return UnitVector::normalize(v);
}

namespace detail {

inline ClusterId merge_into_index(VectorIndex& index, const ClusterCentroid& a,
                                  const ClusterCentroid& b, ClusterId& inherited) {
  const UnitVector merged = weighted_merge(a.vector, a.weight, b.vector, b.weight);
  const ClusterCentroid& primary =
      (a.weight > b.weight || (a.weight == b.weight && a.id < b.id)) ? a : b;
  inherited = primary.id;
  std::optional<TemplateId> tpl;
  ParseState state = ParseState::kUnparsed;
  if (a.parse_state != ParseState::kUnparsed && b.parse_state != ParseState::kUnparsed) {
    tpl = primary.template_id;
    state = primary.parse_state;
  }
  index.remove(a.id);
  index.remove(b.id);
  return index.insert_centroid(merged, a.weight + b.weight, tpl, state);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline MergeRecord merge_pair_record(VectorIndex& index, ClusterId id_a, ClusterId id_b,
                                     double similarity) {
  if (id_a == id_b) throw ContractViolation("cannot merge a cluster with itself");
  const auto a = index.get(id_a);
  const auto b = index.get(id_b);
  MergeRecord rec{id_a, id_b, 0, 0, similarity};
  rec.survivor = detail::merge_into_index(index, a, b, rec.inherited_from);
  return rec;
}

// Merges two clusters into a fresh one; returns the surviving id.
inline ClusterId merge_pair(VectorIndex& index, ClusterId id_a, ClusterId id_b) {
  if (id_a == id_b) throw ContractViolation("cannot merge a cluster with itself");
  const double sim = index.get(id_a).vector.dot(index.get(id_b).vector);
  return merge_pair_record(index, id_a, id_b, sim).survivor;
}

// One sequential pass over the clusters in ascending-id order. A cluster that
// merges is replaced in place by the merged cluster, which is re-examined
// before the scan advances. `audit`, when given, receives one JSON line per
// merge.
inline MergeReport rebalance(VectorIndex& index, double threshold,
                             std::ostream* audit = nullptr) {
  MergeReport report;
  report.passes = 1;
  report.clusters_before = index.size();
  std::vector<ClusterId> work = index.ids();
  try {
    std::size_t i = 0;
    while (i < work.size()) {
      if (!index.contains(work[i])) {
        ++i;
        continue;
      }
      const auto current = index.get(work[i]);
      const auto hit = index.nearest(current.vector, current.id);
      if (!hit || hit->similarity < threshold) {
        ++i;
        continue;
      }
      const auto rec = merge_pair_record(index, current.id, hit->cluster_id, hit->similarity);
      report.merges.push_back(rec);
      if (audit) {
        *audit << nlohmann::json{{"ts", detail::utc_timestamp()},
                                 {"absorbed", {rec.first, rec.second}},
                                 {"survivor", rec.survivor},
                                 {"similarity", rec.similarity}}
                      .dump()
               << '\n';
      }
      work[i] = rec.survivor;
    }
  } catch (const Error& e) {
    report.clusters_after = index.size();
    throw RebalanceError(e, std::move(report));
  }
  report.clusters_after = index.size();
  return report;
}

}  // namespace semlog
