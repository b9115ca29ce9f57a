#pragma once

// Synthetic ten-template corpus. Templates use disjoint vocabularies and
// carry at most one parameter per fourteen constant tokens so that, under the
// hashing provider, logs of one template sit well above cosine 0.9 and logs of
// different templates well below it. Parameters always contain a digit.

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace semlog::testing {

struct FixtureLog {
  std::string content;
  std::string log_template;
};

inline const std::vector<std::string>& fixture_templates() {
  static const std::vector<std::string> t = {
      "scheduler worker pool acquired lease on partition <*> after waiting in queue behind earlier "
      "compaction jobs without contention",
      "replication stream caught up with leader replica and resumed applying committed entries from "
      "segment <*> toward durable storage quickly",
      "authentication gateway rejected bearer token because signature verification failed against "
      "rotating keyset for tenant <*> today",
      "garbage collector finished concurrent mark phase reclaiming <*> megabytes while mutator "
      "threads kept running normally here",
      "http frontend closed idle keepalive connection from client <*> once inactivity deadline "
      "expired during shutdown sequence gracefully",
      "metrics exporter flushed buffered histogram samples into remote collector endpoint within <*> "
      "milliseconds successfully again overnight",
      "cache layer evicted least recently used entry holding serialized session object <*> under "
      "memory pressure from bursty traffic spikes",
      "orchestrator restarted unhealthy container <*> belonging to deployment <*> because liveness "
      "probe returned failure status repeatedly across consecutive checks while rollout controller "
      "paused further updates",
      "mailer daemon queued outbound notification message addressed to subscriber <*> pending "
      "template rendering by background render pipeline stage",
      "storage engine rotated write ahead journal file <*> and synced checksum manifest <*> to "
      "secondary volume before acknowledging pending client flush requests from upstream batching "
      "proxy tier nodes",
  };
  return t;
}

inline std::string random_parameter(std::mt19937_64& rng) {
  static const char* hex = "0123456789abcdef";
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<int> byte(0, 255);
  std::uniform_int_distribution<std::uint64_t> big(1, 9999999);
  switch (kind(rng)) {
    case 0: return std::to_string(big(rng));
    case 1: {
      std::string s = "0x";
      for (int i = 0; i < 8; ++i) s += hex[byte(rng) % 16];
      return s;
    }
    case 2:
      return std::to_string(byte(rng)) + "." + std::to_string(byte(rng)) + "." +
             std::to_string(byte(rng)) + "." + std::to_string(byte(rng)) + ":" +
             std::to_string(big(rng) % 65536);
    default: {
      std::string s = "id_";
      for (int i = 0; i < 10; ++i) s += hex[byte(rng) % 16];
      return s + std::to_string(byte(rng) % 10);
    }
  }
}

inline std::string instantiate(const std::string& tpl, std::mt19937_64& rng) {
  std::string out;
  std::size_t pos = 0;
  for (;;) {
    const auto at = tpl.find("<*>", pos);
    if (at == std::string::npos) break;
    out += tpl.substr(pos, at - pos);
    out += random_parameter(rng);
    pos = at + 3;
  }
  out += tpl.substr(pos);
  return out;
}

// `per_template` logs of each template, interleaved in a seeded random order.
inline std::vector<FixtureLog> make_fixture(std::uint64_t seed, std::size_t per_template = 100) {
  std::mt19937_64 rng(seed);
  std::vector<FixtureLog> logs;
  for (const auto& t : fixture_templates()) {
    for (std::size_t i = 0; i < per_template; ++i) logs.push_back({instantiate(t, rng), t});
  }
  std::shuffle(logs.begin(), logs.end(), rng);
  return logs;
}

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string fixture_csv(const std::vector<FixtureLog>& logs) {
  std::string out = "LineId,Content,EventId,EventTemplate\n";
  for (std::size_t i = 0; i < logs.size(); ++i) {
    out += std::to_string(i + 1) + "," + csv_quote(logs[i].content) + ",E" + std::to_string(i) +
           "," + csv_quote(logs[i].log_template) + "\n";
  }
  return out;
}

}  // namespace semlog::testing
