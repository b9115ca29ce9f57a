#pragma once

#include <json.hpp>

#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semlog/embedding.hpp"
#include "semlog/errors.hpp"
#include "semlog/io.hpp"

namespace semlog {

// RFC 4180 style: quoted fields may hold delimiters, doubled quotes and
// newlines. Blank lines are skipped.
inline std::vector<std::vector<std::string>> parse_delimited(std::string_view text,
                                                             char delim = ',') {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool after_quote = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    after_quote = false;
    field_started = false;
  };
  auto end_row = [&] {
    if (!(row.empty() && !field_started && field.empty())) {
      end_field();
      rows.push_back(std::move(row));
    }
    row.clear();
    ++line;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == delim) {
      end_field();
      field_started = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else if (after_quote) {
      throw DataError("line " + std::to_string(line) + ": text after closing quote");
    } else if (c == '"') {
      if (!field.empty()) {
        throw DataError("line " + std::to_string(line) + ": quote inside unquoted field");
      }
      quoted = true;
      field_started = true;
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError("unterminated quoted field at end of input");
  end_row();
  return rows;
}

struct LabeledRow {
  std::string content;
  std::string ground_truth_template;
};

struct LabeledDataset {
  std::vector<LabeledRow> rows;

  std::vector<std::string> contents() const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.content);
    return out;
  }
  std::vector<std::string> templates() const {
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.ground_truth_template);
    return out;
  }
};

inline LabeledDataset parse_dataset(std::string_view text) {
  const auto table = parse_delimited(text);
  if (table.empty()) throw DataError("dataset has no header row");
  const auto& header = table.front();
  auto column = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (trim(header[i]) == name) return i;
    }
    throw DataError("dataset header lacks a " + std::string(name) + " column");
  };
  const auto content_col = column("Content");
  const auto template_col = column("EventTemplate");
  LabeledDataset ds;
  ds.rows.reserve(table.size() - 1);
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& row = table[r];
    if (row.size() != header.size()) {
      throw DataError("row " + std::to_string(r) + " has " + std::to_string(row.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    if (trim(row[template_col]).empty()) {
      throw DataError("row " + std::to_string(r) + " has an empty EventTemplate");
    }
    ds.rows.push_back({row[content_col], row[template_col]});
  }
  return ds;
}

inline LabeledDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path));
}

struct MetricsReport {
  std::size_t n_logs = 0;
  std::size_t ga_correct = 0;  // logs whose group matches exactly
  std::size_t n_g = 0;         // ground-truth groups
  std::size_t n_p = 0;         // predicted groups
  std::size_t n_c = 0;         // predicted groups matching a ground-truth group
  std::size_t pa_correct = 0;  // logs whose template tokens match
  std::size_t ta_correct = 0;  // groups matching in members and tokens
  double ga = 0, pga = 0, rga = 0, fga = 0, pa = 0, pta = 0, rta = 0, fta = 0;
};

inline double harmonic_mean(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline bool same_tokens(std::string_view a, std::string_view b) { return split_ws(a) == split_ws(b); }

// Grouping and template metrics. Ground-truth groups are logs sharing an
// identical template string; predicted groups are logs sharing a label.
// A predicted group counts for template accuracy when its member set equals a
// ground-truth group and every member's predicted template token-matches the
// ground-truth template.
template <typename Label>
MetricsReport evaluate(std::span<const Label> predicted_groups,
                       std::span<const std::string> predicted_templates,
                       std::span<const std::string> truth_templates) {
  const std::size_t n = truth_templates.size();
  if (predicted_groups.size() != n) {
    throw DataError("predicted grouping has " + std::to_string(predicted_groups.size()) +
                    " logs, ground truth has " + std::to_string(n));
  }
  if (!predicted_templates.empty() && predicted_templates.size() != n) {
    throw DataError("predicted templates have " + std::to_string(predicted_templates.size()) +
                    " logs, ground truth has " + std::to_string(n));
  }
  MetricsReport m;
  m.n_logs = n;
  std::unordered_map<std::string_view, std::size_t> truth_size;
  for (const auto& t : truth_templates) ++truth_size[t];
  std::map<Label, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[predicted_groups[i]].push_back(i);
  m.n_g = truth_size.size();
  m.n_p = groups.size();
  for (const auto& [label, members] : groups) {
    const std::string_view truth = truth_templates[members.front()];
    bool match = truth_size.at(truth) == members.size();
    for (std::size_t i : members) {
      if (!match) break;
      match = truth_templates[i] == truth;
    }
    if (!match) continue;
    ++m.n_c;
    m.ga_correct += members.size();
    if (predicted_templates.empty()) continue;
    bool tokens = true;
    for (std::size_t i : members) {
      if (!same_tokens(predicted_templates[i], truth)) {
        tokens = false;
        break;
      }
    }
    if (tokens) ++m.ta_correct;
  }
  if (!predicted_templates.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (same_tokens(predicted_templates[i], truth_templates[i])) ++m.pa_correct;
    }
  }
  if (n > 0) {
    m.ga = static_cast<double>(m.ga_correct) / static_cast<double>(n);
    m.pa = static_cast<double>(m.pa_correct) / static_cast<double>(n);
  }
  if (m.n_p > 0) {
    m.pga = static_cast<double>(m.n_c) / static_cast<double>(m.n_p);
    m.pta = static_cast<double>(m.ta_correct) / static_cast<double>(m.n_p);
  }
  if (m.n_g > 0) {
    m.rga = static_cast<double>(m.n_c) / static_cast<double>(m.n_g);
    m.rta = static_cast<double>(m.ta_correct) / static_cast<double>(m.n_g);
  }
  m.fga = m.n_c == 0 ? 0.0 : harmonic_mean(m.pga, m.rga);
  m.fta = m.ta_correct == 0 ? 0.0 : harmonic_mean(m.pta, m.rta);
  return m;
}

template <typename Label>
double grouping_accuracy(std::span<const Label> predicted, std::span<const std::string> truth) {
  return evaluate<Label>(predicted, {}, truth).ga;
}

template <typename Label>
MetricsReport fga(std::span<const Label> predicted, std::span<const std::string> truth) {
  return evaluate<Label>(predicted, {}, truth);
}

inline double parsing_accuracy(std::span<const std::string> predicted_templates,
                               std::span<const std::string> truth) {
  if (predicted_templates.size() != truth.size()) {
    throw DataError("predicted template count does not match dataset");
  }
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += same_tokens(predicted_templates[i], truth[i]);
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

// FTA with template-derived grouping: logs are grouped by predicted template.
inline double fta(std::span<const std::string> predicted_templates,
                  std::span<const std::string> truth) {
  return evaluate<std::string>(predicted_templates, predicted_templates, truth).fta;
}

inline nlohmann::json to_json(const MetricsReport& m) {
  return {{"GA", m.ga},   {"FGA", m.fga},  {"PA", m.pa},   {"FTA", m.fta},
          {"PGA", m.pga}, {"RGA", m.rga},  {"PTA", m.pta}, {"RTA", m.rta},
          {"N_g", m.n_g}, {"N_p", m.n_p},  {"N_c", m.n_c}, {"logs", m.n_logs},
          {"GA_correct", m.ga_correct},    {"PA_correct", m.pa_correct},
          {"TA_correct", m.ta_correct}};
}

inline std::string to_table(const MetricsReport& m, std::string_view dataset = "dataset") {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof buf, "%-8s %12.*s\n", "Metric", 12, std::string(dataset).c_str());
  out += buf;
  const std::pair<const char*, double> rows[] = {
      {"GA", m.ga}, {"FGA", m.fga}, {"PA", m.pa}, {"FTA", m.fta}};
  for (const auto& [name, v] : rows) {
    std::snprintf(buf, sizeof buf, "%-8s %12.3f\n", name, v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "N_g=%zu N_p=%zu N_c=%zu logs=%zu\n", m.n_g, m.n_p, m.n_c,
                m.n_logs);
  out += buf;
  return out;
}

}  // namespace semlog
