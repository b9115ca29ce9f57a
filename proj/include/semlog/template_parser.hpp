#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "semlog/embedding.hpp"
#include "semlog/errors.hpp"
#include "semlog/io.hpp"
#include "semlog/vector_index.hpp"

namespace semlog {

inline constexpr std::string_view kPlaceholder = "<*>";

struct Demonstration {
  std::string log;
  std::string reasoning;
  std::string log_template;
};

// The editable parts of the prompt, loaded from a JSON data file.
struct PromptBundle {
  std::string system_instructions;
  std::string parameter_examples;
  std::string output_constraints;
  std::vector<Demonstration> demonstrations;

  static PromptBundle from_json(const nlohmann::json& j) {
    PromptBundle b;
    try {
      b.system_instructions = j.at("system_instructions").get<std::string>();
      b.parameter_examples = j.at("parameter_examples").get<std::string>();
      b.output_constraints = j.at("output_constraints").get<std::string>();
      for (const auto& d : j.at("demonstrations")) {
        b.demonstrations.push_back({d.at("log").get<std::string>(),
                                    d.at("reasoning").get<std::string>(),
                                    d.at("template").get<std::string>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("prompt bundle: ") + e.what());
    }
    if (b.demonstrations.empty()) throw ConfigError("prompt bundle has no demonstrations");
    return b;
  }

  static PromptBundle load(const std::filesystem::path& path) {
    const auto text = io::read_file(path);
    try {
      return from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("prompt bundle " + path.string() + ": " + e.what());
    }
  }
};

struct Prompt {
  std::string system_instructions;
  std::string parameter_examples;
  std::string output_constraints;
  std::vector<Demonstration> demonstrations;
  std::string queried_log;
  std::size_t index = 1;

  std::string system_message() const { return system_instructions; }

  // Parameter examples, output constraints, demonstrations, then the
  // queried log, in that order.
  std::string user_message() const {
    std::string out;
    out += parameter_examples;
    out += "\n\n";
    out += output_constraints;
    out += "\n\n";
    for (std::size_t i = 0; i < demonstrations.size(); ++i) {
      const auto& d = demonstrations[i];
      const auto k = std::to_string(i + 1);
      out += "Example " + k + "\n";
      out += "Input: `" + d.log + "`\n";
      out += "<Inner Monologue>\n" + d.reasoning + "\n</Inner Monologue>\n";
      out += "LogTemplate[" + k + "]: `" + d.log_template + "`\n\n";
    }
    out += "Log[" + std::to_string(index) + "]: `" + queried_log + "`\n";
    return out;
  }
};

inline Prompt build_prompt(const LogRecord& log, const PromptBundle& bundle,
                           std::size_t index = 1) {
  if (bundle.demonstrations.empty()) throw ConfigError("prompt needs at least one demonstration");
  return Prompt{bundle.system_instructions, bundle.parameter_examples, bundle.output_constraints,
                bundle.demonstrations, log.content(), index};
}

class Template {
 public:
  explicit Template(std::string text) : text_(std::move(text)) {}
  const std::string& text() const { return text_; }
  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    for (auto t : split_ws(text_)) out.emplace_back(t);
    return out;
  }
  friend bool operator==(const Template&, const Template&) = default;

 private:
  std::string text_;
};

// Brace spans become "<*>" (innermost first), stray braces are dropped,
// and runs of adjacent placeholders collapse to one.
inline std::string normalize_placeholders(std::string_view raw) {
  static const std::regex brace_span(R"(\{[^{}]*\})");
  std::string s(raw);
  for (;;) {
    std::string next = std::regex_replace(s, brace_span, std::string(kPlaceholder));
    if (next == s) break;
    s = std::move(next);
  }
  std::erase_if(s, [](char c) { return c == '{' || c == '}'; });
  const std::string twice = std::string(kPlaceholder) + std::string(kPlaceholder);
  for (auto pos = s.find(twice); pos != std::string::npos; pos = s.find(twice, pos)) {
    s.erase(pos, kPlaceholder.size());
  }
  return std::string(trim(s));
}

// Takes the backticked segment after "LogTemplate[k]". When several are
// present, the one whose k equals `expected_index` wins, else the first.
inline Template extract_template(std::string_view response,
                                 std::optional<std::size_t> expected_index = std::nullopt) {
  static const std::regex segment(R"(LogTemplate\[(\d+)\]\s*:?\s*`([^`]*)`)");
  std::optional<std::string> first;
  std::optional<std::string> matched;
  const std::string text(response);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), segment);
       it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (trim(m[2].str()).empty()) continue;
    if (!first) first = m[2].str();
    if (expected_index && !matched && m[1].str() == std::to_string(*expected_index)) {
      matched = m[2].str();
    }
  }
  const auto& chosen = matched ? matched : first;
  if (!chosen) throw MalformedResponse("no backticked LogTemplate segment in response");
  auto normalized = normalize_placeholders(*chosen);
  if (normalized.empty()) throw MalformedResponse("LogTemplate segment is empty");
  return Template(std::move(normalized));
}

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const Prompt& prompt, double temperature) = 0;
};

// Offline stand-in for a completion model: replaces every token that holds a
// digit with a brace parameter and answers in the expected format.
class MockCompletionClient final : public CompletionClient {
 public:
  std::string complete(const Prompt& prompt, double /*temperature*/) override {
    ++queries_;
    std::string tpl;
    for (auto tok : split_ws(prompt.queried_log)) {
      const bool dynamic = std::any_of(tok.begin(), tok.end(), [](char c) {
        return std::isdigit(static_cast<unsigned char>(c)) != 0;
      });
      if (!tpl.empty()) tpl += ' ';
      tpl += dynamic ? std::string("{param}") : std::string(tok);
    }
    return "<Inner Monologue>\nDigits mark dynamic values.\n</Inner Monologue>\nLogTemplate[" +
           std::to_string(prompt.index) + "]: `" + tpl + "`";
  }

  std::size_t queries() const { return queries_.load(); }

 private:
  std::atomic<std::size_t> queries_{0};
};

// Interns template text so identical templates share one id.
class TemplateStore {
 public:
  TemplateId intern(const std::string& text) {
    std::lock_guard lk(mu_);
    auto [it, inserted] = ids_.emplace(text, texts_.size());
    if (inserted) texts_.push_back(text);
    return it->second;
  }

  std::string text(TemplateId id) const {
    std::lock_guard lk(mu_);
    if (id >= texts_.size()) throw NotFound("no template with id " + std::to_string(id));
    return texts_[id];
  }

  std::vector<std::string> all() const {
    std::lock_guard lk(mu_);
    return texts_;
  }

  std::size_t size() const {
    std::lock_guard lk(mu_);
    return texts_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, TemplateId> ids_;
  std::vector<std::string> texts_;
};

// Drives one completion per cluster and records the outcome on the index.
class TemplateParser {
 public:
  TemplateParser(std::shared_ptr<CompletionClient> client, PromptBundle bundle)
      : client_(std::move(client)), bundle_(std::move(bundle)) {
    if (!client_) throw ConfigError("template parser needs a completion client");
  }

  // Malformed answers are retried once; after that the raw log becomes the
  // template and the cluster is marked Failed. Transport errors propagate
  // and leave the cluster untouched.
  Template parse_cluster(VectorIndex& index, ClusterId id, const LogRecord& representative,
                         TemplateStore& store) {
    const auto state = index.get(id).parse_state;
    if (state == ParseState::kParsed) {
      throw ContractViolation("cluster " + std::to_string(id) + " is already parsed");
    }
    const auto prompt = build_prompt(representative, bundle_);
    for (int attempt = 0; attempt < 2; ++attempt) {
      ++queries_;
      const auto response = client_->complete(prompt, 0.0);
      try {
        auto tpl = extract_template(response, prompt.index);
        index.set_template(id, store.intern(tpl.text()), ParseState::kParsed);
        return tpl;
      } catch (const MalformedResponse&) {
      }
    }
    ++failures_;
    Template fallback(representative.content());
    index.set_template(id, store.intern(fallback.text()), ParseState::kFailed);
    return fallback;
  }

  std::size_t queries() const { return queries_.load(); }
  std::size_t failures() const { return failures_.load(); }
  const PromptBundle& bundle() const { return bundle_; }

 private:
  std::shared_ptr<CompletionClient> client_;
  PromptBundle bundle_;
  std::atomic<std::size_t> queries_{0};
  std::atomic<std::size_t> failures_{0};
};

}  // namespace semlog
