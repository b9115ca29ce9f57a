// semlog command-line front end.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "semlog/remote.hpp"
#include "semlog/semlog.hpp"

namespace {

using namespace semlog;

struct ProviderOptions {
  std::string kind = "hashing";
  std::size_t dim = 256;
  std::string url = "https://api.openai.com";
  std::string model = "text-embedding-3-small";
  std::string key_env = "SEMLOG_EMBEDDING_KEY";
};

struct ParserOptions {
  std::string kind = "mock";
  std::string url = "https://api.anthropic.com";
  std::string model = "claude-3-5-sonnet-latest";
  std::string key_env = "SEMLOG_COMPLETION_KEY";
  std::string bundle = std::string(SEMLOG_DATA_DIR) + "/prompt_bundle.json";
};

void add_provider_options(CLI::App* cmd, ProviderOptions& o) {
  cmd->add_option("--provider", o.kind, "Embedding provider")
      ->check(CLI::IsMember({"hashing", "remote"}))
      ->capture_default_str();
  cmd->add_option("--provider-dim", o.dim, "Provider embedding dimension")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--embedding-url", o.url, "Remote embedding service base URL")
      ->capture_default_str();
  cmd->add_option("--embedding-model", o.model, "Remote embedding model")->capture_default_str();
  cmd->add_option("--embedding-key-env", o.key_env,
                  "Environment variable holding the embedding API key")
      ->capture_default_str();
}

std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderOptions& o) {
  if (o.kind == "hashing") return std::make_shared<HashingProvider>(o.dim);
  HttpEndpoint ep;
  ep.base_url = o.url;
  ep.api_key = credential_from_env(o.key_env);
  return std::make_shared<RemoteEmbeddingProvider>(ep, o.model, o.dim);
}

std::shared_ptr<TemplateParser> make_parser(const ParserOptions& o) {
  if (o.kind == "none") return nullptr;
  std::shared_ptr<CompletionClient> client;
  if (o.kind == "mock") {
    client = std::make_shared<MockCompletionClient>();
  } else {
    HttpEndpoint ep;
    ep.base_url = o.url;
    ep.api_key = credential_from_env(o.key_env);
    client = std::make_shared<RemoteCompletionClient>(ep, o.model);
  }
  return std::make_shared<TemplateParser>(client, PromptBundle::load(o.bundle));
}

EncoderWeights weights_for(const std::string& path, std::size_t provider_dim) {
  if (path.empty()) return EncoderWeights::for_provider(provider_dim);
  return load_weights(path);
}

std::string read_input(const std::string& path) {
  if (path == "-") {
    return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  return io::read_file(path);
}

bool looks_like_csv(const std::string& path, const std::string& format) {
  if (format != "auto") return format == "csv";
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

// Raw input: one log per non-blank line. CSV input: the Content column.
std::vector<LogRecord> read_records(const std::string& path, const std::string& format) {
  const std::string text = read_input(path);
  const std::string source = path == "-" ? "stdin" : path;
  std::vector<LogRecord> out;
  if (looks_like_csv(path, format)) {
    const auto table = parse_delimited(text);
    if (table.empty()) return out;
    std::optional<std::size_t> col;
    for (std::size_t i = 0; i < table[0].size(); ++i) {
      if (trim(table[0][i]) == "Content") col = i;
    }
    if (!col) throw DataError(source + ": header lacks a Content column");
    for (std::size_t r = 1; r < table.size(); ++r) {
      if (*col >= table[r].size()) throw DataError(source + ": row " + std::to_string(r) + " is short");
      out.push_back(LogRecord::make(source + ":" + std::to_string(r), table[r][*col]));
    }
    return out;
  }
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    out.push_back(LogRecord::make(source + ":" + std::to_string(line_no), line));
  }
  return out;
}

// Writes to `path` atomically, or to stdout when path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
  } else {
    io::write_file_atomic(path, text);
  }
}

// ---------------------------------------------------------------------------

struct IngestOptions {
  std::string input = "-";
  std::string format = "auto";
  std::string weights;
  double threshold = 0.9;
  std::size_t rebalance_every = 1000;
  bool batch_mode = false;
  std::size_t batch_size = 1024;
  std::size_t wave = 0;
  std::size_t max_degree = 16;
  std::size_t construction_breadth = 200;
  std::size_t search_breadth = 64;
  std::string assignments = "-";
  std::string snapshot;
  std::string templates;
  std::string audit;
  std::string dead_letters;
  ProviderOptions provider;
  ParserOptions parser;
};

int run_ingest(const IngestOptions& o) {
  IngestConfig cfg;
  cfg.similarity_threshold = o.threshold;
  cfg.rebalance_every_n = o.rebalance_every;
  cfg.batch_mode = o.batch_mode;
  cfg.batch_wave = o.wave;
  cfg.validate();
  IndexParams params;
  params.max_degree = o.max_degree;
  params.construction_breadth = o.construction_breadth;
  params.search_breadth = o.search_breadth;

  // Everything that can fail on configuration happens before input is read.
  auto provider = make_provider(o.provider);
  auto parser = make_parser(o.parser);
  Pipeline pipeline(provider, weights_for(o.weights, o.provider.dim), cfg, params, parser);

  std::ostringstream audit;
  if (!o.audit.empty()) pipeline.set_audit_stream(&audit);

  const auto records = read_records(o.input, o.format);
  std::string lines;
  auto record = [&](const ClusterAssignment& a) { lines += to_json(a).dump() + "\n"; };

  if (o.batch_mode) {
    const std::span<const LogRecord> all(records);
    for (std::size_t pos = 0; pos < all.size(); pos += o.batch_size) {
      const auto chunk = all.subspan(pos, std::min(o.batch_size, all.size() - pos));
      for (const auto& a : pipeline.ingest_batch(chunk).assignments) record(a);
    }
    pipeline.rebalance_now();
  } else {
    for (const auto& r : records) {
      try {
        record(pipeline.ingest(r));
      } catch (const RecordError&) {
        // kept in the dead-letter list
      }
    }
  }

  emit(o.assignments, lines);
  if (!o.snapshot.empty()) pipeline.index().snapshot(o.snapshot);
  if (!o.templates.empty()) emit(o.templates, pipeline.template_store_json().dump(2) + "\n");
  if (!o.audit.empty()) emit(o.audit, audit.str());
  if (!o.dead_letters.empty()) {
    std::string dl;
    for (const auto& d : pipeline.dead_letters()) {
      dl += nlohmann::json{{"log", d.log_index},
                           {"content", d.content},
                           {"reason", d.reason},
                           {"retryable", d.retryable}}
                .dump() +
            "\n";
    }
    emit(o.dead_letters, dl);
  }
  std::cerr << "ingested " << pipeline.ingested() << " logs into " << pipeline.index().size()
            << " clusters (" << pipeline.clusters_created() << " created, "
            << pipeline.dead_letters().size() << " dead letters, " << pipeline.parser_queries()
            << " parser queries)\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateOptions {
  std::string dataset;
  std::string assignments;
  std::string templates;
  std::string group_by = "cluster";
  std::string json_out;
  std::string name = "dataset";
};

ClusterId follow(const std::map<ClusterId, ClusterId>& aliases, ClusterId id) {
  for (auto it = aliases.find(id); it != aliases.end(); it = aliases.find(id)) id = it->second;
  return id;
}

int run_evaluate(const EvaluateOptions& o) {
  const auto ds = load_dataset(o.dataset);
  const std::size_t n = ds.rows.size();

  std::map<ClusterId, ClusterId> aliases;
  std::map<ClusterId, std::string> cluster_template;
  if (!o.templates.empty()) {
    try {
      const auto store = nlohmann::json::parse(io::read_file(o.templates));
      for (const auto& [from, to] : store.at("aliases").items()) {
        aliases[std::stoull(from)] = to.get<ClusterId>();
      }
      for (const auto& [id, c] : store.at("clusters").items()) {
        if (c.at("template").is_string()) cluster_template[std::stoull(id)] = c.at("template");
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(o.templates + ": " + e.what());
    }
  }

  std::vector<std::optional<ClusterId>> cluster(n);
  std::vector<std::optional<std::string>> inline_template(n);
  std::istringstream in(io::read_file(o.assignments));
  std::size_t seen = 0;
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    ++seen;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto idx = j.at("log").get<std::size_t>();
      if (idx >= n) {
        throw DataError("assignment for log " + std::to_string(idx) + " but dataset has " +
                        std::to_string(n) + " rows");
      }
      cluster[idx] = follow(aliases, j.at("cluster_id").get<ClusterId>());
      if (j.contains("template")) inline_template[idx] = j.at("template").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(o.assignments + ": " + e.what());
    }
  }
  if (seen != n) {
    throw DataError(std::to_string(seen) + " assignments for " + std::to_string(n) +
                    " dataset rows");
  }

  std::vector<std::string> predicted_templates(n);
  std::vector<std::string> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!cluster[i]) throw DataError("no assignment for log " + std::to_string(i));
    const auto it = cluster_template.find(*cluster[i]);
    if (it != cluster_template.end()) {
      predicted_templates[i] = it->second;
    } else if (inline_template[i]) {
      predicted_templates[i] = *inline_template[i];
    }
    if (o.group_by == "cluster" || predicted_templates[i].empty()) {
      labels[i] = "cluster:" + std::to_string(*cluster[i]);
    } else {
      labels[i] = "template:" + predicted_templates[i];
    }
  }
  const auto truth = ds.templates();
  const auto report = evaluate<std::string>(labels, predicted_templates, truth);
  std::cout << to_table(report, o.name);
  if (!o.json_out.empty()) emit(o.json_out, to_json(report).dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainOptions {
  std::vector<std::string> datasets;
  std::string out;
  std::string init;
  std::string trace;
  std::string ratio = "1:5";
  std::string order = "concat";
  TrainConfig cfg;
  ProviderOptions provider;
};

int run_train(TrainOptions o) {
  o.cfg.set_ratio(o.ratio);
  o.cfg.validate();
  auto provider = make_provider(o.provider);
  const auto initial = weights_for(o.init, o.provider.dim);

  std::vector<PairDataset> parts;
  for (std::size_t k = 0; k < o.datasets.size(); ++k) {
    const auto ds = load_dataset(o.datasets[k]);
    std::vector<LogRecord> records;
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
      records.push_back(LogRecord::make(o.datasets[k] + ":" + std::to_string(i), ds.rows[i].content));
    }
    TrainConfig per = o.cfg;
    per.rng_seed = o.cfg.rng_seed + k;
    auto [pairs, stats] = build_pair_dataset(records, ds.templates(), *provider, per);
    std::cerr << o.datasets[k] << ": " << stats.similar << " similar, " << stats.dissimilar
              << " dissimilar pairs\n";
    parts.push_back(std::move(pairs));
  }
  const auto data =
      combine(parts, o.order == "concat" ? PairOrder::kConcatenate : PairOrder::kInterleave);
  const auto result = train(data, o.cfg, initial);
  save_weights(result.weights, o.out);
  const auto trace = to_json(result, o.cfg).dump(2) + "\n";
  if (!o.trace.empty()) {
    emit(o.trace, trace);
  } else {
    std::cout << trace;
  }
  if (!result.epoch_losses.empty()) {
    std::cerr << "loss " << result.epoch_losses.front() << " -> " << result.epoch_losses.back()
              << " over " << result.epoch_losses.size() << " epochs\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct RebalanceOptions {
  std::string snapshot;
  std::string out;
  std::string report;
  std::string audit;
  double threshold = 0.9;
};

int run_rebalance(const RebalanceOptions& o) {
  if (!(o.threshold > 0.0 && o.threshold < 1.0)) {
    throw ConfigError("similarity threshold must lie in (0, 1)");
  }
  auto index = VectorIndex::load(o.snapshot);
  std::ostringstream audit;
  const auto report = rebalance(index, o.threshold, o.audit.empty() ? nullptr : &audit);
  index.snapshot(o.out);
  emit(o.report, to_json(report).dump(2) + "\n");
  if (!o.audit.empty()) emit(o.audit, audit.str());
  return 0;
}

// ---------------------------------------------------------------------------

struct ExportOptions {
  std::string snapshot;
  std::string corpus;
  std::string format = "auto";
  std::string weights;
  std::string out = "-";
  ProviderOptions provider;
};

std::string format_row(std::string prefix, std::span<const double> v) {
  char buf[32];
  for (double x : v) {
    std::snprintf(buf, sizeof buf, ",%.17g", x);
    prefix += buf;
  }
  return prefix + "\n";
}

std::string header(std::string prefix, std::size_t dim) {
  for (std::size_t i = 0; i < dim; ++i) prefix += ",v" + std::to_string(i);
  return prefix + "\n";
}

int run_export(const ExportOptions& o) {
  if (o.snapshot.empty() == o.corpus.empty()) {
    throw ConfigError("export-embeddings needs exactly one of --snapshot or --corpus");
  }
  std::string text;
  if (!o.snapshot.empty()) {
    const auto index = VectorIndex::load(o.snapshot);
    text = header("cluster_id,weight", index.dim());
    for (const auto& c : index.centroids()) {
      text += format_row(std::to_string(c.id) + "," + std::to_string(c.weight), c.vector.values());
    }
  } else {
    auto provider = make_provider(o.provider);
    const auto weights = weights_for(o.weights, o.provider.dim);
    const auto records = read_records(o.corpus, o.format);
    text = header("log", weights.output_dim());
    for (std::size_t i = 0; i < records.size(); ++i) {
      text += format_row(std::to_string(i), embed_log(records[i], *provider, weights).values());
    }
  }
  emit(o.out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online log parsing with semantic clustering and LLM templates"};
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* ing = app.add_subcommand("ingest", "Cluster a log stream and extract templates");
  ing->add_option("--input,-i", ingest.input, "Log file, CSV dataset, or - for stdin")
      ->capture_default_str();
  ing->add_option("--format", ingest.format, "Input format")
      ->check(CLI::IsMember({"auto", "raw", "csv"}))
      ->capture_default_str();
  ing->add_option("--weights", ingest.weights, "Encoder weights file (identity if unset)");
  ing->add_option("--threshold", ingest.threshold, "Cosine similarity threshold T_c")
      ->capture_default_str();
  ing->add_option("--rebalance-every", ingest.rebalance_every, "Rebalance cadence in logs")
      ->capture_default_str();
  ing->add_flag("--batch-mode", ingest.batch_mode, "Parallel batches; parse after rebalance");
  ing->add_option("--batch-size", ingest.batch_size, "Records per batch call")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ing->add_option("--wave", ingest.wave, "Records searched concurrently (0 = hardware threads)")
      ->capture_default_str();
  ing->add_option("--max-degree", ingest.max_degree, "Graph out-degree")->capture_default_str();
  ing->add_option("--construction-breadth", ingest.construction_breadth, "Graph build breadth")
      ->capture_default_str();
  ing->add_option("--search-breadth", ingest.search_breadth, "Graph search breadth")
      ->capture_default_str();
  ing->add_option("--assignments", ingest.assignments, "JSON-lines assignments output")
      ->capture_default_str();
  ing->add_option("--snapshot", ingest.snapshot, "Index snapshot output");
  ing->add_option("--templates", ingest.templates, "Template store JSON output");
  ing->add_option("--audit", ingest.audit, "Rebalance audit JSON-lines output");
  ing->add_option("--dead-letters", ingest.dead_letters, "Failed records JSON-lines output");
  add_provider_options(ing, ingest.provider);
  ing->add_option("--parser", ingest.parser.kind, "Template parser")
      ->check(CLI::IsMember({"mock", "remote", "none"}))
      ->capture_default_str();
  ing->add_option("--completion-url", ingest.parser.url, "Remote completion base URL")
      ->capture_default_str();
  ing->add_option("--completion-model", ingest.parser.model, "Remote completion model")
      ->capture_default_str();
  ing->add_option("--completion-key-env", ingest.parser.key_env,
                  "Environment variable holding the completion API key")
      ->capture_default_str();
  ing->add_option("--prompt-bundle", ingest.parser.bundle, "Prompt bundle JSON")
      ->capture_default_str();

  EvaluateOptions eval;
  auto* ev = app.add_subcommand("evaluate", "Score assignments against a labeled dataset");
  ev->add_option("--dataset", eval.dataset, "CSV with Content and EventTemplate")->required();
  ev->add_option("--assignments", eval.assignments, "JSON-lines from ingest")->required();
  ev->add_option("--templates", eval.templates, "Template store JSON from ingest");
  ev->add_option("--group-by", eval.group_by, "Predicted grouping")
      ->check(CLI::IsMember({"cluster", "template"}))
      ->capture_default_str();
  ev->add_option("--json", eval.json_out, "Write the report as JSON");
  ev->add_option("--name", eval.name, "Dataset label in the table")->capture_default_str();

  TrainOptions tr;
  auto* trn = app.add_subcommand("train-encoder", "Fit encoder weights on labeled datasets");
  trn->add_option("--dataset", tr.datasets, "Labeled CSV (repeatable)")->required();
  trn->add_option("--out", tr.out, "Weights output")->required();
  trn->add_option("--init", tr.init, "Initial weights (identity if unset)");
  trn->add_option("--trace", tr.trace, "Loss trace JSON output (stdout if unset)");
  trn->add_option("--epochs", tr.cfg.epochs, "Epochs")->capture_default_str();
  trn->add_option("--lr", tr.cfg.learning_rate, "Learning rate")->capture_default_str();
  trn->add_option("--batch-size", tr.cfg.batch_size, "Mini-batch size")->capture_default_str();
  trn->add_option("--pairs", tr.cfg.pairs_per_dataset, "Pairs per dataset")->capture_default_str();
  trn->add_option("--ratio", tr.ratio, "similar:dissimilar pair ratio")->capture_default_str();
  trn->add_option("--seed", tr.cfg.rng_seed, "Sampling and shuffling seed")->capture_default_str();
  trn->add_option("--order", tr.order, "How pair sets of several datasets are combined")
      ->check(CLI::IsMember({"concat", "interleave"}))
      ->capture_default_str();
  add_provider_options(trn, tr.provider);

  RebalanceOptions rb;
  auto* reb = app.add_subcommand("rebalance", "Merge near-duplicate centroids in a snapshot");
  reb->add_option("--snapshot", rb.snapshot, "Input snapshot")->required();
  reb->add_option("--out", rb.out, "Output snapshot")->required();
  reb->add_option("--threshold", rb.threshold, "Merge threshold T_c")->capture_default_str();
  reb->add_option("--report", rb.report, "Merge report JSON (stdout if unset)");
  reb->add_option("--audit", rb.audit, "Audit JSON-lines output");

  ExportOptions ex;
  auto* exp = app.add_subcommand("export-embeddings", "Dump centroid or log vectors as CSV");
  exp->add_option("--snapshot", ex.snapshot, "Index snapshot to export");
  exp->add_option("--corpus", ex.corpus, "Log file or CSV to embed and export");
  exp->add_option("--format", ex.format, "Corpus format")
      ->check(CLI::IsMember({"auto", "raw", "csv"}))
      ->capture_default_str();
  exp->add_option("--weights", ex.weights, "Encoder weights for corpus mode");
  exp->add_option("--out,-o", ex.out, "CSV output")->capture_default_str();
  add_provider_options(exp, ex.provider);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code_for(ErrorKind::kConfig);
  }

  try {
    if (*ing) return run_ingest(ingest);
    if (*ev) return run_evaluate(eval);
    if (*trn) return run_train(tr);
    if (*reb) return run_rebalance(rb);
    if (*exp) return run_export(ex);
  } catch (const semlog::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
