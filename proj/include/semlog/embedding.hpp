#pragma once

#include <Eigen/Dense>

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semlog/errors.hpp"
#include "semlog/io.hpp"
#include "semlog/vec.hpp"

namespace semlog {

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Number of maximal non-whitespace runs.
inline std::size_t count_words(std::string_view s) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : s) {
    if (is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++n;
    }
  }
  return n;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

class LogRecord {
 public:
  // Rejects content that is empty after trimming.
  static LogRecord make(std::string source_id, std::string content) {
    if (trim(content).empty()) throw DataError("log content is empty");
    LogRecord r;
    r.source_id_ = std::move(source_id);
    r.word_count_ = count_words(content);
    r.content_ = std::move(content);
    return r;
  }

  const std::string& source_id() const { return source_id_; }
  const std::string& content() const { return content_; }
  std::size_t word_count() const { return word_count_; }

 private:
  LogRecord() = default;
  std::string source_id_;
  std::string content_;
  std::size_t word_count_ = 0;
};

// An embedding failure with the offending record attached.
class RecordError : public Error {
 public:
  RecordError(const Error& cause, LogRecord record, bool retryable)
      : Error(cause.kind(), cause.what()), record_(std::move(record)), retryable_(retryable) {}

  const LogRecord& record() const { return record_; }
  bool retryable() const { return retryable_; }

 private:
  LogRecord record_;
  bool retryable_;
};

struct RawEmbedding {
  std::vector<double> values;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Offline provider: whitespace tokens hashed into D buckets, counted, then
// L2-normalized. Logs sharing most tokens land close together.
class HashingProvider final : public EmbeddingProvider {
 public:
  explicit HashingProvider(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw ConfigError("hashing provider dimension must be positive");
  }

  std::size_t dimension() const override { return dim_; }

  std::vector<double> embed(std::string_view text) const override {
    std::vector<double> v(dim_, 0.0);
    for (auto tok : split_ws(text)) v[io::fnv1a64(tok) % dim_] += 1.0;
    auto n = normalized_or_empty(v);
    return n.empty() ? v : n;
  }

 private:
  std::size_t dim_;
};

inline RawEmbedding embed_raw(const LogRecord& record, const EmbeddingProvider& provider) {
  std::vector<double> values;
  try {
    values = provider.embed(record.content());
  } catch (const ProviderError& e) {
    throw RecordError(e, record, e.retryable);
  }
  if (values.size() != provider.dimension()) {
    throw ConfigError("provider returned dimension " + std::to_string(values.size()) +
                      ", configured " + std::to_string(provider.dimension()));
  }
  if (!all_finite(values)) {
    throw RecordError(DataError("provider returned non-finite values"), record, false);
  }
  return RawEmbedding{std::move(values)};
}

inline constexpr double kWordCountScale = 100.0;

inline std::vector<double> fuse_word_count(const RawEmbedding& raw, std::size_t word_count) {
  std::vector<double> out;
  out.reserve(raw.values.size() + 1);
  out.assign(raw.values.begin(), raw.values.end());
  out.push_back(static_cast<double>(word_count) / kWordCountScale);
  return out;
}

// Two stacked affine maps with no activation in between:
//   z = layer2_w * (layer1_w * x + layer1_b) + layer2_b
struct EncoderWeights {
  Eigen::MatrixXd layer1_w;  // hidden x input
  Eigen::VectorXd layer1_b;
  Eigen::MatrixXd layer2_w;  // output x hidden
  Eigen::VectorXd layer2_b;

  std::size_t input_dim() const { return static_cast<std::size_t>(layer1_w.cols()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(layer1_w.rows()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(layer2_w.rows()); }

  // Identity on the leading min(rows, cols) diagonal, zeros elsewhere.
  static EncoderWeights identity_padded(std::size_t input, std::size_t hidden, std::size_t output) {
    if (input == 0 || hidden == 0 || output == 0) {
      throw ConfigError("encoder dimensions must be positive");
    }
    EncoderWeights w;
    const auto in = static_cast<Eigen::Index>(input);
    const auto hid = static_cast<Eigen::Index>(hidden);
    const auto out = static_cast<Eigen::Index>(output);
    w.layer1_w = Eigen::MatrixXd::Identity(hid, in);
    w.layer1_b = Eigen::VectorXd::Zero(hid);
    w.layer2_w = Eigen::MatrixXd::Identity(out, hid);
    w.layer2_b = Eigen::VectorXd::Zero(out);
    return w;
  }

  // Default shape for a provider of dimension D: (D+1) -> (D+1) -> D.
  static EncoderWeights for_provider(std::size_t provider_dim) {
    return identity_padded(provider_dim + 1, provider_dim + 1, provider_dim);
  }

  void validate() const {
    if (layer1_w.size() == 0 || layer2_w.size() == 0) throw ConfigError("empty encoder weights");
    if (layer1_b.size() != layer1_w.rows() || layer2_w.cols() != layer1_w.rows() ||
        layer2_b.size() != layer2_w.rows()) {
      throw ConfigError("inconsistent encoder dimensions");
    }
    if (!layer1_w.allFinite() || !layer1_b.allFinite() || !layer2_w.allFinite() ||
        !layer2_b.allFinite()) {
      throw ConfigError("encoder weights contain non-finite values");
    }
  }

  bool bitwise_equal(const EncoderWeights& o) const {
    auto same = [](const auto& a, const auto& b) {
      return a.rows() == b.rows() && a.cols() == b.cols() &&
             std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
    };
    return same(layer1_w, o.layer1_w) && same(layer1_b, o.layer1_b) &&
           same(layer2_w, o.layer2_w) && same(layer2_b, o.layer2_b);
  }

  Eigen::VectorXd forward(std::span<const double> fused) const {
    if (fused.size() != input_dim()) {
      throw ContractViolation("encoder input has dimension " + std::to_string(fused.size()) +
                              ", expected " + std::to_string(input_dim()));
    }
    Eigen::Map<const Eigen::VectorXd> x(fused.data(), static_cast<Eigen::Index>(fused.size()));
    return layer2_w * (layer1_w * x + layer1_b) + layer2_b;
  }
};

inline UnitVector encode(std::span<const double> fused, const EncoderWeights& weights) {
  const Eigen::VectorXd z = weights.forward(fused);
  if (!(z.norm() > kNormEpsilon)) throw DegenerateEmbedding("encoder output norm below 1e-12");
  return UnitVector::normalize(std::span<const double>(z.data(), static_cast<std::size_t>(z.size())));
}

inline UnitVector embed_log(const LogRecord& record, const EmbeddingProvider& provider,
                            const EncoderWeights& weights) {
  const auto raw = embed_raw(record, provider);
  try {
    return encode(fuse_word_count(raw, record.word_count()), weights);
  } catch (const DegenerateEmbedding& e) {
    throw RecordError(e, record, false);
  }
}

// Binary weights file: "SLENCW01" framing, dims, then row-major matrices.
inline constexpr std::string_view kWeightsMagic = "SLENCW01";
inline constexpr std::uint32_t kWeightsVersion = 1;

inline std::string serialize_weights(const EncoderWeights& w) {
  w.validate();
  io::ByteWriter out;
  out.put<std::uint64_t>(w.input_dim());
  out.put<std::uint64_t>(w.hidden_dim());
  out.put<std::uint64_t>(w.output_dim());
  auto put_matrix = [&](const Eigen::MatrixXd& m) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.put_doubles(std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())));
  };
  auto put_vector = [&](const Eigen::VectorXd& v) {
    out.put_doubles(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  };
  put_matrix(w.layer1_w);
  put_vector(w.layer1_b);
  put_matrix(w.layer2_w);
  put_vector(w.layer2_b);
  return io::seal(kWeightsMagic, kWeightsVersion, out.bytes());
}

inline EncoderWeights deserialize_weights(std::string_view file) {
  io::ByteReader in(io::unseal(file, kWeightsMagic, kWeightsVersion));
  const auto input = in.get<std::uint64_t>();
  const auto hidden = in.get<std::uint64_t>();
  const auto output = in.get<std::uint64_t>();
  if (input == 0 || hidden == 0 || output == 0 || input > (1u << 20) || hidden > (1u << 20) ||
      output > (1u << 20)) {
    throw DataError("implausible encoder dimensions");
  }
  auto get_matrix = [&](std::uint64_t rows, std::uint64_t cols) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(
        static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.get_doubles(std::span<double>(rm.data(), static_cast<std::size_t>(rm.size())));
    return Eigen::MatrixXd(rm);
  };
  auto get_vector = [&](std::uint64_t n) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    in.get_doubles(std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
    return v;
  };
  EncoderWeights w;
  w.layer1_w = get_matrix(hidden, input);
  w.layer1_b = get_vector(hidden);
  w.layer2_w = get_matrix(output, hidden);
  w.layer2_b = get_vector(output);
  if (in.remaining() != 0) throw DataError("trailing bytes in weights payload");
  try {
    w.validate();
  } catch (const ConfigError& e) {
    throw DataError(e.what());
  }
  return w;
}

inline void save_weights(const EncoderWeights& w, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_weights(w));
}

inline EncoderWeights load_weights(const std::filesystem::path& path) {
  return deserialize_weights(io::read_file(path));
}

}  // namespace semlog
