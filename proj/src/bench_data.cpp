#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "calibrax/bench.hpp"
#include "calibrax/error.hpp"
#include "calibrax/nn.hpp"
#include "calibrax/rng.hpp"

namespace calibrax::bench {

namespace heteroscedastic_truth {

double mean(double x) { return x + 0.5 * std::sin(4.0 * std::numbers::pi * x); }
double sd(double x) { return 0.05 + 0.5 * x; }
double quantile(double x, double tau) { return quantile_at(conditional(x), tau); }
GaussianDist conditional(double x) { return GaussianDist(mean(x), sd(x)); }

}  // namespace heteroscedastic_truth

Dataset gen_heteroscedastic(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("gen_heteroscedastic: n must be positive");
  Rng rng(seed);
  Dataset data;
  data.feature_names = {"x"};
  data.target_name = "y";
  data.x = Matrix(n, 1);
  data.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    data.x(i, 0) = x;
    data.y[i] = heteroscedastic_truth::mean(x) + heteroscedastic_truth::sd(x) * rng.normal();
  }
  return data;
}

MisscaledStream gen_variance_misscaled(std::size_t n, std::uint64_t seed, double shrink) {
  if (!(shrink > 0.0) || !std::isfinite(shrink)) throw DomainError("gen_variance_misscaled: shrink must be positive");
  MisscaledStream stream;
  stream.data = gen_heteroscedastic(n, seed);
  stream.shrink = shrink;
  stream.forecasts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = stream.data.x(i, 0);
    stream.forecasts.emplace_back(
        GaussianDist(heteroscedastic_truth::mean(x), shrink * heteroscedastic_truth::sd(x)));
  }
  return stream;
}

GaussianDist misscaled_oracle_map(const GaussianDist& base, double shrink) {
  return GaussianDist(base.mu(), base.sigma() / shrink);
}

BinaryStream gen_distorted_binary(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("gen_distorted_binary: n must be positive");
  Rng rng(seed);
  BinaryStream stream;
  stream.scores.resize(n);
  stream.labels.resize(n);
  stream.p_true.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = rng.uniform();
    stream.p_true[i] = p;
    stream.scores[i] = p * p;
    stream.labels[i] = rng.bernoulli(p) ? 1 : 0;
  }
  return stream;
}

double distorted_binary_truth(double score) {
  if (!(score >= 0.0 && score <= 1.0)) throw DomainError("distorted_binary_truth: score outside [0, 1]");
  return std::sqrt(score);
}

MulticlassStream gen_distorted_multiclass(std::size_t n, std::uint64_t seed, std::size_t num_classes,
                                          double distortion) {
  if (n == 0) throw DomainError("gen_distorted_multiclass: n must be positive");
  if (num_classes < 2) throw DomainError("gen_distorted_multiclass: need at least two classes");
  if (!(distortion > 0.0)) throw DomainError("gen_distorted_multiclass: distortion must be positive");
  Rng rng(seed);
  MulticlassStream stream;
  stream.z = Matrix(n, num_classes);
  stream.truth.reserve(n);
  stream.base.reserve(n);
  stream.labels.resize(n);
  std::vector<double> logits(num_classes);
  std::vector<double> probs(num_classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      logits[k] = rng.normal();
      stream.z(i, k) = logits[k];
    }
    head::softmax(logits, probs);
    stream.truth.emplace_back(probs);
    const double u = rng.uniform();
    double cumulative = 0.0;
    std::size_t label = num_classes - 1;
    for (std::size_t k = 0; k < num_classes; ++k) {
      cumulative += probs[k];
      if (u < cumulative) {
        label = k;
        break;
      }
    }
    stream.labels[i] = label;
    for (double& v : logits) v *= distortion;
    head::softmax(logits, probs);
    stream.base.emplace_back(probs);
  }
  return stream;
}

std::string to_string(GeneratorKind kind) {
  switch (kind) {
    case GeneratorKind::kHeteroscedastic: return "heteroscedastic";
    case GeneratorKind::kVarianceMisscaled: return "variance_misscaled";
    case GeneratorKind::kDistortedBinary: return "distorted_binary";
    case GeneratorKind::kDistortedMulticlass: return "distorted_multiclass";
  }
  return "unknown";
}

GeneratorKind generator_kind_from_string(const std::string& name) {
  for (auto kind : {GeneratorKind::kHeteroscedastic, GeneratorKind::kVarianceMisscaled,
                    GeneratorKind::kDistortedBinary, GeneratorKind::kDistortedMulticlass}) {
    if (to_string(kind) == name) return kind;
  }
  throw DomainError("unknown generator kind: " + name);
}

void GeneratorSpec::validate() const {
  if (n == 0) throw DomainError("generator: n must be at least 1");
  if (kind == GeneratorKind::kVarianceMisscaled && !(shrink > 0.0)) {
    throw DomainError("generator: shrink must be positive");
  }
  if (kind == GeneratorKind::kDistortedMulticlass && (num_classes < 2 || !(distortion > 0.0))) {
    throw DomainError("generator: need num_classes >= 2 and positive distortion");
  }
}

Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case GeneratorKind::kHeteroscedastic:
    case GeneratorKind::kVarianceMisscaled:
      return gen_heteroscedastic(spec.n, spec.seed);
    case GeneratorKind::kDistortedBinary: {
      const auto stream = gen_distorted_binary(spec.n, spec.seed);
      Dataset data;
      data.feature_names = {"score"};
      data.target_name = "label";
      data.x = Matrix(spec.n, 1);
      data.y.resize(spec.n);
      for (std::size_t i = 0; i < spec.n; ++i) {
        data.x(i, 0) = stream.scores[i];
        data.y[i] = stream.labels[i];
      }
      return data;
    }
    case GeneratorKind::kDistortedMulticlass: {
      const auto stream = gen_distorted_multiclass(spec.n, spec.seed, spec.num_classes, spec.distortion);
      Dataset data;
      for (std::size_t k = 0; k < spec.num_classes; ++k) data.feature_names.push_back("z" + std::to_string(k + 1));
      data.target_name = "label";
      data.x = stream.z;
      data.y.assign(stream.labels.begin(), stream.labels.end());
      return data;
    }
  }
  throw DomainError("generate: unknown kind");
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream stream(line);
  std::string field;
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof buffer, "%.17g", v);
  return buffer;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open");
  const std::string where = path.string() + ": ";

  std::string line;
  if (!std::getline(in, line)) throw DataError(where + "empty file, expected a header row");
  std::vector<std::string> header = split_fields(line);
  for (auto& name : header) name = trim(name);
  if (header.size() < 2) throw DataError(where + "row 1: need at least one feature and a target column");

  const std::string& target = header.back();
  if (schema.target.empty() ? (target != "y" && target != "label") : target != schema.target) {
    throw DataError(where + "row 1: last column must be the target (" +
                    (schema.target.empty() ? std::string("y or label") : schema.target) + "), found '" + target + "'");
  }
  Dataset data;
  data.target_name = target;
  data.feature_names.assign(header.begin(), header.end() - 1);
  if (!schema.features.empty() && schema.features != data.feature_names) {
    throw DataError(where + "row 1: feature columns do not match the expected schema");
  }

  const std::size_t cols = data.feature_names.size();
  std::vector<double> values;
  std::size_t row_number = 1;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(where + "row " + std::to_string(row_number) + ": expected " + std::to_string(header.size()) +
                      " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      double v = 0.0;
      if (!parse_double(trim(fields[j]), v)) {
        throw DataError(where + "row " + std::to_string(row_number) + ": column '" + header[j] +
                        "' is not a finite number");
      }
      if (j + 1 == fields.size()) {
        if (data.is_classification() && (v < 0.0 || v != std::floor(v))) {
          throw DataError(where + "row " + std::to_string(row_number) + ": label is not a class index");
        }
        data.y.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (data.y.empty()) throw DataError(where + "no data rows");
  data.x = Matrix(data.y.size(), cols);
  std::copy(values.begin(), values.end(), data.x.row(0).begin());
  return data;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  if (data.x.rows() != data.size()) throw DomainError("save_csv: feature and target row counts differ");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  for (const auto& name : data.feature_names) out << name << ',';
  out << data.target_name << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.x.row(i)) out << format_double(v) << ',';
    out << format_double(data.y[i]) << '\n';
  }
  if (!out) throw DataError(path.string() + ": write failed");
}

Split split(const Dataset& data, const SplitFractions& fractions, std::uint64_t seed) {
  const double total = fractions.train + fractions.recal + fractions.test;
  if (fractions.train < 0.0 || fractions.recal < 0.0 || fractions.test < 0.0 || std::abs(total - 1.0) > 1e-9) {
    throw DomainError("split: fractions must be nonnegative and sum to 1");
  }
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(fractions.train * n)));
  const auto n_recal = std::min(n - n_train, static_cast<std::size_t>(std::llround(fractions.recal * n)));
  const std::span<const std::size_t> all(order);
  return {data.subset(all.subspan(0, n_train)), data.subset(all.subspan(n_train, n_recal)),
          data.subset(all.subspan(n_train + n_recal))};
}

}  // namespace calibrax::bench
