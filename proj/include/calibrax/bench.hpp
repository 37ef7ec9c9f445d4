#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "calibrax/dataset.hpp"
#include "calibrax/prob_core.hpp"

namespace calibrax::bench {

// --- Generators ------------------------------------------------------------

/// Ground truth of the heteroscedastic generator:
/// y = x + 0.5 sin(4 pi x) + (0.05 + 0.5 x) eps, x ~ U[0, 1], eps ~ N(0, 1).
namespace heteroscedastic_truth {
double mean(double x);
double sd(double x);
double quantile(double x, double tau);
GaussianDist conditional(double x);
}  // namespace heteroscedastic_truth

/// Feature column "x", target "y".
Dataset gen_heteroscedastic(std::size_t n, std::uint64_t seed);

/// The heteroscedastic data (same draws for the same seed) plus base forecasts
/// N(mu(x), shrink * sigma(x)).
struct MisscaledStream {
  Dataset data;
  std::vector<PredictiveDistribution> forecasts;
  double shrink = 0.5;
};

MisscaledStream gen_variance_misscaled(std::size_t n, std::uint64_t seed, double shrink = 0.5);

/// The map that recalibrates a misscaled forecast exactly: N(mu, s) -> N(mu, s / shrink).
GaussianDist misscaled_oracle_map(const GaussianDist& base, double shrink);

/// p ~ U[0, 1], score s = p^2, label ~ Bernoulli(p); P(Y = 1 | s) = sqrt(s).
struct BinaryStream {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<double> p_true;
};

BinaryStream gen_distorted_binary(std::size_t n, std::uint64_t seed);
double distorted_binary_truth(double score);

/// z ~ N(0, I_K), truth softmax(z), label ~ truth, base forecast softmax(distortion * z).
struct MulticlassStream {
  Matrix z;
  std::vector<CategoricalDist> truth;
  std::vector<CategoricalDist> base;
  std::vector<std::size_t> labels;
};

inline constexpr std::size_t kMulticlassClasses = 3;
inline constexpr double kLogitDistortion = 3.0;

MulticlassStream gen_distorted_multiclass(std::size_t n, std::uint64_t seed,
                                          std::size_t num_classes = kMulticlassClasses,
                                          double distortion = kLogitDistortion);

enum class GeneratorKind { kHeteroscedastic, kVarianceMisscaled, kDistortedBinary, kDistortedMulticlass };

std::string to_string(GeneratorKind kind);
GeneratorKind generator_kind_from_string(const std::string& name);

struct GeneratorSpec {
  GeneratorKind kind = GeneratorKind::kHeteroscedastic;
  std::size_t n = 1000;
  std::uint64_t seed = 0;
  double shrink = 0.5;                         // variance_misscaled
  std::size_t num_classes = kMulticlassClasses;  // distorted_multiclass
  double distortion = kLogitDistortion;        // distorted_multiclass

  void validate() const;
};

/// Tabular form of any generator, as written by `synth`:
///   heteroscedastic, variance_misscaled: x, y
///   distorted_binary: score, label
///   distorted_multiclass: z1..zK, label
Dataset generate(const GeneratorSpec& spec);

// --- CSV and splitting -----------------------------------------------------

struct CsvSchema {
  /// Target column; empty accepts "y" or "label".
  std::string target;
  /// When nonempty, the feature columns must match exactly.
  std::vector<std::string> features;
};

/// Header row, numeric cells, target column last. Throws DataError naming the
/// offending row (1-based, header = row 1).
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Writes with 17 significant digits so a reload reproduces every double.
void save_csv(const Dataset& data, const std::filesystem::path& path);
std::string format_double(double v);

struct SplitFractions {
  double train = 0.60;
  double recal = 0.15;
  double test = 0.25;
};

struct Split {
  Dataset train;
  Dataset recal;
  Dataset test;
};

/// Shuffles rows with the seed; train and recal sizes are rounded, test takes the rest.
Split split(const Dataset& data, const SplitFractions& fractions, std::uint64_t seed);

// --- Isotonic baseline -----------------------------------------------------

/// Pool-adjacent-violators fit of a nondecreasing sequence (unit weights).
std::vector<double> isotonic_fit(std::span<const double> values);

/// Quantile recalibration by isotonic regression of PIT values: R maps the
/// base CDF level F(y) to the empirical frequency of smaller PIT values, and
/// the recalibrated forecast has CDF R(F(y)).
struct IsotonicRecalibrator {
  std::vector<double> pit;     // knots, increasing, including 0 and 1
  std::vector<double> fitted;  // R at the knots, nondecreasing from 0 to 1
  std::vector<double> out_levels;

  double map(double u) const;
  double inverse(double tau) const;
  PredictiveDistribution apply(const PredictiveDistribution& base) const;
};

IsotonicRecalibrator fit_isotonic_recalibrator(std::span<const PredictiveDistribution> base,
                                               std::span<const double> ys);

}  // namespace calibrax::bench
