// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "calibrax/bench.hpp"
#include "calibrax/experiment.hpp"
#include "calibrax/metrics.hpp"
#include "calibrax/model_io.hpp"
#include "calibrax/nn.hpp"
#include "calibrax/online.hpp"
#include "calibrax/recalibrate.hpp"
#include "calibrax/scoring.hpp"
#include "gradient_oracle.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace calibrax;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

std::string list(const std::vector<double>& v, const char* format = "%.4g") {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + fmt(format, v[i]);
  return out + "]";
}

// --- 1. Decomposition identity ----------------------------------------------

Outcome decomposition_identity() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 2 + rng.uniform_index(5);
    const std::size_t groups = 1 + rng.uniform_index(12);
    std::vector<CategoricalDist> palette;
    for (std::size_t g = 0; g < groups; ++g) {
      std::vector<double> w(k);
      for (auto& x : w) x = rng.uniform() < 0.15 ? 0.0 : rng.uniform();
      w[rng.uniform_index(k)] += 1e-3;
      palette.push_back(CategoricalDist::normalized(w));
    }
    std::vector<CategoricalDist> forecasts;
    std::vector<std::size_t> outcomes;
    const std::size_t n = 50 + rng.uniform_index(1000);
    for (std::size_t i = 0; i < n; ++i) {
      forecasts.push_back(palette[rng.uniform_index(palette.size())]);
      outcomes.push_back(rng.uniform_index(k));
    }
    const auto r = decompose_binned(forecasts, outcomes);
    worst = std::max(worst, std::abs(r.mean_loss - (r.calibration_term + r.refinement_term)));
  }
  return {worst <= 1e-9, fmt("max |mean - (cal + ref)| = %.3g over 50 datasets (tol 1e-9)", worst)};
}

// --- 2. Propriety -------------------------------------------------------------

// Paired Monte-Carlo estimate of E_G[S(F,Y) - S(G,Y)] and its standard error.
std::pair<double, double> paired_gap(const LossSpec& spec, const PredictiveDistribution& f,
                                     const PredictiveDistribution& g, const std::function<double(Rng&)>& draw,
                                     std::size_t n, Rng& rng) {
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = draw(rng);
    const double d = score(spec, f, y) - score(spec, g, y);
    sum += d;
    sum_sq += d * d;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  return {mean, std::sqrt(var / (n - 1))};
}

Outcome propriety() {
  Rng pairs(202);
  Rng mc(203);
  const std::size_t n_mc = 4000;
  const LossSpec pinball = loss::PinballAvg{decile_levels()};
  int checks = 0, violations = 0;
  double worst_z = -1e300;
  for (int trial = 0; trial < 100; ++trial) {
    // Continuous pair: log, CRPS, pinball_avg.
    const double mu = pairs.normal(), sigma = pairs.uniform(0.3, 3.0);
    const PredictiveDistribution g = GaussianDist(mu, sigma);
    const PredictiveDistribution f = GaussianDist(pairs.normal(), pairs.uniform(0.3, 3.0));
    auto draw_g = [&](Rng& r) { return mu + sigma * r.normal(); };
    for (const LossSpec& spec : {LossSpec{loss::Log{}}, LossSpec{loss::Crps{}}, pinball}) {
      const auto [gap, se] = paired_gap(spec, f, g, draw_g, n_mc, mc);
      ++checks;
      if (gap < -3.0 * se) ++violations;
      if (se > 0) worst_z = std::max(worst_z, -gap / se);
    }
    // Categorical pair: log, Brier.
    const std::size_t k = 2 + pairs.uniform_index(4);
    std::vector<double> wg(k), wf(k);
    for (auto& w : wg) w = pairs.uniform() + 0.05;
    for (auto& w : wf) w = pairs.uniform() + 0.05;
    const auto cg = CategoricalDist::normalized(wg);
    const PredictiveDistribution gc = cg, fc = CategoricalDist::normalized(wf);
    auto draw_c = [&](Rng& r) {
      double u = r.uniform(), acc = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        acc += cg.prob(c);
        if (u < acc) return static_cast<double>(c);
      }
      return static_cast<double>(k - 1);
    };
    for (const LossSpec& spec : {LossSpec{loss::Log{}}, LossSpec{loss::Brier{}}}) {
      const auto [gap, se] = paired_gap(spec, fc, gc, draw_c, n_mc, mc);
      ++checks;
      if (gap < -3.0 * se) ++violations;
      if (se > 0) worst_z = std::max(worst_z, -gap / se);
    }
  }
  return {violations == 0, fmt("%d violations beyond 3 SE in %d checks (100 pairs; log, CRPS, pinball_avg, Brier); "
                               "most negative gap %.2f SE",
                               violations, checks, -worst_z)};
}

// --- 3. Gradients -------------------------------------------------------------

Outcome gradients() {
  Rng rng(303);
  double worst = 0.0;
  int with_skip = 0, heads_gauss = 0, heads_softmax = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const bool gaussian = trial % 2 == 0;
    NetArch arch;
    arch.input_dim = 1 + rng.uniform_index(5);
    const std::size_t depth = trial < 2 ? trial : 1 + rng.uniform_index(3);
    for (std::size_t l = 0; l < depth; ++l) arch.hidden.push_back(1 + rng.uniform_index(8));
    arch.output_dim = gaussian ? 2 : 2 + rng.uniform_index(4);
    arch.dense_skip = (trial / 2) % 2 == 0;
    with_skip += arch.dense_skip;
    NeuralNet net(arch);
    net.init(rng);
    for (double& p : net.params()) p += 0.1 * rng.normal();
    std::vector<double> x(arch.input_dim);
    for (double& v : x) v = rng.normal();
    const double y = rng.normal();
    const std::size_t label = rng.uniform_index(arch.output_dim);

    std::vector<double> head_grad(arch.output_dim);
    auto loss = [&] {
      const auto out = net.forward(x);
      std::vector<double> scratch(out.size());
      return gaussian ? head::gaussian_nll(out, y, scratch) : head::softmax_xent(out, label, scratch);
    };
    NeuralNet::Tape tape;
    std::vector<double> out(arch.output_dim), grad(net.num_params(), 0.0), grad_x(x.size());
    net.forward(x, tape, out);
    if (gaussian) {
      head::gaussian_nll(out, y, head_grad);
      ++heads_gauss;
    } else {
      head::softmax_xent(out, label, head_grad);
      ++heads_softmax;
    }
    net.backward(tape, head_grad, grad, grad_x);
    worst = std::max(worst, oracle::max_relative_error(grad, oracle::finite_difference(loss, net.params())));
    worst = std::max(worst, oracle::max_relative_error(grad_x, oracle::finite_difference(loss, x)));
  }
  return {worst <= 1e-5, fmt("max relative error %.3g over 20 nets (%d dense-skip, %d Gaussian-NLL head, "
                             "%d softmax head; tol 1e-5)",
                             worst, with_skip, heads_gauss, heads_softmax)};
}

// --- 4. KDE trend ---------------------------------------------------------------

// l1 calibration error over 20 uniform bins of the recalibrated probability,
// with each bin's outcome frequency replaced by the mean of the known
// conditional probability sqrt(s) (removes label noise from the estimate).
double l1_error_against_truth(std::span<const double> probs, std::span<const double> truth, std::size_t bins = 20) {
  std::vector<double> count(bins, 0.0), p_sum(bins, 0.0), t_sum(bins, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t b = std::min(static_cast<std::size_t>(probs[i] * bins), bins - 1);
    count[b] += 1.0;
    p_sum[b] += probs[i];
    t_sum[b] += truth[i];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] > 0) total += std::abs(t_sum[b] - p_sum[b]);
  }
  return total / static_cast<double>(probs.size());
}

Outcome kde_trend() {
  const std::vector<std::size_t> sizes = {500, 5000, 50000};
  std::vector<double> medians;
  double worst_sup = 0.0;
  for (std::size_t t : sizes) {
    std::vector<double> errors;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto fit = bench::gen_distorted_binary(t, 400 + seed);
      const auto test = bench::gen_distorted_binary(20000, 500 + seed);
      const auto r = fit_kde_recalibrator(fit.scores, fit.labels);
      std::vector<double> probs(test.scores.size()), truth(test.scores.size());
      for (std::size_t i = 0; i < probs.size(); ++i) {
        probs[i] = r.apply(test.scores[i]);
        truth[i] = bench::distorted_binary_truth(test.scores[i]);
      }
      errors.push_back(l1_error_against_truth(probs, truth));
      if (t == 50000) {
        for (int k = 0; k <= 90; ++k) {
          const double s = 0.05 + 0.01 * k;
          worst_sup = std::max(worst_sup, std::abs(r.apply(s) - bench::distorted_binary_truth(s)));
        }
      }
    }
    medians.push_back(median(errors));
  }
  const bool decreasing = medians[0] > medians[1] && medians[1] > medians[2];
  return {decreasing && worst_sup <= 0.05,
          fmt("median l1 cal error (20 bins) at T=500/5000/50000: %s (strictly decreasing: %s); sup-norm vs "
              "sqrt(s) at T=50000: %.4f worst of 5 seeds (tol 0.05)",
              list(medians).c_str(), decreasing ? "yes" : "no", worst_sup)};
}

// --- 5-7. Quantile recalibrator -----------------------------------------------

struct RecalRun {
  double chk_base = 0.0;
  double chk_recal = 0.0;
  double qce_base = 0.0;
  double qce_recal = 0.0;
};

RecalRun quantile_run(std::size_t n, double shrink, std::uint64_t seed) {
  const auto levels = decile_levels();
  const auto fit = bench::gen_variance_misscaled(n, 600 + seed, shrink);
  const auto test = bench::gen_variance_misscaled(n, 700 + seed, shrink);
  std::vector<Featurization> phis;
  for (const auto& f : fit.forecasts) phis.push_back(featurize(f, levels));
  TrainConfig config;
  config.seed = seed;
  const auto r = fit_quantile_recalibrator(phis, fit.data.y, config, levels);
  std::vector<PredictiveDistribution> out;
  for (const auto& f : test.forecasts) out.push_back(r.apply(f));
  RecalRun run;
  for (std::size_t i = 0; i < test.data.size(); ++i) {
    run.chk_base += pinball_avg(test.forecasts[i], test.data.y[i], levels);
    run.chk_recal += pinball_avg(out[i], test.data.y[i], levels);
  }
  run.chk_base /= test.data.size();
  run.chk_recal /= test.data.size();
  run.qce_base = quantile_calibration_error(test.forecasts, test.data.y, levels);
  run.qce_recal = quantile_calibration_error(out, test.data.y, levels);
  return run;
}

// Expected QCE of N(mu, shrink sigma) against truth N(mu, sigma): the nominal
// level p covers with probability Phi(shrink z_p).
double misscaled_qce_oracle(double shrink) {
  double total = 0.0;
  for (double p : decile_levels()) {
    const double d = p - oracle::normal_cdf(shrink * oracle::normal_quantile(p));
    total += d * d;
  }
  return total;
}

std::vector<RecalRun> misscaled_runs() {
  std::vector<RecalRun> runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) runs.push_back(quantile_run(20000, 0.5, seed));
  return runs;
}

Outcome chk_not_worse(const std::vector<RecalRun>& runs) {
  std::vector<double> ratios;
  for (const auto& r : runs) ratios.push_back(r.chk_recal / r.chk_base);
  const double m = median(ratios);
  return {m <= 1.02, fmt("median CHK ratio recalibrated/base %.4f over 5 seeds %s (tol 1.02)", m,
                         list(ratios).c_str())};
}

Outcome calibration_direction(const std::vector<RecalRun>& runs) {
  std::vector<double> base, recal;
  for (const auto& r : runs) {
    base.push_back(r.qce_base);
    recal.push_back(r.qce_recal);
  }
  const double oracle_base = misscaled_qce_oracle(0.5);
  const double coverage = oracle::normal_cdf(0.5 * oracle::normal_quantile(0.9));
  const bool pass = median(recal) <= 0.01 && median(base) >= 0.05;
  return {pass, fmt("median QCE recalibrated %.5f (tol 0.01), base %.4f (>= 0.05; oracle expectation %.4f, "
                    "nominal 0.9 covers %.3f)",
                    median(recal), median(base), oracle_base, coverage)};
}

Outcome identity_preservation() {
  const auto run = quantile_run(50000, 1.0, 0);
  const double ratio = run.chk_recal / run.chk_base;
  return {ratio <= 1.02 && run.qce_recal <= 0.005,
          fmt("CHK ratio %.4f (tol 1.02), QCE recalibrated %.5f (tol 0.005), base %.5f", ratio, run.qce_recal,
              run.qce_base)};
}

// --- 8. Classification ordering -------------------------------------------------

Outcome classification_ordering() {
  std::vector<double> cal_base, cal_platt, cal_simplex, acc_platt, acc_simplex;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto fit = bench::gen_distorted_multiclass(20000, 800 + seed);
    const auto test = bench::gen_distorted_multiclass(20000, 900 + seed);
    const auto platt = fit_multiclass_platt(fit.base, fit.labels);
    TrainConfig config;
    config.seed = seed;
    const auto simplex = fit_simplex_recalibrator(fit.base, fit.labels, config);
    std::vector<CategoricalDist> p_out, s_out;
    for (const auto& b : test.base) {
      p_out.push_back(platt.apply(b));
      s_out.push_back(simplex.apply(b));
    }
    cal_base.push_back(classification_calibration_error(test.base, test.labels));
    cal_platt.push_back(classification_calibration_error(p_out, test.labels));
    cal_simplex.push_back(classification_calibration_error(s_out, test.labels));
    const double acc = accuracy(test.base, test.labels);
    acc_platt.push_back(std::abs(accuracy(p_out, test.labels) - acc));
    acc_simplex.push_back(std::abs(accuracy(s_out, test.labels) - acc));
  }
  const double b = median(cal_base), p = median(cal_platt), s = median(cal_simplex);
  const double da = std::max(median(acc_platt), median(acc_simplex));
  return {b > p && p > s && da < 0.01,
          fmt("median cal error base %.5f > platt %.5f > simplex %.5f; max median |accuracy change| %.4f "
              "(tol 0.01)",
              b, p, s, da)};
}

// --- 9. Online suite ------------------------------------------------------------

Outcome online_suite() {
  std::vector<double> c1s;
  bool regret_bound = true, norms = true, merged = true, external = true;
  double worst_external = -1e300;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    online::SimulationConfig config;
    config.n = 32;
    config.m = 32;
    config.steps = 50000;
    config.seed = seed;
    const auto ledger = online::simulate_distorted_stream(config);
    const double t = static_cast<double>(ledger.steps.size());
    const double c1 = online::calibration_error(ledger, online::l1_distance);
    const double c2 = online::calibration_error(ledger, online::l2_distance);
    c1s.push_back(c1);
    regret_bound = regret_bound && online::internal_regret(ledger, online::squared_loss) <= 2.0 * t * c1 &&
             online::internal_regret(ledger, online::misclassification) <= 2.0 * t * c1;
    norms = norms && c1 <= std::sqrt(config.n + 1.0) * std::sqrt(c2);
    merged = merged && online::merged_calibration_check(ledger, online::l2_distance).holds() &&
             online::merged_calibration_check(ledger, online::l1_distance).holds();
    const double per_step = online::external_regret(ledger, online::misclassification) / t;
    worst_external = std::max(worst_external, per_step);
    external = external && per_step <= 3.0 / config.n + 0.02;
  }
  const bool a = median(c1s) <= 0.05;
  return {a && regret_bound && norms && merged && external,
          fmt("(a) median C_l1 %.4f (tol 0.05) %s; (b) internal regret bound %s; (c) l1/l2 bound %s; (d) merged "
              "calibration %s; (e) worst external regret per step %.4f (tol %.4f) %s",
              median(c1s), a ? "ok" : "FAIL", regret_bound ? "ok" : "FAIL", norms ? "ok" : "FAIL", merged ? "ok" : "FAIL",
              worst_external, 3.0 / 32 + 0.02, external ? "ok" : "FAIL")};
}

// --- 10. Determinism ------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("calibrax_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  int identical = 0, total = 0;
  for (auto kind : {bench::GeneratorKind::kHeteroscedastic, bench::GeneratorKind::kVarianceMisscaled,
                    bench::GeneratorKind::kDistortedBinary, bench::GeneratorKind::kDistortedMulticlass}) {
    bench::ExperimentConfig config;
    bench::GeneratorSpec g;
    g.kind = kind;
    g.n = 3000;
    config.generator = g;
    config.seeds = {0, 1};
    const fs::path a = root / (bench::to_string(kind) + "_a"), b = root / (bench::to_string(kind) + "_b");
    bench::run_experiment(config, a);
    bench::run_experiment(bench::config_from_manifest(read_json(a / "manifest.json")), b);
    for (const char* file : {"metrics.csv", "metrics.json"}) {
      ++total;
      const std::string x = slurp(a / file);
      identical += !x.empty() && x == slurp(b / file);
    }
  }
  fs::remove_all(root);
  return {identical == total, fmt("%d of %d report files byte-identical after rerun from manifest", identical, total)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %2d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  };

  report(1, "decomposition identity", decomposition_identity);
  report(2, "propriety", propriety);
  report(3, "gradient correctness", gradients);
  report(4, "KDE recalibration trend", kde_trend);
  std::vector<RecalRun> runs;
  report(5, "recalibrated CHK vs base", [&] {
    runs = misscaled_runs();
    return chk_not_worse(runs);
  });
  report(6, "recalibrated quantile calibration", [&] {
    if (runs.empty()) return Outcome{false, "runs of criterion 5 unavailable"};
    return calibration_direction(runs);
  });
  report(7, "identity preservation", identity_preservation);
  report(8, "classification ordering", classification_ordering);
  report(9, "online recalibration", online_suite);
  report(10, "determinism", determinism);
  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
