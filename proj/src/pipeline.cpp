#include "calibrax/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "calibrax/error.hpp"
#include "calibrax/metrics.hpp"
#include "calibrax/model_io.hpp"
#include "calibrax/nn.hpp"
#include "calibrax/scoring.hpp"

namespace calibrax::bench {
namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

bool is_multiclass_oracle_schema(const std::vector<std::string>& names) {
  if (names.size() < 2) return false;
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] != "z" + std::to_string(k + 1)) return false;
  }
  return true;
}

bool oracle_applies(const Dataset& data) {
  const auto& names = data.feature_names;
  if (data.is_classification()) {
    return names == std::vector<std::string>{"score"} || is_multiclass_oracle_schema(names);
  }
  return names == std::vector<std::string>{"x"};
}

OracleBase make_oracle(const BaseModelSpec& spec, const Dataset& data) {
  if (!oracle_applies(data)) {
    throw DataError("oracle base model: feature columns do not match any generator (x, score, or z1..zK)");
  }
  OracleBase oracle;
  oracle.shrink = spec.shrink;
  oracle.distortion = spec.distortion;
  if (!data.is_classification()) {
    oracle.kind = OracleBase::Kind::kMisscaled;
  } else if (data.feature_names.size() == 1) {
    oracle.kind = OracleBase::Kind::kDistortedBinary;
  } else {
    oracle.kind = OracleBase::Kind::kDistortedMulticlass;
    oracle.num_classes = data.feature_names.size();
  }
  return oracle;
}

std::vector<int> binary_labels(const Dataset& data) {
  std::vector<int> out;
  for (std::size_t label : data.labels()) {
    if (label > 1) throw DataError("binary recalibrator: labels must be 0 or 1");
    out.push_back(static_cast<int>(label));
  }
  return out;
}

std::vector<CategoricalDist> categoricals(std::span<const PredictiveDistribution> forecasts) {
  std::vector<CategoricalDist> out;
  out.reserve(forecasts.size());
  for (const auto& f : forecasts) {
    const auto* c = std::get_if<CategoricalDist>(&f);
    if (c == nullptr) throw DomainError("classification metric on a continuous forecast");
    out.push_back(*c);
  }
  return out;
}

std::size_t forecast_classes(std::span<const PredictiveDistribution> forecasts) {
  if (forecasts.empty()) throw DomainError("recalibrator: empty recalibration set");
  const auto* c = std::get_if<CategoricalDist>(&forecasts.front());
  return c == nullptr ? 0 : c->num_classes();
}

std::string fmt(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", v);
  return buffer;
}

}  // namespace

// --- Base models -----------------------------------------------------------

PredictiveDistribution OracleBase::predict(std::span<const double> x) const {
  switch (kind) {
    case Kind::kMisscaled: {
      if (x.size() != 1) throw DomainError("oracle base: expected one feature");
      return GaussianDist(heteroscedastic_truth::mean(x[0]), shrink * heteroscedastic_truth::sd(x[0]));
    }
    case Kind::kDistortedBinary: {
      if (x.size() != 1) throw DomainError("oracle base: expected one feature");
      const double s = std::clamp(x[0], 0.0, 1.0);
      return CategoricalDist({1.0 - s, s});
    }
    case Kind::kDistortedMulticlass: {
      if (x.size() != num_classes) throw DomainError("oracle base: feature count differs from class count");
      std::vector<double> logits(x.begin(), x.end());
      for (double& v : logits) v *= distortion;
      std::vector<double> probs(num_classes);
      head::softmax(logits, probs);
      return CategoricalDist(std::move(probs));
    }
  }
  throw DomainError("oracle base: unknown kind");
}

std::vector<double> PolyRidge::features(std::span<const double> x) const {
  std::vector<double> z(x.size());
  x_scale.apply(x, z);
  std::vector<double> out;
  out.reserve(1 + degree * z.size());
  out.push_back(1.0);
  for (double v : z) {
    double power = 1.0;
    for (std::size_t d = 0; d < degree; ++d) {
      power *= v;
      out.push_back(power);
    }
  }
  return out;
}

GaussianDist PolyRidge::predict(std::span<const double> x) const {
  return predict_bayesian_ridge(model, features(x));
}

std::string base_model_kind(const BaseModel& model) {
  return std::visit(Overloaded{
                        [](const OracleBase&) -> std::string { return "oracle"; },
                        [](const PolyRidge&) -> std::string { return "bayesian_ridge"; },
                        [](const GaussianMlp&) -> std::string { return "mlp_gaussian"; },
                        [](const SoftmaxClassifier&) -> std::string { return "softmax_classifier"; },
                    },
                    model);
}

BaseModel fit_base_model(const BaseModelSpec& spec, const Dataset& train) {
  if (train.size() == 0) throw DomainError("fit_base_model: empty training set");
  std::string kind = spec.kind;
  if (kind == "auto") {
    if (oracle_applies(train)) {
      kind = "oracle";
    } else {
      kind = train.is_classification() ? "softmax_classifier" : "bayesian_ridge";
    }
  }
  if (kind == "oracle") return make_oracle(spec, train);
  if (kind == "bayesian_ridge" || kind == "mlp_gaussian") {
    if (train.is_classification()) throw DomainError("base model " + kind + " needs a regression target y");
  } else if (kind == "softmax_classifier") {
    if (!train.is_classification()) throw DomainError("softmax_classifier needs a classification target label");
  }
  if (kind == "bayesian_ridge") {
    if (spec.poly_degree == 0) throw DomainError("bayesian_ridge: poly_degree must be at least 1");
    PolyRidge ridge;
    ridge.degree = spec.poly_degree;
    ridge.x_scale = Standardizer::fit(train.x);
    Matrix design(train.size(), 1 + ridge.degree * train.x.cols());
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto row = ridge.features(train.x.row(i));
      std::copy(row.begin(), row.end(), design.row(i).begin());
    }
    ridge.model = fit_bayesian_ridge(design, train.y);
    return ridge;
  }
  if (kind == "mlp_gaussian") return fit_mlp_gaussian(train.x, train.y, spec.shape, spec.train);
  if (kind == "softmax_classifier") {
    const auto labels = train.labels();
    return fit_softmax_classifier(train.x, labels, spec.shape, spec.train);
  }
  throw DomainError("unknown base model kind: " + spec.kind);
}

PredictiveDistribution predict(const BaseModel& model, std::span<const double> x) {
  return std::visit([x](const auto& m) { return PredictiveDistribution(m.predict(x)); }, model);
}

std::vector<PredictiveDistribution> predict_all(const BaseModel& model, const Matrix& x) {
  std::vector<PredictiveDistribution> out;
  out.reserve(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.push_back(predict(model, x.row(i)));
  return out;
}

json to_json(const BaseModel& model) {
  return std::visit(
      Overloaded{
          [](const OracleBase& o) {
            static const char* kinds[] = {"misscaled", "distorted_binary", "distorted_multiclass"};
            return model_document("oracle", {{"kind", kinds[static_cast<int>(o.kind)]},
                                             {"shrink", o.shrink},
                                             {"distortion", o.distortion},
                                             {"num_classes", o.num_classes}});
          },
          [](const PolyRidge& p) {
            return model_document("poly_ridge", {{"degree", p.degree},
                                                 {"x_mean", p.x_scale.mean},
                                                 {"x_scale", p.x_scale.scale},
                                                 {"ridge", to_json(p.model)}});
          },
          [](const GaussianMlp& m) { return to_json(m); },
          [](const SoftmaxClassifier& m) { return to_json(m); },
      },
      model);
}

BaseModel base_model_from_json(const json& doc) {
  const std::string type = doc.value("type", "");
  try {
    if (type == "oracle") {
      const json& p = model_payload(doc, "oracle");
      OracleBase o;
      const std::string kind = p.at("kind").get<std::string>();
      if (kind == "misscaled") {
        o.kind = OracleBase::Kind::kMisscaled;
      } else if (kind == "distorted_binary") {
        o.kind = OracleBase::Kind::kDistortedBinary;
      } else if (kind == "distorted_multiclass") {
        o.kind = OracleBase::Kind::kDistortedMulticlass;
      } else {
        throw DataError("model file: unknown oracle kind " + kind);
      }
      o.shrink = p.at("shrink").get<double>();
      o.distortion = p.at("distortion").get<double>();
      o.num_classes = p.at("num_classes").get<std::size_t>();
      return o;
    }
    if (type == "poly_ridge") {
      const json& p = model_payload(doc, "poly_ridge");
      PolyRidge r;
      r.degree = p.at("degree").get<std::size_t>();
      r.x_scale.mean = p.at("x_mean").get<std::vector<double>>();
      r.x_scale.scale = p.at("x_scale").get<std::vector<double>>();
      r.model = bayesian_ridge_from_json(p.at("ridge"));
      if (r.x_scale.mean.size() != r.x_scale.scale.size() ||
          r.model.weight_mean.size() != 1 + r.degree * r.x_scale.mean.size()) {
        throw DataError("model file: poly_ridge dimensions are inconsistent");
      }
      return r;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
  if (type == "gaussian_mlp") return gaussian_mlp_from_json(doc);
  if (type == "softmax_classifier") return softmax_classifier_from_json(doc);
  throw DataError("model file: unknown base model type '" + type + "'");
}

// --- Recalibrators ---------------------------------------------------------

Recalibrator fit_recalibrator(const std::string& method, std::span<const PredictiveDistribution> base,
                              const Dataset& recal, const TrainConfig& train) {
  if (base.size() != recal.size()) throw DomainError("fit_recalibrator: forecasts and data differ in length");
  const std::size_t classes = forecast_classes(base);
  if (method == "uncalibrated") return IdentityRecalibrator{};

  if (classes == 0) {
    if (recal.is_classification()) throw DataError("regression forecasts against a label column");
    if (method == "isotonic") return fit_isotonic_recalibrator(base, recal.y);
    if (method == "quantile_nn") {
      const auto levels = decile_levels();
      std::vector<Featurization> phis;
      phis.reserve(base.size());
      for (const auto& f : base) phis.push_back(featurize(f, levels));
      return fit_quantile_recalibrator(phis, recal.y, train, levels);
    }
    throw DomainError("method '" + method + "' does not apply to regression");
  }

  const auto labels = recal.labels();
  for (std::size_t label : labels) {
    if (label >= classes) throw DataError("label exceeds the forecast class count");
  }
  const auto probs = categoricals(base);
  if (method == "platt") {
    if (classes > 2) return fit_multiclass_platt(probs, labels);
    std::vector<double> scores;
    for (const auto& p : probs) scores.push_back(p.prob(1));
    return fit_platt(scores, binary_labels(recal));
  }
  if (method == "kde") {
    if (classes != 2) throw DomainError("kde recalibration is binary only");
    std::vector<double> scores;
    for (const auto& p : probs) scores.push_back(p.prob(1));
    return fit_kde_recalibrator(scores, binary_labels(recal));
  }
  if (method == "temperature") {
    Matrix logits(probs.size(), classes);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      for (std::size_t k = 0; k < classes; ++k) logits(i, k) = std::log(std::max(probs[i].prob(k), kProbFloor));
    }
    return fit_temperature(logits, labels);
  }
  if (method == "simplex") return fit_simplex_recalibrator(probs, labels, train);
  throw DomainError("method '" + method + "' does not apply to classification");
}

PredictiveDistribution apply(const Recalibrator& r, const PredictiveDistribution& base) {
  return std::visit([&base](const auto& m) { return PredictiveDistribution(m.apply(base)); }, r);
}

std::vector<PredictiveDistribution> apply_all(const Recalibrator& r, std::span<const PredictiveDistribution> base) {
  std::vector<PredictiveDistribution> out;
  out.reserve(base.size());
  for (const auto& f : base) out.push_back(apply(r, f));
  return out;
}

json to_json(const Recalibrator& r) {
  return std::visit(Overloaded{
                        [](const IdentityRecalibrator&) { return model_document("identity", json::object()); },
                        [](const IsotonicRecalibrator& m) {
                          return model_document("isotonic", {{"pit", m.pit},
                                                             {"fitted", m.fitted},
                                                             {"out_levels", m.out_levels}});
                        },
                        [](const auto& m) { return calibrax::to_json(m); },
                    },
                    r);
}

Recalibrator recalibrator_from_json(const json& doc) {
  const std::string type = doc.value("type", "");
  if (type == "identity") {
    model_payload(doc, "identity");
    return IdentityRecalibrator{};
  }
  if (type == "isotonic") {
    const json& p = model_payload(doc, "isotonic");
    IsotonicRecalibrator r;
    try {
      r.pit = p.at("pit").get<std::vector<double>>();
      r.fitted = p.at("fitted").get<std::vector<double>>();
      r.out_levels = p.at("out_levels").get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw DataError(std::string("model file: ") + e.what());
    }
    if (r.pit.size() < 2 || r.pit.size() != r.fitted.size()) throw DataError("model file: isotonic knots malformed");
    validate_levels(r.out_levels);
    return r;
  }
  if (type == "quantile_recalibrator") return quantile_recalibrator_from_json(doc);
  if (type == "kde_recalibrator") return kde_recalibrator_from_json(doc);
  if (type == "platt") return platt_from_json(doc);
  if (type == "multiclass_platt") return multiclass_platt_from_json(doc);
  if (type == "temperature") return temperature_from_json(doc);
  if (type == "simplex_recalibrator") return simplex_recalibrator_from_json(doc);
  throw DataError("model file: unknown recalibrator type '" + type + "'");
}

std::vector<std::string> default_methods(const Dataset& data) {
  if (!data.is_classification()) return {"uncalibrated", "isotonic", "quantile_nn"};
  std::size_t classes = 2;
  for (std::size_t label : data.labels()) classes = std::max(classes, label + 1);
  if (classes == 2) return {"uncalibrated", "platt", "temperature", "kde", "simplex"};
  return {"uncalibrated", "platt", "temperature", "simplex"};
}

// --- Metrics ---------------------------------------------------------------

std::vector<std::string> default_metrics(const Dataset& data) {
  if (!data.is_classification()) return {"mae", "mape", "chk", "crps", "nll", "qce"};
  std::size_t classes = 2;
  for (std::size_t label : data.labels()) classes = std::max(classes, label + 1);
  std::vector<std::string> out = {"accuracy", "nll", "brier", "ece", "cal_error"};
  if (classes == 2) out.push_back("cal_l1");
  return out;
}

std::vector<MetricValue> evaluate_metrics(std::span<const PredictiveDistribution> forecasts, const Dataset& test,
                                          std::span<const std::string> metrics) {
  if (forecasts.size() != test.size()) throw DomainError("evaluate_metrics: forecasts and data differ in length");
  if (forecasts.empty()) throw DomainError("evaluate_metrics: empty test set");
  const double n = static_cast<double>(test.size());
  const auto levels = decile_levels();
  std::vector<MetricValue> out;

  if (!test.is_classification()) {
    const auto points = point_predictions(forecasts);
    for (const auto& name : metrics) {
      double value = 0.0;
      if (name == "mae" || name == "mape") {
        const auto errors = mae_mape(points, test.y);
        value = name == "mae" ? errors.mae : errors.mape;
      } else if (name == "chk") {
        for (std::size_t i = 0; i < forecasts.size(); ++i) value += pinball_avg(forecasts[i], test.y[i], levels);
        value /= n;
      } else if (name == "crps") {
        for (std::size_t i = 0; i < forecasts.size(); ++i) value += crps(forecasts[i], test.y[i]);
        value /= n;
      } else if (name == "nll") {
        for (std::size_t i = 0; i < forecasts.size(); ++i) value += log_loss(forecasts[i], test.y[i]);
        value /= n;
      } else if (name == "qce") {
        value = quantile_calibration_error(forecasts, test.y, levels);
      } else {
        throw DomainError("unknown regression metric: " + name);
      }
      out.push_back({name, value});
    }
    return out;
  }

  const auto probs = categoricals(forecasts);
  const auto labels = test.labels();
  for (const auto& name : metrics) {
    double value = 0.0;
    if (name == "accuracy") {
      value = accuracy(probs, labels);
    } else if (name == "nll") {
      for (std::size_t i = 0; i < probs.size(); ++i) value += log_loss(forecasts[i], test.y[i]);
      value /= n;
    } else if (name == "brier") {
      for (std::size_t i = 0; i < probs.size(); ++i) value += brier(probs[i], labels[i]);
      value /= n;
    } else if (name == "ece") {
      value = ece_classification(probs, labels, 10);
    } else if (name == "cal_error") {
      value = classification_calibration_error(probs, labels);
    } else if (name == "cal_l1") {
      if (probs.front().num_classes() != 2) throw DomainError("cal_l1 is defined for binary forecasts");
      std::vector<double> p1;
      std::vector<int> y;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        p1.push_back(probs[i].prob(1));
        y.push_back(static_cast<int>(labels[i]));
      }
      value = binary_calibration_error_l1(p1, y);
    } else {
      throw DomainError("unknown classification metric: " + name);
    }
    out.push_back({name, value});
  }
  return out;
}

std::vector<std::pair<double, double>> reliability_points(std::span<const PredictiveDistribution> forecasts,
                                                          const Dataset& test) {
  std::vector<std::pair<double, double>> points;
  if (!test.is_classification()) {
    const auto levels = decile_levels();
    const auto table = reliability_table(forecasts, test.y, levels);
    for (std::size_t j = 0; j < levels.size(); ++j) {
      points.emplace_back(table.bins[j].nominal_level, table.bins[j].empirical_freq);
    }
    return points;
  }
  const auto probs = categoricals(forecasts);
  const auto labels = test.labels();
  constexpr std::size_t kBins = 10;
  std::vector<double> conf(kBins, 0.0);
  std::vector<double> hits(kBins, 0.0);
  std::vector<double> count(kBins, 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = 0.0;
    bool hit = false;
    if (probs[i].num_classes() == 2) {
      p = probs[i].prob(1);
      hit = labels[i] == 1;
    } else {
      const std::size_t top = probs[i].argmax();
      p = probs[i].prob(top);
      hit = labels[i] == top;
    }
    const auto b = std::min(static_cast<std::size_t>(p * kBins), kBins - 1);
    conf[b] += p;
    hits[b] += hit ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  for (std::size_t b = 0; b < kBins; ++b) {
    if (count[b] > 0.0) points.emplace_back(conf[b] / count[b], hits[b] / count[b]);
  }
  return points;
}

std::string reliability_svg(const std::string& title, std::span<const std::pair<double, double>> points,
                            bool classification) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 50.0;
  auto px = [](double v) { return fmt(kMargin + std::clamp(v, 0.0, 1.0) * kSize); };
  auto py = [](double v) { return fmt(kMargin + (1.0 - std::clamp(v, 0.0, 1.0)) * kSize); };
  const double total = kSize + 2.0 * kMargin;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << fmt(total) << "\" height=\""
      << fmt(total) << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << fmt(total) << "\" height=\"" << fmt(total) << "\" fill=\"white\"/>\n"
      << "<text x=\"" << fmt(total / 2) << "\" y=\"30\" text-anchor=\"middle\" font-size=\"16\">" << title
      << "</text>\n";
  // Axes with ticks every 0.2.
  svg << "<g stroke=\"black\" stroke-width=\"1\">\n"
      << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(0) << "\"/>\n"
      << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(0) << "\" y2=\"" << py(1) << "\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    svg << "<line x1=\"" << px(v) << "\" y1=\"" << py(0) << "\" x2=\"" << px(v) << "\" y2=\"" << fmt(kMargin + kSize + 5)
        << "\"/>\n"
        << "<line x1=\"" << fmt(kMargin - 5) << "\" y1=\"" << py(v) << "\" x2=\"" << px(0) << "\" y2=\"" << py(v)
        << "\"/>\n";
  }
  svg << "</g>\n<g font-size=\"11\">\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    svg << "<text x=\"" << px(v) << "\" y=\"" << fmt(kMargin + kSize + 18) << "\" text-anchor=\"middle\">" << fmt(v)
        << "</text>\n"
        << "<text x=\"" << fmt(kMargin - 8) << "\" y=\"" << fmt(kMargin + (1.0 - v) * kSize + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  svg << "</g>\n";
  svg << "<text x=\"" << fmt(total / 2) << "\" y=\"" << fmt(total - 10) << "\" text-anchor=\"middle\" font-size=\"12\">"
      << (classification ? "predicted probability" : "nominal level") << "</text>\n"
      << "<text x=\"15\" y=\"" << fmt(total / 2) << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
      << fmt(total / 2) << ")\">" << (classification ? "observed frequency" : "empirical coverage") << "</text>\n";
  svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 4\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < points.size(); ++i) {
    svg << (i ? " " : "") << px(points[i].first) << ',' << py(points[i].second);
  }
  svg << "\"/>\n";
  for (const auto& [x, y] : points) {
    svg << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"3\" fill=\"steelblue\"/>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace calibrax::bench
