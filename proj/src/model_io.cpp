#include "calibrax/model_io.hpp"

#include <algorithm>
#include <fstream>

#include "calibrax/error.hpp"

namespace calibrax {
namespace {

using nlohmann::json;

json standardizer_json(const Standardizer& s) { return {{"mean", s.mean}, {"scale", s.scale}}; }

Standardizer standardizer_from(const json& doc, std::size_t width) {
  Standardizer s;
  s.mean = doc.at("mean").get<std::vector<double>>();
  s.scale = doc.at("scale").get<std::vector<double>>();
  if (s.mean.size() != width || s.scale.size() != width) throw DataError("model file: standardizer width mismatch");
  return s;
}

template <class F>
auto parse(const char* what, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw DataError(std::string("model file: malformed ") + what + ": " + e.what());
  }
}

}  // namespace

json to_json(const NeuralNet& net) {
  const auto& a = net.arch();
  return {{"input_dim", a.input_dim},
          {"hidden", a.hidden},
          {"output_dim", a.output_dim},
          {"dense_skip", a.dense_skip},
          {"params", std::vector<double>(net.params().begin(), net.params().end())}};
}

NeuralNet net_from_json(const json& doc) {
  return parse("network", [&] {
    NetArch arch{doc.at("input_dim").get<std::size_t>(), doc.at("hidden").get<std::vector<std::size_t>>(),
                 doc.at("output_dim").get<std::size_t>(), doc.at("dense_skip").get<bool>()};
    NeuralNet net(arch);
    const auto params = doc.at("params").get<std::vector<double>>();
    if (params.size() != net.num_params()) {
      throw DataError("model file: network expects " + std::to_string(net.num_params()) + " parameters, found " +
                      std::to_string(params.size()));
    }
    std::copy(params.begin(), params.end(), net.params().begin());
    return net;
  });
}

json model_document(const std::string& type, json payload) {
  return {{"format", "calibrax-model"}, {"version", kModelFormatVersion}, {"type", type}, {"model", std::move(payload)}};
}

const json& model_payload(const json& doc, const std::string& type) {
  if (!doc.is_object() || doc.value("format", "") != "calibrax-model") {
    throw DataError("model file: not a calibrax model document");
  }
  if (doc.value("version", -1) != kModelFormatVersion) {
    throw DataError("model file: unsupported version " + doc.value("version", json(nullptr)).dump());
  }
  if (doc.value("type", "") != type) {
    throw DataError("model file: expected type " + type + ", found " + doc.value("type", std::string("?")));
  }
  if (!doc.contains("model")) throw DataError("model file: missing payload");
  return doc.at("model");
}

json to_json(const BayesianRidgeModel& m) {
  const std::size_t d = m.weight_mean.size();
  std::vector<double> cov(m.weight_cov.data().begin(), m.weight_cov.data().end());
  return model_document("bayesian_ridge", {{"dim", d},
                                           {"weight_mean", m.weight_mean},
                                           {"weight_cov", cov},
                                           {"noise_precision", m.noise_precision},
                                           {"prior_precision", m.prior_precision}});
}

BayesianRidgeModel bayesian_ridge_from_json(const json& doc) {
  const json& p = model_payload(doc, "bayesian_ridge");
  return parse("bayesian_ridge", [&] {
    BayesianRidgeModel m;
    const std::size_t d = p.at("dim").get<std::size_t>();
    m.weight_mean = p.at("weight_mean").get<std::vector<double>>();
    const auto cov = p.at("weight_cov").get<std::vector<double>>();
    if (m.weight_mean.size() != d || cov.size() != d * d) throw DataError("model file: bayesian_ridge shape mismatch");
    m.weight_cov = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) m.weight_cov(i, j) = cov[i * d + j];
    }
    m.noise_precision = p.at("noise_precision").get<double>();
    m.prior_precision = p.at("prior_precision").get<double>();
    if (!(m.noise_precision > 0.0) || !(m.prior_precision >= 0.0)) {
      throw DataError("model file: bayesian_ridge precisions out of range");
    }
    return m;
  });
}

json to_json(const GaussianMlp& m) {
  return model_document("gaussian_mlp", {{"net", to_json(m.net)},
                                         {"x_scale", standardizer_json(m.x_scale)},
                                         {"y_mean", m.y_mean},
                                         {"y_scale", m.y_scale}});
}

GaussianMlp gaussian_mlp_from_json(const json& doc) {
  const json& p = model_payload(doc, "gaussian_mlp");
  return parse("gaussian_mlp", [&] {
    GaussianMlp m;
    m.net = net_from_json(p.at("net"));
    if (m.net.arch().output_dim != 2) throw DataError("model file: gaussian_mlp needs two outputs");
    m.x_scale = standardizer_from(p.at("x_scale"), m.net.arch().input_dim);
    m.y_mean = p.at("y_mean").get<double>();
    m.y_scale = p.at("y_scale").get<double>();
    return m;
  });
}

json to_json(const SoftmaxClassifier& m) {
  json payload = {{"net", to_json(m.net)}, {"x_scale", standardizer_json(m.x_scale)}, {"num_classes", m.num_classes}};
  payload["constant_class"] = m.constant_class ? json(*m.constant_class) : json(nullptr);
  return model_document("softmax_classifier", payload);
}

SoftmaxClassifier softmax_classifier_from_json(const json& doc) {
  const json& p = model_payload(doc, "softmax_classifier");
  return parse("softmax_classifier", [&] {
    SoftmaxClassifier m;
    m.net = net_from_json(p.at("net"));
    m.num_classes = p.at("num_classes").get<std::size_t>();
    if (m.net.arch().output_dim != m.num_classes) throw DataError("model file: class count mismatch");
    m.x_scale = standardizer_from(p.at("x_scale"), m.net.arch().input_dim);
    if (!p.at("constant_class").is_null()) m.constant_class = p.at("constant_class").get<std::size_t>();
    return m;
  });
}

json to_json(const TrainConfig& c) {
  return {{"step_size", c.step_size},   {"momentum", c.momentum},
          {"epochs", c.epochs},         {"batch_size", c.batch_size},
          {"seed", c.seed},             {"tau_samples_per_example", c.tau_samples_per_example},
          {"grad_clip", c.grad_clip},   {"step_decay", c.step_decay}};
}

TrainConfig train_config_from_json(const json& doc) {
  return parse("train config", [&] {
    TrainConfig c;
    c.step_size = doc.value("step_size", c.step_size);
    c.momentum = doc.value("momentum", c.momentum);
    c.epochs = doc.value("epochs", c.epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.seed = doc.value("seed", c.seed);
    c.tau_samples_per_example = doc.value("tau_samples_per_example", c.tau_samples_per_example);
    c.grad_clip = doc.value("grad_clip", c.grad_clip);
    c.step_decay = doc.value("step_decay", c.step_decay);
    return c;
  });
}

json to_json(const QuantileRecalibrator& r) {
  return model_document("quantile_recalibrator", {{"net", to_json(r.net)},
                                                  {"kind", std::string(to_string(r.kind))},
                                                  {"input_levels", r.input_levels},
                                                  {"out_levels", r.out_levels},
                                                  {"phi_scale", standardizer_json(r.phi_scale)},
                                                  {"y_mean", r.y_mean},
                                                  {"y_scale", r.y_scale},
                                                  {"config", to_json(r.config)}});
}

QuantileRecalibrator quantile_recalibrator_from_json(const json& doc) {
  const json& p = model_payload(doc, "quantile_recalibrator");
  return parse("quantile_recalibrator", [&] {
    QuantileRecalibrator r;
    r.net = net_from_json(p.at("net"));
    r.kind = featurization_kind_from_string(p.at("kind").get<std::string>());
    r.input_levels = p.at("input_levels").get<std::vector<double>>();
    r.out_levels = p.at("out_levels").get<std::vector<double>>();
    validate_levels(r.out_levels);
    if (r.net.arch().input_dim < 3 || r.net.arch().output_dim != 1) {
      throw DataError("model file: quantile_recalibrator network shape");
    }
    r.phi_scale = standardizer_from(p.at("phi_scale"), r.net.arch().input_dim - 2);
    r.y_mean = p.at("y_mean").get<double>();
    r.y_scale = p.at("y_scale").get<double>();
    r.config = train_config_from_json(p.at("config"));
    return r;
  });
}

json to_json(const KdeRecalibrator& r) {
  return model_document("kde_recalibrator", {{"scores", r.scores},
                                             {"labels", r.labels},
                                             {"bandwidth", r.bandwidth},
                                             {"clip", r.clip},
                                             {"constant_fallback", r.constant_fallback},
                                             {"base_rate", r.base_rate}});
}

KdeRecalibrator kde_recalibrator_from_json(const json& doc) {
  const json& p = model_payload(doc, "kde_recalibrator");
  return parse("kde_recalibrator", [&] {
    KdeRecalibrator r;
    r.scores = p.at("scores").get<std::vector<double>>();
    r.labels = p.at("labels").get<std::vector<double>>();
    r.bandwidth = p.at("bandwidth").get<double>();
    r.clip = p.at("clip").get<double>();
    r.constant_fallback = p.at("constant_fallback").get<bool>();
    r.base_rate = p.at("base_rate").get<double>();
    if (r.scores.size() != r.labels.size() || !(r.bandwidth > 0.0) ||
        !std::is_sorted(r.scores.begin(), r.scores.end())) {
      throw DataError("model file: kde_recalibrator support is inconsistent");
    }
    return r;
  });
}

json to_json(const SimplexRecalibrator& r) {
  return model_document("simplex_recalibrator",
                        {{"net", to_json(r.net)}, {"input_scale", standardizer_json(r.input_scale)}});
}

SimplexRecalibrator simplex_recalibrator_from_json(const json& doc) {
  const json& p = model_payload(doc, "simplex_recalibrator");
  return parse("simplex_recalibrator", [&] {
    SimplexRecalibrator r;
    r.net = net_from_json(p.at("net"));
    if (r.net.arch().input_dim != r.net.arch().output_dim) throw DataError("model file: simplex network shape");
    r.input_scale = standardizer_from(p.at("input_scale"), r.net.arch().input_dim);
    return r;
  });
}

json to_json(const PlattScaler& r) {
  return model_document("platt", {{"a", r.a}, {"b", r.b}, {"fallback", r.fallback}});
}

PlattScaler platt_from_json(const json& doc) {
  const json& p = model_payload(doc, "platt");
  return parse("platt", [&] {
    return PlattScaler{p.at("a").get<double>(), p.at("b").get<double>(), p.at("fallback").get<bool>()};
  });
}

json to_json(const TemperatureScaler& r) {
  return model_document("temperature", {{"temperature", r.temperature}, {"fallback", r.fallback}});
}

TemperatureScaler temperature_from_json(const json& doc) {
  const json& p = model_payload(doc, "temperature");
  return parse("temperature", [&] {
    TemperatureScaler r{p.at("temperature").get<double>(), p.at("fallback").get<bool>()};
    if (!(r.temperature > 0.0)) throw DataError("model file: temperature must be positive");
    return r;
  });
}

json to_json(const MulticlassPlatt& r) {
  return model_document("multiclass_platt",
                        {{"num_classes", r.bias.size()},
                         {"weights", std::vector<double>(r.weights.data().begin(), r.weights.data().end())},
                         {"bias", r.bias}});
}

MulticlassPlatt multiclass_platt_from_json(const json& doc) {
  const json& p = model_payload(doc, "multiclass_platt");
  return parse("multiclass_platt", [&] {
    MulticlassPlatt r;
    const std::size_t k = p.at("num_classes").get<std::size_t>();
    const auto w = p.at("weights").get<std::vector<double>>();
    r.bias = p.at("bias").get<std::vector<double>>();
    if (w.size() != k * k || r.bias.size() != k) throw DataError("model file: multiclass_platt shape mismatch");
    r.weights = Matrix(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < k; ++j) r.weights(i, j) = w[i * k + j];
    }
    return r;
  });
}

void write_json(const std::filesystem::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid JSON: " + e.what());
  }
}

}  // namespace calibrax
