#include "calibrax/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "calibrax/error.hpp"

namespace calibrax {

NeuralNet::NeuralNet(NetArch arch) : arch_(std::move(arch)) {
  if (arch_.input_dim == 0 || arch_.output_dim == 0) throw DomainError("NeuralNet: zero input or output width");
  for (std::size_t h : arch_.hidden) {
    if (h == 0) throw DomainError("NeuralNet: empty hidden layer");
  }
  std::size_t params = 0;
  std::size_t cursor = arch_.input_dim;  // end of the activation buffer so far
  std::size_t last_block = 0;            // start of the most recent block
  auto add_layer = [&](std::size_t out, bool hidden) {
    Layer layer;
    layer.hidden = hidden;
    layer.in_offset = arch_.dense_skip ? 0 : last_block;
    layer.in = cursor - layer.in_offset;
    layer.out = out;
    layer.weights = params;
    params += out * layer.in;
    layer.bias = params;
    params += out;
    if (hidden) {
      layer.slopes = params;
      params += out;
      layer.out_offset = cursor;
      last_block = cursor;
      cursor += out;
    }
    layers_.push_back(layer);
  };
  for (std::size_t h : arch_.hidden) add_layer(h, true);
  add_layer(arch_.output_dim, false);
  buffer_size_ = cursor;
  params_.assign(params, 0.0);
}

void NeuralNet::init(Rng& rng) {
  for (const auto& layer : layers_) {
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.in));
    for (std::size_t k = 0; k < layer.out * layer.in; ++k) params_[layer.weights + k] = scale * rng.normal();
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layer.bias), layer.out, 0.0);
    if (layer.hidden) std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layer.slopes), layer.out, 0.25);
  }
}

std::vector<double> NeuralNet::forward(std::span<const double> input) const {
  Tape tape;
  std::vector<double> out(arch_.output_dim);
  forward(input, tape, out);
  return out;
}

void NeuralNet::forward(std::span<const double> input, Tape& tape, std::span<double> output) const {
  if (input.size() != arch_.input_dim) throw DomainError("NeuralNet::forward: input width mismatch");
  if (output.size() != arch_.output_dim) throw DomainError("NeuralNet::forward: output width mismatch");
  tape.activations.resize(buffer_size_);
  tape.pre.resize(buffer_size_ - arch_.input_dim);
  std::copy(input.begin(), input.end(), tape.activations.begin());
  const double* p = params_.data();
  for (const auto& layer : layers_) {
    const double* x = tape.activations.data() + layer.in_offset;
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* w = p + layer.weights + o * layer.in;
      double z = p[layer.bias + o];
      for (std::size_t i = 0; i < layer.in; ++i) z += w[i] * x[i];
      if (layer.hidden) {
        tape.pre[layer.out_offset - arch_.input_dim + o] = z;
        tape.activations[layer.out_offset + o] = z > 0.0 ? z : p[layer.slopes + o] * z;
      } else {
        output[o] = z;
      }
    }
  }
}

void NeuralNet::backward(const Tape& tape, std::span<const double> grad_output, std::span<double> grad_params,
                         std::span<double> grad_input) const {
  if (grad_output.size() != arch_.output_dim) throw DomainError("NeuralNet::backward: output width mismatch");
  if (grad_params.size() != params_.size()) throw DomainError("NeuralNet::backward: gradient size mismatch");
  if (!grad_input.empty() && grad_input.size() != arch_.input_dim) {
    throw DomainError("NeuralNet::backward: input gradient width mismatch");
  }
  std::vector<double> grad_act(buffer_size_, 0.0);
  std::vector<double> grad_pre;
  const double* p = params_.data();
  double* g = grad_params.data();
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    const auto& layer = *it;
    std::span<const double> delta;
    if (layer.hidden) {
      grad_pre.resize(layer.out);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double z = tape.pre[layer.out_offset - arch_.input_dim + o];
        const double upstream = grad_act[layer.out_offset + o];
        if (z > 0.0) {
          grad_pre[o] = upstream;
        } else {
          grad_pre[o] = p[layer.slopes + o] * upstream;
          g[layer.slopes + o] += z * upstream;
        }
      }
      delta = grad_pre;
    } else {
      delta = grad_output;
    }
    const double* x = tape.activations.data() + layer.in_offset;
    double* gx = grad_act.data() + layer.in_offset;
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double d = delta[o];
      if (d == 0.0) continue;
      const double* w = p + layer.weights + o * layer.in;
      double* gw = g + layer.weights + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) {
        gw[i] += d * x[i];
        gx[i] += d * w[i];
      }
      g[layer.bias + o] += d;
    }
  }
  if (!grad_input.empty()) {
    std::copy_n(grad_act.begin(), arch_.input_dim, grad_input.begin());
  }
}

double& NeuralNet::output_weight(std::size_t to, std::size_t from) {
  const auto& layer = layers_.back();
  if (to >= layer.out || from < layer.in_offset || from - layer.in_offset >= layer.in) {
    throw DomainError("NeuralNet::output_weight: index out of range");
  }
  return params_[layer.weights + to * layer.in + (from - layer.in_offset)];
}

double& NeuralNet::output_bias(std::size_t to) {
  const auto& layer = layers_.back();
  if (to >= layer.out) throw DomainError("NeuralNet::output_bias: index out of range");
  return params_[layer.bias + to];
}

void TrainConfig::validate() const {
  if (!(step_size > 0.0)) throw DomainError("TrainConfig: step_size must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw DomainError("TrainConfig: momentum must lie in [0, 1)");
  if (epochs == 0) throw DomainError("TrainConfig: epochs must be positive");
  if (batch_size == 0) throw DomainError("TrainConfig: batch_size must be positive");
  if (tau_samples_per_example == 0) throw DomainError("TrainConfig: tau_samples_per_example must be positive");
  if (!(grad_clip >= 0.0)) throw DomainError("TrainConfig: grad_clip must be nonnegative");
  if (!(step_decay > 0.0 && step_decay <= 1.0)) throw DomainError("TrainConfig: step_decay must lie in (0, 1]");
}

TrainingLog train_sgd(NeuralNet& net, std::size_t n, const TrainConfig& config, const BatchLoss& batch_loss) {
  config.validate();
  if (n == 0) throw DomainError("train_sgd: no training examples");
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad(net.num_params());
  std::vector<double> velocity(net.num_params(), 0.0);
  auto params = net.params();
  TrainingLog log;
  std::vector<double> batch_losses;
  double step = config.step_size;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch, step *= config.step_decay) {
    rng.shuffle(std::span<std::size_t>(order));
    batch_losses.clear();
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = batch_loss(std::span<const std::size_t>(order).subspan(start, stop - start), epoch, grad);
      double norm2 = 0.0;
      for (double v : grad) norm2 += v * v;
      if (!std::isfinite(loss) || !std::isfinite(norm2)) {
        std::ostringstream msg;
        msg << "training diverged: epoch " << epoch << ", batch starting at " << start << ", loss " << loss
            << ", squared gradient norm " << norm2 << " (try a smaller step_size)";
        throw TrainingError(msg.str());
      }
      const double norm = std::sqrt(norm2);
      const double factor = config.grad_clip > 0.0 && norm > config.grad_clip ? config.grad_clip / norm : 1.0;
      for (std::size_t k = 0; k < params.size(); ++k) {
        velocity[k] = config.momentum * velocity[k] - step * factor * grad[k];
        params[k] += velocity[k];
      }
      batch_losses.push_back(loss);
    }
    auto mid = batch_losses.begin() + static_cast<std::ptrdiff_t>(batch_losses.size() / 2);
    std::nth_element(batch_losses.begin(), mid, batch_losses.end());
    log.epoch_loss.push_back(*mid);
  }
  return log;
}

namespace head {

double softplus(double s) { return s > 30.0 ? s : std::log1p(std::exp(s)); }

double sigmoid(double s) { return s >= 0.0 ? 1.0 / (1.0 + std::exp(-s)) : std::exp(s) / (1.0 + std::exp(s)); }

double gaussian_nll(std::span<const double> outputs, double y, std::span<double> grad) {
  const double mu = outputs[0];
  const double sigma = softplus(outputs[1]) + kSigmaFloor;
  const double r = (y - mu) / sigma;
  grad[0] = -r / sigma;
  grad[1] = (1.0 - r * r) / sigma * sigmoid(outputs[1]);
  return 0.5 * std::log(2.0 * M_PI) + std::log(sigma) + 0.5 * r * r;
}

void softmax(std::span<const double> logits, std::span<double> probs) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) total += probs[k] = std::exp(logits[k] - top);
  for (double& p : probs) p /= total;
}

double softmax_xent(std::span<const double> logits, std::size_t label, std::span<double> grad) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  const double log_norm = top + std::log(total);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    grad[k] = std::exp(logits[k] - log_norm) - (k == label ? 1.0 : 0.0);
  }
  return log_norm - logits[label];
}

}  // namespace head

}  // namespace calibrax
