#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "calibrax/rng.hpp"

namespace calibrax {

/// Fully connected network: hidden layers use PReLU with a learned slope per
/// unit, the output layer is affine. With dense_skip every layer (including
/// the output) sees the input and all earlier hidden activations.
struct NetArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 0;
  bool dense_skip = true;

  bool operator==(const NetArch&) const = default;
};

class NeuralNet {
 public:
  struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t in_offset = 0;   // first activation-buffer slot read
    std::size_t out_offset = 0;  // first activation-buffer slot written (hidden only)
    std::size_t weights = 0;     // parameter offsets
    std::size_t bias = 0;
    std::size_t slopes = 0;
    bool hidden = false;
  };

  /// Intermediate values kept for the backward pass.
  struct Tape {
    std::vector<double> activations;  // [input | hidden_0 | hidden_1 | ...]
    std::vector<double> pre;          // hidden pre-activations, same layout minus the input block
  };

  NeuralNet() = default;
  explicit NeuralNet(NetArch arch);

  const NetArch& arch() const { return arch_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  /// He-normal weights, zero biases, PReLU slopes 0.25.
  void init(Rng& rng);

  std::vector<double> forward(std::span<const double> input) const;
  void forward(std::span<const double> input, Tape& tape, std::span<double> output) const;

  /// Adds d(loss)/d(params) to grad_params given d(loss)/d(output). When
  /// grad_input is nonempty it receives d(loss)/d(input).
  void backward(const Tape& tape, std::span<const double> grad_output, std::span<double> grad_params,
                std::span<double> grad_input = {}) const;

  /// Weight of the output layer connecting input coordinate `from` to output `to`.
  double& output_weight(std::size_t to, std::size_t from);
  double& output_bias(std::size_t to);

 private:
  NetArch arch_;
  std::vector<Layer> layers_;
  std::vector<double> params_;
  std::size_t buffer_size_ = 0;
};

struct TrainConfig {
  double step_size = 1e-2;
  double momentum = 0.9;
  std::size_t epochs = 20;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::size_t tau_samples_per_example = 8;
  /// Gradient norm clip applied per batch; 0 disables.
  double grad_clip = 10.0;
  /// Step size in epoch e is step_size * step_decay^e.
  double step_decay = 0.85;

  void validate() const;
};

struct TrainingLog {
  /// Median of the mini-batch losses of each epoch.
  std::vector<double> epoch_loss;
};

/// Mean loss over a batch of example indices; adds the gradient of that mean
/// loss into grad (sized num_params).
using BatchLoss = std::function<double(std::span<const std::size_t> batch, std::size_t epoch, std::span<double> grad)>;

/// Mini-batch gradient descent with momentum over n examples, reshuffled each
/// epoch. Throws TrainingError if a batch loss or gradient is non-finite.
TrainingLog train_sgd(NeuralNet& net, std::size_t n, const TrainConfig& config, const BatchLoss& batch_loss);

// Output heads: each returns the loss for one example and writes its gradient
// with respect to the network outputs.
namespace head {

inline constexpr double kSigmaFloor = 1e-3;

double softplus(double s);
double sigmoid(double s);

/// outputs = (mu, s), sigma = softplus(s) + kSigmaFloor; negative log density.
double gaussian_nll(std::span<const double> outputs, double y, std::span<double> grad);

/// Cross-entropy of softmax(logits) at label.
double softmax_xent(std::span<const double> logits, std::size_t label, std::span<double> grad);

void softmax(std::span<const double> logits, std::span<double> probs);

}  // namespace head

}  // namespace calibrax
