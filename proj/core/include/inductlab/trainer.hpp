#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inductlab/transformer.hpp"

namespace inductlab {

// Training setup for small attention-only models on repeated sequences.
// Defaults grow induction heads in well under a minute on one core.
struct TrainSpec {
  ModelConfig model;  // attention-only, learned-additive, no norm
  std::size_t half_len = 32;
  std::size_t steps = 1500;
  std::size_t batch = 8;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> loss_curve;  // mean second-half cross-entropy per step
};

// Double-precision attention-only transformer with hand-written reverse-mode
// gradients. All parameters live in one flat vector so finite differences and
// the optimizer can treat them uniformly.
class ToyTransformer {
 public:
  struct Param {
    std::string name;  // checkpoint tensor name
    std::size_t rows, cols, offset;
  };

  ToyTransformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<Param>& params() const { return params_; }
  std::vector<double>& theta() { return theta_; }
  const std::vector<double>& theta() const { return theta_; }

  // Mean cross-entropy of predicting positions half_len..2*half_len-1 of each
  // row from the tokens before them.
  double loss(const std::vector<Tokens>& batch, std::size_t half_len) const;
  // Same loss; `grad` is resized to theta().size() and overwritten.
  double loss_and_grad(const std::vector<Tokens>& batch, std::size_t half_len,
                       std::vector<double>& grad) const;

  Checkpoint to_checkpoint() const;

 private:
  double run(const std::vector<Tokens>& batch, std::size_t half_len, std::vector<double>* grad) const;

  ModelConfig config_;
  std::vector<Param> params_;
  std::vector<double> theta_;
};

// Adam on synth_repeated_batch data. Throws std::runtime_error naming the
// step if the loss becomes non-finite.
TrainResult train_toy(const TrainSpec& spec);

}  // namespace inductlab
