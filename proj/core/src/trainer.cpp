#include "inductlab/trainer.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "inductlab/model_factory.hpp"
#include "inductlab/rng.hpp"

namespace inductlab {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Mat>;
using MapM = Eigen::Map<Mat>;

struct HeadCache {
  Mat q, k, v, attn, z;
};

}  // namespace

void TrainSpec::validate() const {
  model.validate();
  if (!model.attention_only || model.norm_kind != NormKind::kNone ||
      model.positional_kind != PositionalKind::kLearnedAdditive) {
    throw InvalidArgument("TrainSpec: trainer supports attention-only, learned-additive, no-norm models");
  }
  if (half_len == 0 || steps == 0 || batch == 0) {
    throw InvalidArgument("TrainSpec: half_len, steps and batch must be positive");
  }
  if (2 * half_len > model.max_seq) throw InvalidArgument("TrainSpec: 2*half_len exceeds max_seq");
  if (half_len > model.vocab_size) throw InvalidArgument("TrainSpec: half_len exceeds vocab_size");
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainSpec: learning_rate must be positive");
}

ToyTransformer::ToyTransformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  if (!config_.attention_only || config_.norm_kind != NormKind::kNone ||
      config_.positional_kind != PositionalKind::kLearnedAdditive) {
    throw InvalidArgument("ToyTransformer: attention-only, learned-additive, no-norm models only");
  }
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t r, std::size_t c) {
    params_.push_back({std::move(name), r, c, offset});
    offset += r * c;
  };
  const auto& c = config_;
  add("tok_embedding", c.vocab_size, c.d_model);
  add("pos_embedding", c.max_seq, c.d_model);
  add("unembedding", c.d_model, c.vocab_size);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::string p = "layers." + std::to_string(l) + ".heads." + std::to_string(h);
      add(p + ".query", c.d_model, c.d_head);
      add(p + ".key", c.d_model, c.d_head);
      add(p + ".value", c.d_model, c.d_head);
      add(p + ".output", c.d_head, c.d_model);
    }
  }
  theta_.resize(offset);
  Rng rng(derive_seed(seed, streams::kWeights, 0));
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  for (double& w : theta_) w = rng.normal() * scale;
}

double ToyTransformer::loss(const std::vector<Tokens>& batch, std::size_t half_len) const {
  return run(batch, half_len, nullptr);
}

double ToyTransformer::loss_and_grad(const std::vector<Tokens>& batch, std::size_t half_len,
                                     std::vector<double>& grad) const {
  grad.assign(theta_.size(), 0.0);
  return run(batch, half_len, &grad);
}

double ToyTransformer::run(const std::vector<Tokens>& batch, std::size_t half_len,
                           std::vector<double>* grad) const {
  const auto& c = config_;
  const std::size_t T = 2 * half_len;
  if (T > c.max_seq) throw InvalidArgument("ToyTransformer: sequence exceeds max_seq");
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.d_head));
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto vocab = static_cast<Eigen::Index>(c.vocab_size);
  const auto Ti = static_cast<Eigen::Index>(T);

  auto view = [&](std::size_t idx) {
    const auto& p = params_[idx];
    return MapC(theta_.data() + p.offset, static_cast<Eigen::Index>(p.rows),
                static_cast<Eigen::Index>(p.cols));
  };
  auto gview = [&](std::size_t idx) {
    const auto& p = params_[idx];
    return MapM(grad->data() + p.offset, static_cast<Eigen::Index>(p.rows),
                static_cast<Eigen::Index>(p.cols));
  };
  auto head_param = [&](std::size_t l, std::size_t h, std::size_t which) {
    return 3 + (l * c.n_heads + h) * 4 + which;
  };

  const MapC E = view(0), P = view(1), U = view(2);
  const double n_targets = static_cast<double>(batch.size() * half_len);
  double total = 0.0;

  for (const auto& row : batch) {
    if (row.size() != T) throw InvalidArgument("ToyTransformer: row length must be 2*half_len");
    std::vector<Mat> X(c.n_layers + 1);
    X[0].resize(Ti, d);
    for (std::size_t t = 0; t < T; ++t) {
      if (row[t] >= c.vocab_size) throw InvalidArgument("ToyTransformer: token out of range");
      X[0].row(static_cast<Eigen::Index>(t)) =
          E.row(row[t]) + P.row(static_cast<Eigen::Index>(t));
    }
    std::vector<std::vector<HeadCache>> cache(c.n_layers, std::vector<HeadCache>(c.n_heads));
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      X[l + 1] = X[l];
      for (std::size_t h = 0; h < c.n_heads; ++h) {
        auto& hc = cache[l][h];
        hc.q = X[l] * view(head_param(l, h, 0));
        hc.k = X[l] * view(head_param(l, h, 1));
        hc.v = X[l] * view(head_param(l, h, 2));
        Mat s = (hc.q * hc.k.transpose()) * scale;
        hc.attn = Mat::Zero(Ti, Ti);
        for (Eigen::Index i = 0; i < Ti; ++i) {
          const double mx = s.row(i).head(i + 1).maxCoeff();
          double sum = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            hc.attn(i, j) = std::exp(s(i, j) - mx);
            sum += hc.attn(i, j);
          }
          hc.attn.row(i).head(i + 1) /= sum;
        }
        hc.z = hc.attn * hc.v;
        X[l + 1] += hc.z * view(head_param(l, h, 3));
      }
    }

    const auto first = static_cast<Eigen::Index>(half_len - 1);
    const auto count = static_cast<Eigen::Index>(half_len);
    Mat logits = X[c.n_layers].middleRows(first, count) * U;
    Mat dlogits(count, vocab);
    for (Eigen::Index r = 0; r < count; ++r) {
      const double mx = logits.row(r).maxCoeff();
      Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
      const double z = e.sum();
      const TokenId target = row[static_cast<std::size_t>(first + r + 1)];
      total += -(logits(r, target) - mx - std::log(z));
      if (grad) {
        dlogits.row(r) = e / z;
        dlogits(r, target) -= 1.0;
      }
    }
    if (!grad) continue;
    dlogits /= n_targets;

    gview(2) += X[c.n_layers].middleRows(first, count).transpose() * dlogits;
    Mat dX = Mat::Zero(Ti, d);
    dX.middleRows(first, count) = dlogits * U.transpose();

    for (std::size_t l = c.n_layers; l-- > 0;) {
      Mat dX_in = dX;  // residual path
      for (std::size_t h = 0; h < c.n_heads; ++h) {
        const auto& hc = cache[l][h];
        const MapC Wq = view(head_param(l, h, 0));
        const MapC Wk = view(head_param(l, h, 1));
        const MapC Wv = view(head_param(l, h, 2));
        const MapC Wo = view(head_param(l, h, 3));
        gview(head_param(l, h, 3)) += hc.z.transpose() * dX;
        const Mat dz = dX * Wo.transpose();
        const Mat dattn = dz * hc.v.transpose();
        const Mat dv = hc.attn.transpose() * dz;
        Mat ds = Mat::Zero(Ti, Ti);
        for (Eigen::Index i = 0; i < Ti; ++i) {
          const double dot = hc.attn.row(i).head(i + 1).dot(dattn.row(i).head(i + 1));
          for (Eigen::Index j = 0; j <= i; ++j) ds(i, j) = hc.attn(i, j) * (dattn(i, j) - dot);
        }
        ds *= scale;
        const Mat dq = ds * hc.k;
        const Mat dk = ds.transpose() * hc.q;
        gview(head_param(l, h, 0)) += X[l].transpose() * dq;
        gview(head_param(l, h, 1)) += X[l].transpose() * dk;
        gview(head_param(l, h, 2)) += X[l].transpose() * dv;
        dX_in += dq * Wq.transpose() + dk * Wk.transpose() + dv * Wv.transpose();
      }
      dX = std::move(dX_in);
    }
    MapM dE = gview(0);
    MapM dP = gview(1);
    for (std::size_t t = 0; t < T; ++t) {
      const auto ti = static_cast<Eigen::Index>(t);
      dE.row(row[t]) += dX.row(ti);
      dP.row(ti) += dX.row(ti);
    }
  }
  return total / n_targets;
}

Checkpoint ToyTransformer::to_checkpoint() const {
  Checkpoint ckpt = Checkpoint::allocate(config_);
  auto refs = named_tensors(ckpt);
  for (const auto& p : params_) {
    for (auto& ref : refs) {
      if (ref.name != p.name) continue;
      for (std::size_t i = 0; i < ref.data.size(); ++i) {
        ref.data[i] = static_cast<float>(theta_[p.offset + i]);
      }
    }
  }
  ckpt.validate();
  return ckpt;
}

TrainResult train_toy(const TrainSpec& spec) {
  spec.validate();
  ToyTransformer model(spec.model, spec.seed);
  auto& theta = model.theta();
  std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0), grad;
  TrainResult result;
  result.loss_curve.reserve(spec.steps);
  double b1t = 1.0, b2t = 1.0;
  for (std::size_t step = 0; step < spec.steps; ++step) {
    const auto batch = synth_repeated_batch(spec.model.vocab_size, spec.half_len, spec.batch,
                                            derive_seed(spec.seed, streams::kBatches, step));
    const double loss = model.loss_and_grad(batch, spec.half_len, grad);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("train_toy: loss diverged at step " + std::to_string(step));
    }
    result.loss_curve.push_back(loss);
    b1t *= spec.beta1;
    b2t *= spec.beta2;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = spec.beta1 * m[i] + (1.0 - spec.beta1) * grad[i];
      v[i] = spec.beta2 * v[i] + (1.0 - spec.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      theta[i] -= spec.learning_rate * mhat / (std::sqrt(vhat) + spec.adam_eps);
    }
  }
  result.checkpoint = model.to_checkpoint();
  return result;
}

}  // namespace inductlab
