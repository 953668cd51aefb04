#include "inductlab/recall_probe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "inductlab/parallel.hpp"
#include "inductlab/report.hpp"
#include "inductlab/rng.hpp"
#include "json.hpp"

namespace inductlab {

namespace {

// Neumaier's variant of Kahan summation.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + comp; }
};

}  // namespace

ProbeConfig ProbeConfig::with_pool(std::size_t pool_size, std::size_t repeat_index,
                                   std::size_t permutations, std::uint64_t seed) {
  ProbeConfig cfg;
  cfg.pool.resize(pool_size);
  std::iota(cfg.pool.begin(), cfg.pool.end(), TokenId{0});
  cfg.repeat_index = repeat_index;
  cfg.permutations = permutations;
  cfg.seed = seed;
  return cfg;
}

void ProbeConfig::validate(const ModelConfig& model) const {
  if (pool.empty()) throw InvalidArgument("ProbeConfig: empty pool");
  if (repeat_index >= pool.size()) {
    throw InvalidArgument("ProbeConfig: repeat_index must be below the pool size");
  }
  if (permutations == 0) throw InvalidArgument("ProbeConfig: permutations must be positive");
  if (std::set<TokenId>(pool.begin(), pool.end()).size() != pool.size()) {
    throw InvalidArgument("ProbeConfig: pool entries must be distinct");
  }
  for (TokenId t : pool) {
    if (t >= model.vocab_size) throw InvalidArgument("ProbeConfig: pool token outside vocabulary");
  }
  if (pool.size() + 1 > model.max_seq) {
    throw InvalidArgument("ProbeConfig: P+1 exceeds the model's max_seq");
  }
}

ProbePrompt build_probe_prompt_from_order(const std::vector<TokenId>& order,
                                          std::size_t repeat_index) {
  if (repeat_index >= order.size()) throw InvalidArgument("probe prompt: repeat index out of range");
  ProbePrompt p;
  p.tokens = order;
  p.cue = order[repeat_index];
  p.tokens.push_back(p.cue);
  p.lags.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    p.lags.emplace_back(order[i], static_cast<long>(i) - static_cast<long>(repeat_index));
  }
  return p;
}

ProbePrompt build_probe_prompt(const ProbeConfig& cfg, std::size_t perm_index) {
  std::vector<TokenId> order = cfg.pool;
  Rng rng(derive_seed(cfg.seed, streams::kProbePermutation, perm_index));
  rng.shuffle(std::span<TokenId>(order));
  return build_probe_prompt_from_order(order, cfg.repeat_index);
}

LagCurve reduce_lag_rows(const std::vector<std::vector<float>>& rows, std::size_t repeat_index) {
  if (rows.empty()) throw InvalidArgument("reduce_lag_rows: no permutations");
  const std::size_t P = rows.front().size();
  if (repeat_index >= P) throw InvalidArgument("reduce_lag_rows: repeat index out of range");
  std::vector<CompensatedSum> acc(P);
  for (const auto& row : rows) {
    if (row.size() != P) throw InvalidArgument("reduce_lag_rows: ragged rows");
    for (std::size_t i = 0; i < P; ++i) acc[i].add(row[i]);
  }
  LagCurve c;
  c.min_lag = -static_cast<long>(repeat_index);
  c.max_lag = static_cast<long>(P) - 1 - static_cast<long>(repeat_index);
  c.mean.resize(P);
  c.count.assign(P, rows.size());
  for (std::size_t i = 0; i < P; ++i) c.mean[i] = acc[i].value() / static_cast<double>(rows.size());
  c.pool_size = P;
  c.repeat_index = repeat_index;
  c.permutations = rows.size();
  return c;
}

LagCurve lag_curve(const Checkpoint& ckpt, const ProbeConfig& cfg, const InterventionPlan& plan,
                   std::size_t workers) {
  cfg.validate(ckpt.config);
  plan.validate(ckpt.config);
  const std::size_t P = cfg.pool_size();
  std::vector<std::vector<float>> rows(cfg.permutations);
  parallel_for(cfg.permutations, workers, [&](std::size_t m) {
    const ProbePrompt prompt = build_probe_prompt(cfg, cfg.first_permutation + m);
    const auto probs = next_token_distribution(ckpt, prompt.tokens, plan);
    auto& row = rows[m];
    row.resize(P);
    double total = 0.0;
    // Lags index positions; position i holds lag i - r, so store by position.
    for (std::size_t i = 0; i < P; ++i) {
      row[i] = probs[prompt.lags[i].first];
      total += row[i];
    }
    // Distinct tokens of one distribution cannot carry more than unit mass.
    if (total > 1.0 + 1e-5) {
      throw std::logic_error("lag_curve: per-permutation lag mass " + std::to_string(total) + " > 1");
    }
  });
  LagCurve curve = reduce_lag_rows(rows, cfg.repeat_index);
  curve.first_permutation = cfg.first_permutation;
  curve.seed = cfg.seed;
  return curve;
}

CurveStats curve_stats(const LagCurve& curve) {
  if (curve.mean.empty()) throw InvalidArgument("curve_stats: empty curve");
  CurveStats s;
  if (curve.has(1)) s.p_lag1 = curve.at(1);
  if (curve.has(0)) s.p_lag0 = curve.at(0);

  long best = curve.min_lag;
  for (long lag = curve.min_lag; lag <= curve.max_lag; ++lag) {
    const double v = curve.at(lag), bv = curve.at(best);
    const bool better = v > bv || (v == bv && (std::labs(lag) < std::labs(best) ||
                                               (std::labs(lag) == std::labs(best) && lag > best)));
    if (better) best = lag;
  }
  s.peak_lag = best;

  const long widest = std::max(std::labs(curve.min_lag), std::labs(curve.max_lag));
  long window = 10;
  std::vector<double> pool;
  while (true) {
    pool.clear();
    for (long lag = curve.min_lag; lag <= curve.max_lag; ++lag) {
      if (lag != 0 && std::labs(lag) >= window) pool.push_back(curve.at(lag));
    }
    if (!pool.empty() || window <= 1 || widest == 0) break;
    window = std::min(window - 1, widest);
    s.window_shrunk = true;
  }
  s.baseline_window = window;
  if (pool.empty()) {
    // Single-lag curve: nothing but the cue itself.
    s.baseline = curve.at(0);
  } else {
    std::sort(pool.begin(), pool.end());
    const std::size_t n = pool.size();
    s.baseline = n % 2 == 1 ? pool[n / 2] : 0.5 * (pool[n / 2 - 1] + pool[n / 2]);
  }

  double sum = 0.0;
  for (long lag = curve.max_lag; lag >= curve.min_lag && s.recency_lags < 10; --lag) {
    if (lag == 0) continue;
    sum += curve.at(lag);
    ++s.recency_lags;
  }
  if (s.recency_lags > 0 && s.baseline > 0.0) {
    s.recency_index = (sum / static_cast<double>(s.recency_lags)) / s.baseline;
  }
  return s;
}

Metrics lag_metrics(const CurveStats& s) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  return {{"p_lag1", s.p_lag1.value_or(nan)},
          {"p_lag0", s.p_lag0.value_or(nan)},
          {"baseline", s.baseline},
          {"peak_lag", static_cast<double>(s.peak_lag)},
          {"recency_index", s.recency_index.value_or(nan)}};
}

Probe make_lag_probe(const Checkpoint& ckpt, const ProbeConfig& cfg, std::size_t workers) {
  return [&ckpt, cfg, workers](const InterventionPlan& plan) {
    return lag_metrics(curve_stats(lag_curve(ckpt, cfg, plan, workers)));
  };
}

void write_curve_csv(std::ostream& out, const LagCurve& curve) {
  out << "lag,mean_probability,n\n";
  for (long lag = curve.min_lag; lag <= curve.max_lag; ++lag) {
    const auto i = static_cast<std::size_t>(lag - curve.min_lag);
    out << lag << ',' << format_number(curve.mean[i]) << ',' << curve.count[i] << '\n';
  }
}

std::string stats_to_json(const CurveStats& s) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json j = {{"p_lag1", opt(s.p_lag1)},
            {"p_lag0", opt(s.p_lag0)},
            {"baseline", s.baseline},
            {"peak_lag", s.peak_lag},
            {"recency_index", opt(s.recency_index)},
            {"baseline_window", s.baseline_window},
            {"window_shrunk", s.window_shrunk},
            {"recency_lags", s.recency_lags}};
  if (s.p_lag1 && s.baseline > 0.0) {
    j["lag1_over_baseline"] = *s.p_lag1 / s.baseline;
  } else {
    j["lag1_over_baseline"] = nullptr;
  }
  return j.dump(2);
}

}  // namespace inductlab
