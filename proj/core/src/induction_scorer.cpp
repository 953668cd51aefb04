#include "inductlab/induction_scorer.hpp"

#include <cmath>
#include <ostream>

#include "inductlab/parallel.hpp"
#include "inductlab/report.hpp"
#include "inductlab/rng.hpp"

namespace inductlab {

Tokens build_repeat_prompt(std::size_t source_len, std::size_t vocab_size, std::uint64_t seed) {
  if (source_len < 2) throw InvalidArgument("build_repeat_prompt: N must be at least 2");
  if (source_len > vocab_size) {
    throw InvalidArgument("build_repeat_prompt: N=" + std::to_string(source_len) +
                          " exceeds vocab_size " + std::to_string(vocab_size) +
                          " with distinct tokens");
  }
  Rng rng(seed);
  const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(vocab_size),
                                                    static_cast<std::uint32_t>(source_len));
  Tokens prompt(picks.begin(), picks.end());
  prompt.insert(prompt.end(), picks.begin(), picks.end());
  return prompt;
}

LagScore lag_k_score(const AttentionTrace& trace, std::size_t source_len, long k) {
  const auto N = static_cast<long>(source_len);
  if (source_len < 2) throw InvalidArgument("lag_k_score: N must be at least 2");
  if (trace.length() != 2 * source_len) {
    throw InvalidArgument("lag_k_score: trace length " + std::to_string(trace.length()) +
                          " does not equal 2N = " + std::to_string(2 * source_len));
  }
  if (k <= -N || k >= N) {
    throw InvalidArgument("lag_k_score: k=" + std::to_string(k) + " outside (-N, N)");
  }
  LagScore out;
  out.map = ScoreMap(trace.n_layers(), trace.n_heads());
  out.map.source_len = source_len;
  out.map.trials = 1;
  std::vector<long> rows;
  for (long i = N; i <= 2 * N - 2; ++i) {
    const long col = i - N + k;
    if (col < 0 || col > i) {
      ++out.rows_skipped;
    } else {
      rows.push_back(i);
    }
  }
  out.rows_used = rows.size();
  if (rows.empty()) return out;
  for (std::size_t flat = 0; flat < out.map.size(); ++flat) {
    const Matrix& a = trace.at(out.map.head(flat));
    double sum = 0.0;
    for (long i : rows) {
      sum += a(static_cast<std::size_t>(i), static_cast<std::size_t>(i - N + k));
    }
    out.map.scores[flat] = sum / static_cast<double>(rows.size());
  }
  return out;
}

ScoreMap induction_score(const AttentionTrace& trace, std::size_t source_len) {
  return lag_k_score(trace, source_len, 1).map;
}

ScoreMap score_all_heads(const Checkpoint& ckpt, std::size_t source_len, std::size_t trials,
                         std::uint64_t seed, std::size_t workers) {
  if (trials == 0) throw InvalidArgument("score_all_heads: trials must be positive");
  if (2 * source_len > ckpt.config.max_seq) {
    throw InvalidArgument("score_all_heads: 2N=" + std::to_string(2 * source_len) +
                          " exceeds max_seq " + std::to_string(ckpt.config.max_seq));
  }
  std::vector<ScoreMap> per_trial(trials);
  parallel_for(trials, workers, [&](std::size_t t) {
    const Tokens prompt = build_repeat_prompt(source_len, ckpt.config.vocab_size,
                                              derive_seed(seed, streams::kScorerPrompt, t));
    const auto result = forward(ckpt, prompt, {}, true);
    per_trial[t] = induction_score(*result.trace, source_len);
  });
  if (trials == 1) {
    ScoreMap single = std::move(per_trial.front());
    single.seed = seed;
    return single;
  }
  ScoreMap avg(ckpt.config.n_layers, ckpt.config.n_heads);
  for (const auto& m : per_trial) {
    for (std::size_t i = 0; i < avg.size(); ++i) avg.scores[i] += m.scores[i];
  }
  for (double& s : avg.scores) s /= static_cast<double>(trials);
  avg.source_len = source_len;
  avg.trials = trials;
  avg.seed = seed;
  return avg;
}

ScoreSummary summarize(const ScoreMap& map) {
  ScoreSummary s;
  if (map.scores.empty()) return s;
  const double n = static_cast<double>(map.scores.size());
  for (double v : map.scores) s.mean += v;
  s.mean /= n;
  double var = 0.0;
  for (double v : map.scores) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  return s;
}

ScoreMap score_delta(const ScoreMap& a, const ScoreMap& b) {
  if (a.n_layers != b.n_layers || a.n_heads != b.n_heads) {
    throw InvalidArgument("score_delta: head sets differ");
  }
  if (a.source_len != b.source_len) throw InvalidArgument("score_delta: N differs");
  ScoreMap d = a;
  for (std::size_t i = 0; i < d.size(); ++i) d.scores[i] = a.scores[i] - b.scores[i];
  return d;
}

void write_score_csv(std::ostream& out, const ScoreMap& map) {
  out << "layer,head,score\n";
  for (std::size_t i = 0; i < map.size(); ++i) {
    const HeadId id = map.head(i);
    out << id.layer << ',' << id.head << ',' << format_number(map.scores[i]) << '\n';
  }
}

void write_heatmap_csv(std::ostream& out, const ScoreMap& map) {
  out << "layer";
  for (std::size_t h = 0; h < map.n_heads; ++h) out << ",h" << h;
  out << '\n';
  for (std::size_t l = 0; l < map.n_layers; ++l) {
    out << l;
    for (std::size_t h = 0; h < map.n_heads; ++h) out << ',' << format_number(map.at({l, h}));
    out << '\n';
  }
}

}  // namespace inductlab
