#include "inductlab/serial_recall.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "inductlab/parallel.hpp"
#include "inductlab/report.hpp"
#include "inductlab/rng.hpp"
#include "json.hpp"

namespace inductlab {

IclConfig IclConfig::standard(std::size_t alphabet_size, std::size_t list_len,
                              std::size_t n_lists, std::size_t n_prompts, std::uint64_t seed) {
  IclConfig cfg;
  cfg.alphabet.resize(alphabet_size);
  std::iota(cfg.alphabet.begin(), cfg.alphabet.end(), TokenId{3});
  cfg.list_len = list_len;
  cfg.n_lists = n_lists;
  cfg.n_prompts = n_prompts;
  cfg.seed = seed;
  return cfg;
}

void IclConfig::validate() const {
  if (markers.bos == markers.study || markers.bos == markers.recall ||
      markers.study == markers.recall) {
    throw InvalidArgument("IclConfig: marker ids must be distinct");
  }
  if (list_len == 0) throw InvalidArgument("IclConfig: list_len must be positive");
  if (n_lists == 0) throw InvalidArgument("IclConfig: n_lists must be positive");
  if (n_prompts == 0) throw InvalidArgument("IclConfig: n_prompts must be positive");
  if (std::set<TokenId>(alphabet.begin(), alphabet.end()).size() != alphabet.size()) {
    throw InvalidArgument("IclConfig: alphabet entries must be distinct");
  }
  if (list_len > alphabet.size()) {
    throw InvalidArgument("IclConfig: list_len " + std::to_string(list_len) +
                          " exceeds alphabet size " + std::to_string(alphabet.size()));
  }
  for (TokenId t : alphabet) {
    if (markers.contains(t)) throw InvalidArgument("IclConfig: alphabet overlaps the markers");
  }
}

void IclConfig::validate(const ModelConfig& model) const {
  validate();
  for (TokenId t : alphabet) {
    if (t >= model.vocab_size) throw InvalidArgument("IclConfig: alphabet token outside vocabulary");
  }
  for (TokenId t : {markers.bos, markers.study, markers.recall}) {
    if (t >= model.vocab_size) throw InvalidArgument("IclConfig: marker outside vocabulary");
  }
  // run_recall generates L+1 tokens.
  if (prompt_length() + list_len + 1 > model.max_seq) {
    throw InvalidArgument("IclConfig: prompt of " + std::to_string(prompt_length()) +
                          " tokens plus recall exceeds max_seq " + std::to_string(model.max_seq));
  }
}

std::size_t IclConfig::prompt_length() const { return (2 * n_lists - 1) * (list_len + 2) + 1; }

std::vector<StudyList> draw_lists(const IclConfig& cfg, std::size_t index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, streams::kIclPrompt, index));
  std::vector<StudyList> lists(cfg.n_lists);
  for (auto& list : lists) {
    const auto picks = rng.sample_without_replacement(static_cast<std::uint32_t>(cfg.alphabet.size()),
                                                      static_cast<std::uint32_t>(cfg.list_len));
    list.reserve(picks.size());
    for (auto p : picks) list.push_back(cfg.alphabet[p]);
  }
  return lists;
}

Tokens build_fewshot_prompt(const std::vector<StudyList>& lists, const Markers& markers) {
  if (lists.empty()) throw InvalidArgument("build_fewshot_prompt: no lists");
  for (const auto& list : lists) {
    if (list.empty()) throw InvalidArgument("build_fewshot_prompt: empty list");
    if (list.size() != lists.front().size()) {
      throw InvalidArgument("build_fewshot_prompt: lists must share one length");
    }
    if (std::set<TokenId>(list.begin(), list.end()).size() != list.size()) {
      throw InvalidArgument("build_fewshot_prompt: list items must be distinct");
    }
    for (TokenId t : list) {
      if (markers.contains(t)) {
        throw InvalidArgument("build_fewshot_prompt: item " + std::to_string(t) +
                              " collides with a marker id");
      }
    }
  }
  Tokens out;
  for (std::size_t i = 0; i < lists.size(); ++i) {
    out.push_back(markers.bos);
    out.push_back(markers.study);
    out.insert(out.end(), lists[i].begin(), lists[i].end());
    if (i + 1 < lists.size()) {
      out.push_back(markers.bos);
      out.push_back(markers.recall);
      out.insert(out.end(), lists[i].begin(), lists[i].end());
    }
  }
  out.push_back(markers.bos);
  return out;
}

std::vector<StudyList> parse_fewshot_prompt(const Tokens& prompt, const Markers& markers) {
  auto fail = [](const std::string& why) -> void {
    throw InvalidArgument("parse_fewshot_prompt: " + why);
  };
  // Split into segments on <bos>; the trailing <bos> leaves an empty tail.
  if (prompt.empty() || prompt.front() != markers.bos || prompt.back() != markers.bos) {
    fail("prompt must start and end with <bos>");
  }
  std::vector<Tokens> segments;
  for (std::size_t i = 1; i < prompt.size(); ++i) {
    if (prompt[i - 1] == markers.bos) segments.emplace_back();
    if (prompt[i] != markers.bos) segments.back().push_back(prompt[i]);
    else if (prompt[i - 1] == markers.bos) fail("empty segment");
  }
  if (segments.size() % 2 == 0) fail("expected an odd number of segments");
  std::vector<StudyList> lists;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Tokens& seg = segments[s];
    const bool is_study = s % 2 == 0;
    if (seg.size() < 2) fail("segment without items");
    if (seg.front() != (is_study ? markers.study : markers.recall)) {
      fail("segments must alternate study and recall");
    }
    StudyList items(seg.begin() + 1, seg.end());
    for (TokenId t : items) {
      if (markers.contains(t)) fail("marker inside a list");
    }
    if (is_study) {
      lists.push_back(std::move(items));
    } else if (items != lists.back()) {
      fail("recall segment differs from its study list");
    }
  }
  // Round-trip guard: rejects anything the builder would not emit.
  if (build_fewshot_prompt(lists, markers) != prompt) fail("not a builder prompt");
  return lists;
}

double RecallTranscript::accuracy() const {
  if (correct.empty()) return 0.0;
  const auto hits = std::count(correct.begin(), correct.end(), true);
  return static_cast<double>(hits) / static_cast<double>(correct.size());
}

RecallTranscript score_transcript(const StudyList& target, const Tokens& output) {
  if (output.size() != target.size()) {
    throw InvalidArgument("score_transcript: output length must equal the list length");
  }
  RecallTranscript t{target, output, std::vector<bool>(target.size())};
  for (std::size_t j = 0; j < target.size(); ++j) t.correct[j] = output[j] == target[j];
  return t;
}

RecallTranscript run_recall(const Checkpoint& ckpt, const Tokens& prompt, const StudyList& target,
                            const InterventionPlan& plan, const Markers& markers) {
  if (target.empty()) throw InvalidArgument("run_recall: empty target");
  const std::size_t L = target.size();
  const Tokens generated = greedy_generate(ckpt, prompt, L + 1, plan);
  const std::size_t skip = markers.contains(generated.front()) ? 1 : 0;
  const Tokens output(generated.begin() + static_cast<long>(skip),
                      generated.begin() + static_cast<long>(skip + L));
  return score_transcript(target, output);
}

std::optional<double> CRPResult::at(long lag) const {
  const auto it = probability.find(lag);
  if (it == probability.end()) return std::nullopt;
  return it->second;
}

CRPResult crp(const std::vector<RecallTranscript>& transcripts) {
  if (transcripts.empty()) throw InvalidArgument("crp: no transcripts");
  CRPResult r;
  r.list_len = transcripts.front().target.size();
  for (const auto& t : transcripts) {
    if (t.target.size() != r.list_len) throw InvalidArgument("crp: mixed list lengths");
    const long L = static_cast<long>(t.target.size());
    std::vector<bool> recalled(t.target.size(), false);
    long prev = -1;  // -1: no chain
    for (TokenId tok : t.output) {
      const auto it = std::find(t.target.begin(), t.target.end(), tok);
      const long pos = it == t.target.end() ? -1 : static_cast<long>(it - t.target.begin());
      if (pos < 0 || recalled[static_cast<std::size_t>(pos)]) {
        prev = -1;
        continue;
      }
      if (prev >= 0) {
        for (long q = 0; q < L; ++q) {
          if (q != prev && !recalled[static_cast<std::size_t>(q)]) ++r.available[q - prev];
        }
        ++r.transitions[pos - prev];
      }
      recalled[static_cast<std::size_t>(pos)] = true;
      prev = pos;
    }
  }
  for (const auto& [lag, avail] : r.available) {
    const auto it = r.transitions.find(lag);
    const std::size_t n = it == r.transitions.end() ? 0 : it->second;
    r.probability[lag] = static_cast<double>(n) / static_cast<double>(avail);
    r.transitions[lag] = n;
  }
  return r;
}

SPCResult spc(const std::vector<RecallTranscript>& transcripts) {
  if (transcripts.empty()) throw InvalidArgument("spc: no transcripts");
  const std::size_t L = transcripts.front().target.size();
  SPCResult r{std::vector<double>(L, 0.0), std::vector<double>(L, 0.0)};
  for (const auto& t : transcripts) {
    if (t.target.size() != L) throw InvalidArgument("spc: mixed list lengths");
    for (std::size_t j = 0; j < L; ++j) {
      if (std::find(t.output.begin(), t.output.end(), t.target[j]) != t.output.end()) {
        r.anywhere[j] += 1.0;
      }
      if (t.output[j] == t.target[j]) r.exact[j] += 1.0;
    }
  }
  const double n = static_cast<double>(transcripts.size());
  for (std::size_t j = 0; j < L; ++j) {
    r.anywhere[j] /= n;
    r.exact[j] /= n;
  }
  return r;
}

std::vector<RecallTranscript> run_icl(const Checkpoint& ckpt, const IclConfig& cfg,
                                      const InterventionPlan& plan, std::size_t workers) {
  cfg.validate(ckpt.config);
  plan.validate(ckpt.config);
  std::vector<RecallTranscript> out(cfg.n_prompts);
  parallel_for(cfg.n_prompts, workers, [&](std::size_t i) {
    const auto lists = draw_lists(cfg, i);
    const Tokens prompt = build_fewshot_prompt(lists, cfg.markers);
    out[i] = run_recall(ckpt, prompt, lists.back(), plan, cfg.markers);
  });
  return out;
}

Metrics icl_metrics(const std::vector<RecallTranscript>& transcripts) {
  if (transcripts.empty()) throw InvalidArgument("icl_metrics: no transcripts");
  std::vector<double> per_prompt;
  per_prompt.reserve(transcripts.size());
  for (const auto& t : transcripts) per_prompt.push_back(crp({t}).at(1).value_or(0.0));
  const double n = static_cast<double>(per_prompt.size());
  double mean = 0.0;
  for (double v : per_prompt) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : per_prompt) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / n);

  const SPCResult curve = spc(transcripts);
  const auto avg = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return {{"crp_lag1_mean", mean},
          {"crp_lag1_std", stddev},
          {"crp_lag1_pooled", crp(transcripts).at(1).value_or(0.0)},
          {"spc_exact_mean", avg(curve.exact)},
          {"spc_anywhere_mean", avg(curve.anywhere)}};
}

IclSweepResult icl_sweep(const Checkpoint& ckpt, const ScoreMap& scores,
                         const SelectionPolicy& policy, AblationMode mode,
                         const std::vector<std::size_t>& ks, const IclConfig& cfg,
                         std::uint64_t selection_seed, std::size_t workers) {
  cfg.validate(ckpt.config);
  IclSweepResult result;
  std::vector<std::vector<RecallTranscript>> runs;
  const Probe probe = [&](const InterventionPlan& plan) {
    runs.push_back(run_icl(ckpt, cfg, plan, workers));
    return icl_metrics(runs.back());
  };
  result.sweep = ablation_sweep(ckpt, scores, policy, ks, mode, probe, selection_seed);
  std::size_t run = 0;
  for (std::size_t k : ks) {
    if (std::find(result.sweep.skipped.begin(), result.sweep.skipped.end(), k) !=
        result.sweep.skipped.end()) {
      continue;
    }
    IclRow row{policy.name(), mode, k, cfg.n_prompts};
    for (const auto& sr : result.sweep.rows) {
      if (sr.k != k) continue;
      if (sr.metric == "crp_lag1_mean") row.crp1_mean = sr.value;
      if (sr.metric == "crp_lag1_std") row.crp1_std = sr.value;
      if (sr.metric == "crp_lag1_pooled") row.crp1_pooled = sr.value;
      if (sr.metric == "spc_exact_mean") row.spc_exact_mean = sr.value;
      if (sr.metric == "spc_anywhere_mean") row.spc_anywhere_mean = sr.value;
    }
    result.rows.push_back(row);
    result.transcripts[k] = std::move(runs.at(run++));
  }
  return result;
}

void write_icl_table_header(std::ostream& out) {
  out << "policy,mode,k,n_prompts,crp_lag1_mean,crp_lag1_std,crp_lag1_pooled,spc_exact_mean,"
         "spc_anywhere_mean\n";
}

void write_icl_rows(std::ostream& out, const std::vector<IclRow>& rows) {
  for (const auto& r : rows) {
    out << r.policy << ',' << to_string(r.mode) << ',' << r.k << ',' << r.n_prompts << ','
        << format_number(r.crp1_mean) << ',' << format_number(r.crp1_std) << ','
        << format_number(r.crp1_pooled) << ',' << format_number(r.spc_exact_mean) << ','
        << format_number(r.spc_anywhere_mean) << '\n';
  }
}

void write_transcripts_jsonl(std::ostream& out, const std::string& policy, AblationMode mode,
                             std::size_t k, const std::vector<RecallTranscript>& transcripts) {
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const auto& t = transcripts[i];
    nlohmann::json j = {{"policy", policy},
                        {"mode", to_string(mode)},
                        {"k", k},
                        {"prompt", i},
                        {"target", t.target},
                        {"output", t.output},
                        {"correct", std::vector<bool>(t.correct)}};
    out << j.dump() << '\n';
  }
}

}  // namespace inductlab
