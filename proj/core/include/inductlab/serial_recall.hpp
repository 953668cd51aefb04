#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "inductlab/ablation.hpp"
#include "inductlab/transformer.hpp"

namespace inductlab {

struct Markers {
  TokenId bos = 0;
  TokenId study = 1;
  TokenId recall = 2;

  bool contains(TokenId t) const { return t == bos || t == study || t == recall; }
};

using StudyList = std::vector<TokenId>;

struct IclConfig {
  Markers markers;
  std::vector<TokenId> alphabet;  // A candidate tokens, disjoint from the markers
  std::size_t list_len = 14;
  std::size_t n_lists = 10;
  std::size_t n_prompts = 50;
  std::uint64_t seed = 0;

  // Markers 0, 1, 2 and an alphabet of `alphabet_size` ids starting at 3.
  static IclConfig standard(std::size_t alphabet_size = 25, std::size_t list_len = 14,
                            std::size_t n_lists = 10, std::size_t n_prompts = 50,
                            std::uint64_t seed = 0);
  void validate() const;
  void validate(const ModelConfig& model) const;
  std::size_t prompt_length() const;
};

// Lists for prompt `index`: each drawn without replacement from the alphabet
// by Rng(derive_seed(seed, streams::kIclPrompt, index)).
std::vector<StudyList> draw_lists(const IclConfig& cfg, std::size_t index);

// <bos> study S1 <bos> recall S1 <bos> ... <bos> study Sn <bos>; the last
// list has no recall segment. Length (2n-1)(L+2) + 1.
Tokens build_fewshot_prompt(const std::vector<StudyList>& lists, const Markers& markers);
// Inverse of build_fewshot_prompt: returns the study lists. Throws
// InvalidArgument on anything the builder cannot produce.
std::vector<StudyList> parse_fewshot_prompt(const Tokens& prompt, const Markers& markers);

struct RecallTranscript {
  StudyList target;
  Tokens output;  // exactly target.size() tokens
  std::vector<bool> correct;  // output[j] == target[j]

  double accuracy() const;
};

// Greedy continuation scored against `target`. The model may first echo the
// "study" marker that always followed <bos> earlier in the prompt; one
// leading marker token is therefore dropped before the L scored tokens.
RecallTranscript run_recall(const Checkpoint& ckpt, const Tokens& prompt, const StudyList& target,
                            const InterventionPlan& plan = {}, const Markers& markers = {});

// Builds a transcript from raw output without running a model.
RecallTranscript score_transcript(const StudyList& target, const Tokens& output);

struct CRPResult {
  std::size_t list_len = 0;
  // Keyed by lag in [-(L-1), L-1] \ {0}; lags never available are absent.
  std::map<long, double> probability;
  std::map<long, std::size_t> transitions;
  std::map<long, std::size_t> available;

  std::optional<double> at(long lag) const;
};

// A recall is correct when the token is an item of the list not yet
// recalled. Transitions are counted between successive correct recalls;
// intrusions and repetitions reset the chain. At each transition from
// position p every not-yet-recalled position q != p adds one availability
// at lag q - p. Counts are pooled over all transcripts.
CRPResult crp(const std::vector<RecallTranscript>& transcripts);

struct SPCResult {
  std::vector<double> anywhere;  // item j appears anywhere in the output
  std::vector<double> exact;     // item j is output at position j
};
SPCResult spc(const std::vector<RecallTranscript>& transcripts);

struct IclRow {
  std::string policy;
  AblationMode mode = AblationMode::kZero;
  std::size_t k = 0;
  std::size_t n_prompts = 0;
  // Per-prompt CRP(+1); a prompt without any +1 availability counts as 0.
  double crp1_mean = 0.0;
  double crp1_std = 0.0;
  double crp1_pooled = 0.0;  // pooled counts; 0 when absent
  double spc_exact_mean = 0.0;
  double spc_anywhere_mean = 0.0;
};

struct IclSweepResult {
  std::vector<IclRow> rows;
  std::map<std::size_t, std::vector<RecallTranscript>> transcripts;  // keyed by k
  SweepResult sweep;
};

// Transcripts for every prompt of `cfg` under one plan.
std::vector<RecallTranscript> run_icl(const Checkpoint& ckpt, const IclConfig& cfg,
                                      const InterventionPlan& plan = {}, std::size_t workers = 1);

// Metrics named crp_lag1_mean, crp_lag1_std, crp_lag1_pooled, spc_exact_mean
// and spc_anywhere_mean.
Metrics icl_metrics(const std::vector<RecallTranscript>& transcripts);

IclSweepResult icl_sweep(const Checkpoint& ckpt, const ScoreMap& scores,
                         const SelectionPolicy& policy, AblationMode mode,
                         const std::vector<std::size_t>& ks, const IclConfig& cfg,
                         std::uint64_t selection_seed, std::size_t workers = 1);

// policy,mode,k,n_prompts,crp_lag1_mean,crp_lag1_std,crp_lag1_pooled,spc_exact_mean,spc_anywhere_mean
void write_icl_table_header(std::ostream& out);
void write_icl_rows(std::ostream& out, const std::vector<IclRow>& rows);
// One JSON object per line: policy, mode, k, prompt, target, output, correct.
void write_transcripts_jsonl(std::ostream& out, const std::string& policy, AblationMode mode,
                             std::size_t k, const std::vector<RecallTranscript>& transcripts);

}  // namespace inductlab
