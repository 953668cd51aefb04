#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include "inductlab/ablation.hpp"
#include "inductlab/checkpoint_io.hpp"
#include "inductlab/induction_scorer.hpp"
#include "inductlab/model_factory.hpp"
#include "inductlab/recall_probe.hpp"
#include "inductlab/report.hpp"
#include "inductlab/serial_recall.hpp"
#include "inductlab/trainer.hpp"

namespace inductlab::cli {

namespace {

using nlohmann::json;

std::ofstream open_artifact(const RunConfig& cfg, const std::string& name) {
  const auto dir = cfg.out_dir();
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

HeaderFields header(const RunConfig& cfg) {
  return {{"command", cfg.command()},
          {"seed", std::to_string(cfg.seed())},
          {"config", cfg.echo()}};
}

json meta(const RunConfig& cfg) {
  return {{"tool", "inductlab"},
          {"version", kVersion},
          {"command", cfg.command()},
          {"seed", cfg.seed()},
          {"config", json::parse(cfg.echo())}};
}

Checkpoint load(const RunConfig& cfg, const std::string& key = "checkpoint") {
  return load_checkpoint(cfg.checkpoint(key));
}

// Longest repeat prompt the checkpoint supports, capped at 50 tokens.
std::size_t source_len(const RunConfig& cfg, const ModelConfig& model) {
  const std::size_t fallback =
      std::min<std::size_t>({50, model.max_seq / 2, model.vocab_size});
  return cfg.get_size("source_len", fallback);
}

ScoreMap scores_for(const RunConfig& cfg, const Checkpoint& ckpt) {
  return score_all_heads(ckpt, source_len(cfg, ckpt.config), cfg.get_size("trials", 8), cfg.seed(),
                         cfg.workers());
}

ProbeConfig probe_config(const RunConfig& cfg) {
  const std::size_t pool = cfg.get_size("pool_size", 128);
  return ProbeConfig::with_pool(pool, cfg.get_size("repeat_index", pool / 2),
                                cfg.get_size("permutations", 200), cfg.seed());
}

AblationMode parse_mode_or_throw(const std::string& name) {
  try {
    return parse_ablation_mode(name);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

SelectionPolicy policy_for(const RunConfig& cfg, const std::string& name, const ModelConfig& model) {
  const std::size_t exclude = cfg.get_size("exclude_top", default_exclude_top(model.total_heads()));
  std::string effective = name;
  const std::string layers = cfg.get_string("layers", "all");
  if (name == "topk" && layers != "all") {
    if (layers == "top-half") effective = "top-half-topk";
    else if (layers == "bottom-half") effective = "bottom-half-topk";
    else throw ConfigError("layers must be all, top-half or bottom-half");
  }
  try {
    return parse_policy(effective, exclude);
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

void write_score_artifacts(const RunConfig& cfg, const ScoreMap& map, const std::string& stem) {
  auto scores = open_artifact(cfg, stem + ".csv");
  write_header_block(scores, header(cfg));
  write_score_csv(scores, map);
  auto grid = open_artifact(cfg, stem + "_heatmap.csv");
  write_header_block(grid, header(cfg));
  write_heatmap_csv(grid, map);
}

}  // namespace

void cmd_score(const RunConfig& cfg) {
  const Checkpoint ckpt = load(cfg);
  const ScoreMap map = scores_for(cfg, ckpt);
  write_score_artifacts(cfg, map, "scores");
  const auto ranked = rank_heads(map);
  std::cout << "top head " << to_string(ranked.front()) << " score "
            << format_number(map.at(ranked.front())) << '\n';
  if (cfg.has("delta_checkpoint")) {
    const Checkpoint other = load(cfg, "delta_checkpoint");
    const ScoreMap delta = score_delta(map, scores_for(cfg, other));
    write_score_artifacts(cfg, delta, "scores_delta");
    std::cout << "wrote score delta grid\n";
  }
}

void cmd_probe(const RunConfig& cfg) {
  const Checkpoint ckpt = load(cfg);
  const ProbeConfig pc = probe_config(cfg);
  const std::size_t k = cfg.get_size("k", 0);
  InterventionPlan plan;
  json ablation = nullptr;
  if (k > 0) {
    const ScoreMap map = scores_for(cfg, ckpt);
    const auto policy = policy_for(cfg, cfg.get_string("policy", "topk"), ckpt.config);
    const AblationMode mode = parse_mode_or_throw(cfg.get_string("mode", "zero"));
    const auto heads = select_heads(map, policy, k, cfg.seed());
    plan = make_plan(heads, mode, ckpt.config);
    json ids = json::array();
    for (const auto& h : heads) ids.push_back(to_string(h));
    ablation = {{"policy", policy.name()}, {"mode", to_string(mode)}, {"k", k}, {"heads", ids}};
  }
  const LagCurve curve = lag_curve(ckpt, pc, plan, cfg.workers());
  const CurveStats stats = curve_stats(curve);

  auto csv = open_artifact(cfg, "lag_curve.csv");
  write_header_block(csv, header(cfg));
  write_curve_csv(csv, curve);

  json j = json::parse(stats_to_json(stats));
  j["meta"] = meta(cfg);
  j["ablation"] = ablation;
  auto js = open_artifact(cfg, "stats.json");
  js << j.dump(2) << '\n';
  std::cout << "peak_lag " << stats.peak_lag << " p_lag1 "
            << (stats.p_lag1 ? format_number(*stats.p_lag1) : "absent") << " baseline "
            << format_number(stats.baseline) << '\n';
}

void cmd_sweep(const RunConfig& cfg) {
  const Checkpoint ckpt = load(cfg);
  const ScoreMap map = scores_for(cfg, ckpt);
  const ProbeConfig pc = probe_config(cfg);
  const auto ks = cfg.get_sizes("ks", scale_ladder(lag_sweep_ladder(), ckpt.config.total_heads()));
  const auto policies = cfg.get_strings("policies", {"topk", "random-excluding-top"});
  const auto modes = cfg.get_strings("modes", {"zero", "mean"});
  const Probe probe = make_lag_probe(ckpt, pc, cfg.workers());

  auto csv = open_artifact(cfg, "sweep.csv");
  write_header_block(csv, header(cfg));
  write_sweep_csv_header(csv);
  for (const auto& pname : policies) {
    const auto policy = policy_for(cfg, pname, ckpt.config);
    for (const auto& mname : modes) {
      const AblationMode mode = parse_mode_or_throw(mname);
      const SweepResult r = ablation_sweep(ckpt, map, policy, ks, mode, probe, cfg.seed());
      write_sweep_rows(csv, r.rows);
      for (std::size_t k : r.skipped) {
        std::cerr << "notice: k=" << k << " skipped for " << policy.name()
                  << " (eligible pool is " << eligible_pool_size(map, policy) << " heads)\n";
      }
    }
  }
  std::cout << "wrote sweep over " << ks.size() << " k values\n";
}

void cmd_icl(const RunConfig& cfg) {
  const Checkpoint ckpt = load(cfg);
  IclConfig ic = IclConfig::standard(cfg.get_size("alphabet_size", 25), cfg.get_size("list_len", 14),
                                     cfg.get_size("n_lists", 10), cfg.get_size("n_prompts", 50),
                                     cfg.seed());
  if (const json* m = cfg.object("markers")) {
    ic.markers.bos = m->value("bos", ic.markers.bos);
    ic.markers.study = m->value("study", ic.markers.study);
    ic.markers.recall = m->value("recall", ic.markers.recall);
  }
  if (cfg.has("alphabet_start")) {
    std::iota(ic.alphabet.begin(), ic.alphabet.end(),
              static_cast<TokenId>(cfg.get_size("alphabet_start", 3)));
  }
  const ScoreMap map = scores_for(cfg, ckpt);
  const auto ks = cfg.get_sizes("ks", scale_ladder(icl_sweep_ladder(), ckpt.config.total_heads()));
  const auto policies = cfg.get_strings("policies", {"topk", "random-excluding-top"});
  const auto modes = cfg.get_strings("modes", {"zero"});

  auto table = open_artifact(cfg, "icl_table.csv");
  write_header_block(table, header(cfg));
  write_icl_table_header(table);
  auto jsonl = open_artifact(cfg, "transcripts.jsonl");
  for (const auto& pname : policies) {
    const auto policy = policy_for(cfg, pname, ckpt.config);
    for (const auto& mname : modes) {
      const AblationMode mode = parse_mode_or_throw(mname);
      const IclSweepResult r = icl_sweep(ckpt, map, policy, mode, ks, ic, cfg.seed(), cfg.workers());
      write_icl_rows(table, r.rows);
      for (const auto& [k, ts] : r.transcripts) write_transcripts_jsonl(jsonl, policy.name(), mode, k, ts);
      for (const auto& row : r.rows) {
        std::cout << policy.name() << ' ' << to_string(mode) << " k=" << row.k << " crp(+1) "
                  << format_number(row.crp1_mean) << " +- " << format_number(row.crp1_std) << '\n';
      }
    }
  }
}

void cmd_train(const RunConfig& cfg) {
  TrainSpec spec;
  ModelConfig& m = spec.model;
  m.n_layers = 2;
  m.n_heads = 4;
  m.d_model = 64;
  m.d_head = 16;
  m.vocab_size = 64;
  m.max_seq = 64;
  if (const json* mj = cfg.object("model")) {
    const RunConfig sub(cfg.command(), *mj);
    m.n_layers = sub.get_size("n_layers", m.n_layers);
    m.n_heads = sub.get_size("n_heads", m.n_heads);
    m.d_model = sub.get_size("d_model", m.d_model);
    m.d_head = sub.get_size("d_head", m.d_head);
    m.vocab_size = sub.get_size("vocab_size", m.vocab_size);
    m.max_seq = sub.get_size("max_seq", m.max_seq);
  }
  spec.half_len = cfg.get_size("half_len", 32);
  spec.steps = cfg.get_size("steps", spec.steps);
  spec.batch = cfg.get_size("batch", spec.batch);
  spec.learning_rate = cfg.get_double("learning_rate", spec.learning_rate);
  spec.seed = cfg.seed();
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  const TrainResult r = train_toy(spec);

  const std::string format = cfg.get_string("format", "native");
  std::filesystem::create_directories(cfg.out_dir());
  if (format == "native") {
    save_checkpoint(r.checkpoint, cfg.out_dir() / "model.ckpt");
  } else if (format == "safetensors") {
    save_safetensors(r.checkpoint, cfg.out_dir() / "model.safetensors");
  } else {
    throw ConfigError("format must be native or safetensors");
  }
  auto loss = open_artifact(cfg, "loss.csv");
  write_header_block(loss, header(cfg));
  loss << "step,loss\n";
  for (std::size_t i = 0; i < r.loss_curve.size(); ++i) {
    loss << i << ',' << format_number(r.loss_curve[i]) << '\n';
  }
  std::cout << "final loss " << format_number(r.loss_curve.back()) << '\n';
}

void cmd_build_circuit(const RunConfig& cfg) {
  CircuitSpec spec;
  spec.vocab_size = cfg.get_size("vocab_size", spec.vocab_size);
  spec.max_seq = cfg.get_size("max_seq", spec.max_seq);
  spec.beta = static_cast<float>(cfg.get_double("beta", spec.beta));
  spec.n_distractor_heads = cfg.get_size("n_distractor_heads", spec.n_distractor_heads);
  spec.recency = cfg.get_bool("recency", spec.recency);
  spec.epsilon = cfg.get_double("epsilon", spec.epsilon);
  (void)cfg.seed();  // required for every command, unused here
  const Checkpoint ckpt = build_induction_circuit(spec);
  const std::string format = cfg.get_string("format", "native");
  std::filesystem::create_directories(cfg.out_dir());
  if (format == "native") {
    save_checkpoint(ckpt, cfg.out_dir() / "circuit.ckpt");
  } else if (format == "safetensors") {
    save_safetensors(ckpt, cfg.out_dir() / "circuit.safetensors");
  } else {
    throw ConfigError("format must be native or safetensors");
  }
  std::cout << "circuit: " << ckpt.config.n_layers << " layers x " << ckpt.config.n_heads
            << " heads, induction head " << to_string(kCircuitInductionHead) << '\n';
}

void run_command(const RunConfig& cfg) {
  const std::string& c = cfg.command();
  if (c == "score") return cmd_score(cfg);
  if (c == "probe") return cmd_probe(cfg);
  if (c == "sweep") return cmd_sweep(cfg);
  if (c == "icl") return cmd_icl(cfg);
  if (c == "train") return cmd_train(cfg);
  if (c == "build-circuit") return cmd_build_circuit(cfg);
  throw ConfigError("unknown command '" + c + "'");
}

}  // namespace inductlab::cli
