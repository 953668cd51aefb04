#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "inductlab/report.hpp"
#include "inductlab/tensor.hpp"

namespace {

using inductlab::cli::ConfigError;
using inductlab::cli::RunConfig;
using nlohmann::json;

enum class Kind { kSize, kDouble, kBool, kString, kSizeList, kStringList };

struct Flag {
  const char* name;  // --name
  const char* key;   // config key
  Kind kind;
  const char* help;
};

// Flags shared by every command, then per-command flags.
const std::vector<Flag> kCommon = {
    {"seed", "seed", Kind::kSize, "root seed (required)"},
    {"out", "out_dir", Kind::kString, "output directory"},
    {"workers", "workers", Kind::kSize, "worker threads (default: $INDUCTLAB_WORKERS or 1)"},
};

const std::vector<Flag> kScoring = {
    {"checkpoint", "checkpoint", Kind::kString, "model checkpoint"},
    {"source-len", "source_len", Kind::kSize, "length N of the repeated half"},
    {"trials", "trials", Kind::kSize, "random prompts averaged per score"},
};

const std::vector<Flag> kProbe = {
    {"pool-size", "pool_size", Kind::kSize, "probe pool size P"},
    {"repeat-index", "repeat_index", Kind::kSize, "index r of the repeated token"},
    {"permutations", "permutations", Kind::kSize, "permutations M"},
};

const std::vector<Flag> kSelection = {
    {"exclude-top", "exclude_top", Kind::kSize, "heads excluded from random selection"},
    {"layers", "layers", Kind::kString, "all | top-half | bottom-half"},
};

const std::map<std::string, std::vector<Flag>> kCommandFlags = {
    {"score", {{"delta", "delta_checkpoint", Kind::kString, "second checkpoint for a score delta"}}},
    {"probe",
     {{"policy", "policy", Kind::kString, "topk | random-excluding-top | top-half-topk | bottom-half-topk"},
      {"mode", "mode", Kind::kString, "zero | mean"},
      {"k", "k", Kind::kSize, "number of heads to ablate (0: none)"}}},
    {"sweep",
     {{"ks", "ks", Kind::kSizeList, "comma-separated k values"},
      {"policies", "policies", Kind::kStringList, "comma-separated policies"},
      {"modes", "modes", Kind::kStringList, "comma-separated modes"}}},
    {"icl",
     {{"ks", "ks", Kind::kSizeList, "comma-separated k values"},
      {"policies", "policies", Kind::kStringList, "comma-separated policies"},
      {"modes", "modes", Kind::kStringList, "comma-separated modes"},
      {"n-prompts", "n_prompts", Kind::kSize, "prompts per row"},
      {"list-len", "list_len", Kind::kSize, "items per study list"},
      {"n-lists", "n_lists", Kind::kSize, "lists per prompt"},
      {"alphabet-size", "alphabet_size", Kind::kSize, "candidate items"}}},
    {"train",
     {{"steps", "steps", Kind::kSize, "optimizer steps"},
      {"batch", "batch", Kind::kSize, "sequences per step"},
      {"half-len", "half_len", Kind::kSize, "length of the repeated half"},
      {"learning-rate", "learning_rate", Kind::kDouble, "Adam learning rate"},
      {"format", "format", Kind::kString, "native | safetensors"}}},
    {"build-circuit",
     {{"vocab-size", "vocab_size", Kind::kSize, "vocabulary size"},
      {"max-seq", "max_seq", Kind::kSize, "context length"},
      {"beta", "beta", Kind::kDouble, "logit gain"},
      {"n-distractor-heads", "n_distractor_heads", Kind::kSize, "extra heads per layer"},
      {"recency", "recency", Kind::kBool, "favour recent matches"},
      {"format", "format", Kind::kString, "native | safetensors"}}},
};

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::size_t to_size(const std::string& flag, const std::string& v) {
  std::size_t pos = 0;
  try {
    if (!v.empty() && v[0] != '-') {
      const auto n = std::stoull(v, &pos);
      if (pos == v.size()) return static_cast<std::size_t>(n);
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("--" + flag + " expects a non-negative integer, got '" + v + "'");
}

json convert(const Flag& f, const std::string& v) {
  switch (f.kind) {
    case Kind::kSize:
      return to_size(f.name, v);
    case Kind::kDouble:
      try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos == v.size()) return d;
      } catch (const std::exception&) {
      }
      throw ConfigError(std::string("--") + f.name + " expects a number");
    case Kind::kBool:
      if (v == "true" || v == "1") return true;
      if (v == "false" || v == "0") return false;
      throw ConfigError(std::string("--") + f.name + " expects true or false");
    case Kind::kString:
      return v;
    case Kind::kSizeList: {
      json arr = json::array();
      for (const auto& item : split(v)) arr.push_back(to_size(f.name, item));
      return arr;
    }
    case Kind::kStringList: {
      json arr = json::array();
      for (const auto& item : split(v)) arr.push_back(item);
      return arr;
    }
  }
  return nullptr;
}

struct Bound {
  Flag flag;
  CLI::Option* option = nullptr;
  std::string value;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inductlab: induction-head workbench"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(inductlab::kVersion));

  std::map<std::string, std::string> config_paths;
  std::map<std::string, std::vector<Bound>> bound;
  const std::vector<std::string> names = {"score", "probe", "sweep", "icl", "train", "build-circuit"};
  const std::map<std::string, std::string> descriptions = {
      {"score", "per-head induction scores and heatmap grid"},
      {"probe", "lag curve of the repeated-token probe"},
      {"sweep", "ablation sweep of the lag probe"},
      {"icl", "few-shot serial recall sweep"},
      {"train", "train a small attention-only model"},
      {"build-circuit", "write the handcrafted induction circuit"}};

  for (const auto& name : names) {
    CLI::App* sub = app.add_subcommand(name, descriptions.at(name));
    sub->add_option("--config", config_paths[name], "JSON config file; flags override it");
    auto& flags = bound[name];
    auto add = [&](const std::vector<Flag>& list) {
      for (const auto& f : list) flags.push_back({f, nullptr, {}});
    };
    add(kCommon);
    if (name != "train" && name != "build-circuit") add(kScoring);
    if (name == "probe" || name == "sweep") add(kProbe);
    if (name == "probe" || name == "sweep" || name == "icl") add(kSelection);
    add(kCommandFlags.at(name));
    for (auto& b : flags) {
      b.option = sub->add_option(std::string("--") + b.flag.name, b.value, b.flag.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    json values = json::object();
    if (!config_paths[command].empty()) values = RunConfig::load_file(config_paths[command]);
    for (const auto& b : bound[command]) {
      if (b.option->count() > 0) values[b.flag.key] = convert(b.flag, b.value);
    }
    inductlab::cli::run_command(RunConfig(command, std::move(values)));
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const inductlab::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
