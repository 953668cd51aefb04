#pragma once

#include "run_config.hpp"

namespace inductlab::cli {

// Each command writes its artifacts under cfg.out_dir() and a short summary
// to stdout. Errors propagate as exceptions; main maps them to exit codes.
void cmd_score(const RunConfig& cfg);
void cmd_probe(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg);
void cmd_icl(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_build_circuit(const RunConfig& cfg);

void run_command(const RunConfig& cfg);

}  // namespace inductlab::cli
