// Copyright (c) 2026 The rnnwave authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "rnnwave/bench.hpp"
#include "rnnwave/engine.hpp"
#include "rnnwave/param_io.hpp"
#include "rnnwave/verify.hpp"

namespace {

rnnwave::CellKind parse_cell(const std::string& name) {
  if (name == "lstm") return rnnwave::CellKind::Lstm;
  if (name == "gru") return rnnwave::CellKind::Gru;
  if (name == "rnn-tanh") return rnnwave::CellKind::RnnTanh;
  if (name == "rnn-relu") return rnnwave::CellKind::RnnRelu;
  throw CLI::ValidationError("--cell", "must be one of lstm|gru|rnn-tanh|rnn-relu");
}

/// Default worker count: RNNWAVE_WORKERS if set, otherwise the machine's
/// logical core count capped at 2 * layers.
int default_workers(int layers) {
  if (const char* env = std::getenv("RNNWAVE_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  return std::max(1, std::min(hw > 0 ? hw : 1, 2 * layers));
}

std::vector<int> parse_int_list(const std::string& csv, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const int v = std::stoi(tok);
    if (v <= 0) throw CLI::ValidationError(flag, "entries must be positive");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "list is empty");
  return out;
}

struct CommonFlags {
  std::string cell = "lstm";
  int layers = 4;
  int hidden = 512;
  int input = 0;  // 0: follow hidden
  int batch = 64;
  int steps = 100;
  int batch_steps = 2;
  int workers = 0;  // 0: default rule
  std::uint64_t seed = 42;

  void attach(CLI::App* app) {
    app->add_option("--cell", cell, "cell kind: lstm|gru|rnn-tanh|rnn-relu")
        ->default_val(cell);
    app->add_option("--layers", layers)->default_val(layers);
    app->add_option("--hidden", hidden)->default_val(hidden);
    app->add_option("--input", input, "layer-0 input width (default: hidden)");
    app->add_option("--batch", batch)->default_val(batch);
    app->add_option("--steps", steps)->default_val(steps);
    app->add_option("--batch-steps", batch_steps, "step batching width s used at O5/O6")
        ->default_val(batch_steps);
    app->add_option("--workers", workers,
                    "worker count (default: RNNWAVE_WORKERS or cores, capped at 2*layers)");
    app->add_option("--seed", seed)->default_val(seed);
  }

  rnnwave::LadderConfig to_config() const {
    rnnwave::LadderConfig cfg;
    cfg.kind = parse_cell(cell);
    cfg.layers = layers;
    cfg.hidden = hidden;
    cfg.input = input > 0 ? input : hidden;
    cfg.batch = batch;
    cfg.steps = steps;
    cfg.batch_steps = std::min(batch_steps, steps);
    cfg.workers = workers > 0 ? workers : default_workers(layers);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

int cmd_run_ladder(const CommonFlags& common, int reps, int warmup, const std::string& pass,
                   const std::string& out_path, const std::string& trace_path) {
  rnnwave::bench::LadderOptions opts;
  opts.cfg = common.to_config();
  opts.reps = reps;
  opts.warmup = warmup;
  opts.pass = rnnwave::bench::parse_pass(pass);

  rnnwave::sched::ScheduleTrace trace;
  std::vector<rnnwave::bench::LadderRow> rows;
  try {
    rows = rnnwave::bench::run_ladder(opts, &std::cout,
                                      trace_path.empty() ? nullptr : &trace);
  } catch (const rnnwave::bench::EquivalenceFailure& e) {
    std::cerr << "run-ladder aborted: " << e.what() << "\n";
    return 2;
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write " << out_path << "\n";
      return 1;
    }
    rnnwave::bench::write_ladder_csv(out, opts, rows);
    std::cout << "wrote " << out_path << "\n";
  } else {
    rnnwave::bench::write_ladder_csv(std::cout, opts, rows);
  }
  if (!trace_path.empty()) {
    std::ofstream out(trace_path);
    if (!out) {
      std::cerr << "cannot write " << trace_path << "\n";
      return 1;
    }
    rnnwave::sched::write_trace_csv(out, trace);
    std::cout << "wrote " << trace_path << "\n";
  }
  return 0;
}

int cmd_sweep(const CommonFlags& common, const std::string& hidden_csv,
              const std::string& batch_csv, int reps, int warmup, const std::string& pass,
              const std::string& out_path) {
  rnnwave::bench::SweepOptions opts;
  opts.cfg = common.to_config();
  opts.hidden_list = parse_int_list(hidden_csv, "--hidden-list");
  opts.batch_list = parse_int_list(batch_csv, "--batch-list");
  opts.reps = reps;
  opts.warmup = warmup;
  opts.pass = rnnwave::bench::parse_pass(pass);

  std::vector<rnnwave::bench::SweepRow> rows;
  try {
    rows = rnnwave::bench::run_sweep(opts, &std::cout);
  } catch (const rnnwave::bench::EquivalenceFailure& e) {
    std::cerr << "sweep aborted: " << e.what() << "\n";
    return 2;
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) {
      std::cerr << "cannot write " << out_path << "\n";
      return 1;
    }
    rnnwave::bench::write_sweep_csv(out, opts, rows);
    std::cout << "wrote " << out_path << "\n";
  } else {
    rnnwave::bench::write_sweep_csv(std::cout, opts, rows);
  }
  return 0;
}

struct VerifySizeFlags {
  int layers = 4;
  int hidden = 64;
  int input = 0;  // 0: follow hidden
  int batch = 8;
  int steps = 32;
  int batch_steps = 2;

  void attach(CLI::App* app) {
    app->add_option("--layers", layers, "cross-level check depth")->default_val(layers);
    app->add_option("--hidden", hidden)->default_val(hidden);
    app->add_option("--input", input, "layer-0 input width (default: hidden)");
    app->add_option("--batch", batch)->default_val(batch);
    app->add_option("--steps", steps)->default_val(steps);
    app->add_option("--batch-steps", batch_steps)->default_val(batch_steps);
  }

  rnnwave::LadderConfig to_config(std::uint64_t seed) const {
    rnnwave::LadderConfig cfg;
    cfg.layers = layers;
    cfg.hidden = hidden;
    cfg.input = input > 0 ? input : hidden;
    cfg.batch = batch;
    cfg.steps = steps;
    cfg.batch_steps = std::min(batch_steps, steps);
    cfg.seed = seed;
    cfg.validate();
    return cfg;
  }
};

int cmd_verify(bool deep, std::uint64_t seed, bool inject_fault,
               const VerifySizeFlags& size) {
  if (inject_fault) {
    // Demonstrates validator soundness: drop one dependency edge from the
    // graph the trace is checked against, so a recorded overlap that the
    // pruned graph allowed violates the full graph.
    rnnwave::sched::TaskGraph full = rnnwave::sched::build_graph(2, 4, 1);
    rnnwave::sched::TaskGraph pruned = full;
    // Remove the edge RECURRENT_STEP(0, last) -> INPUT_GEMM(1, last block).
    const int from = pruned.recurrent_id(0, 3);
    const int to = pruned.input_id(1, 3);
    auto& dep_list = pruned.dependents[static_cast<std::size_t>(from)];
    dep_list.erase(std::remove(dep_list.begin(), dep_list.end(), to), dep_list.end());
    --pruned.dependency_count[static_cast<std::size_t>(to)];
    // Make the missing dependency observable: the freed task runs long
    // enough that it cannot finish before its (now unordered) prerequisite.
    auto body = [&](const rnnwave::sched::Task& t) {
      if (t.id == to || t.id == from) {
        volatile double x = 1.0;
        for (int i = 0; i < 2000000; ++i) x = x * 1.0000001 + 0.1;
      }
    };
    const auto trace = rnnwave::sched::execute(pruned, 4, body);
    const auto violation = rnnwave::sched::validate_trace(full, trace);
    if (violation) {
      std::cout << "injected fault detected: " << violation->description << "\n";
      return 0;
    }
    std::cerr << "injected fault was NOT detected\n";
    return 1;
  }

  const rnnwave::LadderConfig base = size.to_config(seed);
  const auto results = rnnwave::verify::run_suite(deep, seed, &base);
  bool all_pass = true;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << "\n";
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}

int cmd_save_params(const CommonFlags& common, const std::string& path) {
  const rnnwave::LadderConfig cfg = common.to_config();
  const std::vector<rnnwave::LayerParams> params = rnnwave::init_params(cfg);
  rnnwave::io::ParamFileHeader header;
  header.kind = cfg.kind;
  header.layers = cfg.layers;
  header.hidden = cfg.hidden;
  header.input = cfg.input;
  header.batch_hint = cfg.batch;
  rnnwave::io::save_params(path, header, params);
  std::cout << "wrote " << path << " (" << rnnwave::io::param_file_size(header) << " bytes)\n";
  return 0;
}

int cmd_load_params(const CommonFlags& common, const std::string& path, bool check_config) {
  const rnnwave::io::LoadedParams loaded = rnnwave::io::load_params(path);
  if (check_config) {
    rnnwave::io::check_matches(loaded.header, common.to_config());
  }
  std::uint64_t values = 0;
  for (const auto& p : loaded.params) values += p.w.size() + p.r.size() + p.bias.size();
  std::cout << "loaded " << path << ": cell=" << rnnwave::cell_name(loaded.header.kind)
            << " layers=" << loaded.header.layers << " hidden=" << loaded.header.hidden
            << " input=" << loaded.header.input << " batch_hint=" << loaded.header.batch_hint
            << " (" << values << " parameter values)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rnnwave: multicore stacked-RNN execution engine and optimization-ladder "
               "benchmark"};
  app.require_subcommand(1);

  CommonFlags common;

  auto* ladder = app.add_subcommand(
      "run-ladder", "run optimization levels O0..O6 and report per-cell times");
  common.attach(ladder);
  int reps = 100;
  int warmup = 3;
  std::string pass = "fwd";
  std::string out_path;
  std::string trace_path;
  ladder->add_option("--reps", reps, "timed repetitions per level")->default_val(reps);
  ladder->add_option("--warmup", warmup, "untimed warmup passes per level")->default_val(warmup);
  ladder->add_option("--pass", pass, "fwd|bwd|both")->default_val(pass);
  ladder->add_option("--out", out_path, "CSV output path (stdout when omitted)");
  ladder->add_option("--trace-out", trace_path, "write the O6 schedule trace CSV here");

  auto* sweep = app.add_subcommand("sweep", "ladder across a hidden x batch grid");
  common.attach(sweep);
  std::string hidden_csv, batch_csv;
  int sweep_reps = 20;
  int sweep_warmup = 2;
  std::string sweep_pass = "fwd";
  std::string sweep_out;
  sweep->add_option("--hidden-list", hidden_csv, "comma-separated hidden sizes")->required();
  sweep->add_option("--batch-list", batch_csv, "comma-separated minibatch sizes")->required();
  sweep->add_option("--reps", sweep_reps)->default_val(sweep_reps);
  sweep->add_option("--warmup", sweep_warmup)->default_val(sweep_warmup);
  sweep->add_option("--pass", sweep_pass, "fwd|bwd|both")->default_val(sweep_pass);
  sweep->add_option("--out", sweep_out, "CSV output path (stdout when omitted)");

  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  bool deep = false;
  std::uint64_t verify_seed = 42;
  bool inject_fault = false;
  VerifySizeFlags verify_size;
  verify->add_flag("--deep", deep, "add 50 randomized cross-level configurations");
  verify->add_option("--seed", verify_seed)->default_val(verify_seed);
  verify_size.attach(verify);
  verify->add_flag("--inject-sched-fault", inject_fault,
                   "drop a dependency edge and confirm the trace validator reports it")
      ->group("");

  auto* save = app.add_subcommand("save-params", "write deterministic parameters to a file");
  common.attach(save);
  std::string save_path;
  save->add_option("--file", save_path, "output path")->required();

  auto* load = app.add_subcommand("load-params", "read and validate a parameter file");
  common.attach(load);
  std::string load_path;
  bool check_config = false;
  load->add_option("--file", load_path, "input path")->required();
  load->add_flag("--check-config", check_config,
                 "require the file to match the size flags");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ladder->parsed()) {
      return cmd_run_ladder(common, reps, warmup, pass, out_path, trace_path);
    }
    if (sweep->parsed()) {
      return cmd_sweep(common, hidden_csv, batch_csv, sweep_reps, sweep_warmup, sweep_pass,
                       sweep_out);
    }
    if (verify->parsed()) {
      return cmd_verify(deep, verify_seed, inject_fault, verify_size);
    }
    if (save->parsed()) {
      return cmd_save_params(common, save_path);
    }
    if (load->parsed()) {
      return cmd_load_params(common, load_path, check_config);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
