// rlp: generate, solve, and verify "dropped ResNet" reassembly instances.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rlp/diagnostics.hpp"
#include "rlp/generator.hpp"
#include "rlp/io.hpp"
#include "rlp/ordering.hpp"
#include "rlp/pairing.hpp"

namespace {

using nlohmann::json;

constexpr int kExitUnconverged = 2;
constexpr int kExitFormatError = 3;
constexpr double kMseTarget = 1e-10;

struct GlobalOpts {
  bool json_out = false;
  int threads = 1;  // accepted as an upper bound; all current code paths are serial
  int verbosity = 1;
};

struct PipelineSummary {
  rlp::PairingResult pairing;
  rlp::Ordering final_order;
  rlp::RepairTrace trace;
  double seed_mse = 0;
  double bt_mse = -1;  // <0 when BT disabled
  double final_mse = 0;
  int bt_iterations = 0;
  bool escalated = false;
  bool converged = false;
};

int find_last_id(const rlp::Instance& inst) {
  for (const rlp::Piece& p : inst.pieces)
    if (rlp::classify_piece(p) == rlp::PieceKind::Last) return p.id;
  throw rlp::IoError(rlp::IoError::Kind::BadShape, "instance has no (1,48) output piece");
}

rlp::Solution to_solution(const PipelineSummary& s) {
  rlp::Solution sol;
  for (auto [in_id, out_id] : s.pairing.id_pairs) sol.pairs.push_back({in_id, out_id});
  sol.order = s.final_order.sequence;
  sol.last_id = s.final_order.last_id;
  return sol;
}

PipelineSummary run_pipeline(const rlp::Instance& inst, rlp::SeedStrategy strategy, bool use_bt, int n_cmp,
                             double temperature, const GlobalOpts& g) {
  PipelineSummary s;
  s.pairing = rlp::pair_blocks(inst.pieces);
  const auto& blocks = s.pairing.blocks;
  const int last_id = find_last_id(inst);

  rlp::Piece last;
  for (const rlp::Piece& p : inst.pieces)
    if (p.id == last_id) last = p;

  rlp::Ordering seed = rlp::seed_order(blocks, strategy, &inst.dataset, last_id);
  rlp::Network seed_net = rlp::make_network(blocks, seed, last);
  s.seed_mse = rlp::mse(seed_net, inst.dataset, inst.dataset.rows(), rlp::Target::Pred);
  if (g.verbosity > 0 && !g.json_out) std::printf("seed MSE            %.6f\n", s.seed_mse);

  rlp::Ordering start = seed;
  if (use_bt) {
    const int cmp = std::min(n_cmp, inst.dataset.rows());
    rlp::GapMatrix gaps = rlp::swap_gap_matrix(seed, blocks, last, inst.dataset, cmp);
    rlp::BTStrengths bt = rlp::bt_fit(gaps, temperature);
    s.bt_iterations = bt.iterations;
    start = rlp::bt_order(bt, seed);
    rlp::Network bt_net = rlp::make_network(blocks, start, last);
    s.bt_mse = rlp::mse(bt_net, inst.dataset, inst.dataset.rows(), rlp::Target::Pred);
    if (g.verbosity > 0 && !g.json_out)
      std::printf("BT MSE              %.6f  (%d MM iterations)\n", s.bt_mse, bt.iterations);
  }

  // Appends the non-initial rounds of `t`, renumbered to continue s.trace.
  auto append_trace = [&s](const rlp::RepairTrace& t) {
    for (size_t i = 1; i < t.rounds.size(); ++i) {
      auto r = t.rounds[i];
      r.round = static_cast<int>(s.trace.rounds.size());
      s.trace.rounds.push_back(r);
    }
    s.trace.converged = t.converged;
  };

  auto [repaired, trace] = rlp::bubble_repair(start, blocks, last, inst.dataset, 30);
  s.final_order = repaired;
  s.trace = trace;
  s.final_mse = trace.rounds.back().mse;

  // Adjacent swaps fix local disorder but stall on long-range misplacements;
  // alternate remove-and-reinsert sweeps with swap repair until the target is
  // reached or a joint fixed point is hit.
  for (int cycle = 0; cycle < 10 && s.final_mse > kMseTarget; ++cycle) {
    s.escalated = true;
    auto [moved, rtrace] = rlp::relocation_repair(s.final_order, blocks, last, inst.dataset, n_cmp, 1);
    const bool any_moves = rtrace.total_swaps() > 0;
    append_trace(rtrace);
    s.final_order = moved;
    s.final_mse = rtrace.rounds.back().mse;

    auto [resorted, btrace] = rlp::bubble_repair(s.final_order, blocks, last, inst.dataset, 4);
    const bool any_swaps = btrace.total_swaps() > 0;
    append_trace(btrace);
    s.final_order = resorted;
    s.final_mse = btrace.rounds.back().mse;
    if (!any_moves && !any_swaps) break;
    if (g.verbosity > 1 && !g.json_out)
      std::printf("escalation cycle %d  MSE %.3e\n", cycle + 1, s.final_mse);
  }

  // Make sure a successful trace ends with a clean zero-swap sweep.
  if (s.final_mse <= kMseTarget && s.trace.rounds.back().swaps != 0) {
    auto [polished, ptrace] = rlp::bubble_repair(s.final_order, blocks, last, inst.dataset, 4);
    append_trace(ptrace);
    s.final_order = polished;
    s.final_mse = ptrace.rounds.back().mse;
  }

  // Last resort: widened swap window.
  if (s.final_mse > kMseTarget) {
    auto [widened, wtrace] = rlp::windowed_repair(s.final_order, blocks, last, inst.dataset, 3, 15);
    if (wtrace.rounds.back().mse < s.final_mse) {
      s.final_order = widened;
      s.final_mse = wtrace.rounds.back().mse;
      append_trace(wtrace);
    }
  }
  s.converged = s.final_mse <= kMseTarget && s.trace.rounds.back().swaps == 0;
  if (g.verbosity > 0 && !g.json_out)
    std::printf("final MSE           %.12g  (%d rounds, %d swaps%s)\n", s.final_mse,
                static_cast<int>(s.trace.rounds.size()) - 1, s.trace.total_swaps(),
                s.escalated ? ", windowed escalation" : "");
  return s;
}

void write_trace_csv(const rlp::RepairTrace& t, const std::string& path) {
  std::ofstream f(path);
  f << "round,swaps,mse,cumulative_swaps\n";
  int cum = 0;
  for (const auto& r : t.rounds) {
    cum += r.swaps;
    f << r.round << ',';
    if (r.round == 0)
      f << '-';
    else
      f << r.swaps;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9f", r.mse);
    f << ',' << buf << ',' << cum << '\n';
  }
}

json pairing_to_json(const rlp::PairingResult& pr) {
  json j;
  j["pairs"] = json::array();
  for (size_t i = 0; i < pr.id_pairs.size(); ++i)
    j["pairs"].push_back(
        {{"in_id", pr.id_pairs[i].first}, {"out_id", pr.id_pairs[i].second}, {"score", pr.pair_scores[i]}});
  j["separation"] = {{"min_matched", pr.separation.min_matched},
                     {"max_unmatched", pr.separation.max_unmatched},
                     {"gap", pr.separation.gap}};
  return j;
}

// ---------------------------------------------------------------- commands

int cmd_generate(const std::string& out_dir, rlp::TrainConfig cfg, int rows, const GlobalOpts& g) {
  rlp::Dataset ds = rlp::synthesize_dataset(rows, cfg.seed, cfg.in_dim);
  rlp::TrainResult tr = rlp::train_network(cfg, ds);
  // Independent stream for the id shuffle.
  rlp::PuzzleInstance inst = rlp::shuffle_and_export(tr.net, ds, cfg.seed ^ 0xA5A5A5A5A5A5A5A5ull, out_dir);

  rlp::TraceReport traces = rlp::trace_report(tr.net.blocks);
  if (g.json_out) {
    json j{{"instance", out_dir},
           {"train_mse_truth", tr.final_mse_truth},
           {"negative_traces", traces.negative},
           {"blocks", static_cast<int>(tr.net.blocks.size())}};
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("wrote instance      %s\n", out_dir.c_str());
    std::printf("train MSE (truth)   %.6f\n", tr.final_mse_truth);
    std::printf("negative traces     %d/%d\n", traces.negative, static_cast<int>(tr.net.blocks.size()));
  }
  return 0;
}

int cmd_pair(const std::string& instance_dir, const std::string& out_file, const GlobalOpts& g) {
  rlp::Instance inst = rlp::read_instance(instance_dir);
  rlp::PairingResult pr = rlp::pair_blocks(inst.pieces);
  json j = pairing_to_json(pr);
  if (!out_file.empty()) {
    std::ofstream f(out_file);
    f << j.dump(2) << "\n";
  }
  if (g.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::printf("pairs %zu  min matched %.4f  max unmatched %.4f  gap %.4f\n", pr.id_pairs.size(),
                pr.separation.min_matched, pr.separation.max_unmatched, pr.separation.gap);
  return 0;
}

int cmd_solve(const std::string& instance_dir, const std::string& out_file, const std::string& trace_file,
              rlp::SeedStrategy strategy, bool use_bt, int n_cmp, double temperature, const GlobalOpts& g) {
  const auto t0 = std::chrono::steady_clock::now();
  rlp::Instance inst = rlp::read_instance(instance_dir);
  PipelineSummary s = run_pipeline(inst, strategy, use_bt, n_cmp, temperature, g);
  rlp::Solution sol = to_solution(s);
  rlp::validate_solution(sol, static_cast<int>(sol.pairs.size()));
  if (!out_file.empty()) rlp::write_solution(sol, out_file);
  if (!trace_file.empty()) write_trace_csv(s.trace, trace_file);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (g.json_out) {
    json j{{"seed_mse", s.seed_mse},       {"final_mse", s.final_mse},
           {"rounds", static_cast<int>(s.trace.rounds.size()) - 1},
           {"swaps", s.trace.total_swaps()}, {"converged", s.converged},
           {"escalated", s.escalated},     {"separation_gap", s.pairing.separation.gap},
           {"seconds", secs}};
    if (s.bt_mse >= 0) j["bt_mse"] = s.bt_mse;
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("solved in           %.1f s\n", secs);
  }
  return s.converged ? 0 : kExitUnconverged;
}

int cmd_verify(const std::string& instance_dir, const std::string& solution_file, bool against_sealed,
               const GlobalOpts& g) {
  rlp::Instance inst = rlp::read_instance(instance_dir);
  rlp::Solution sol = rlp::read_solution(solution_file);
  rlp::Network net = rlp::assemble(inst, sol);
  const double mse_pred = rlp::mse(net, inst.dataset, inst.dataset.rows(), rlp::Target::Pred);
  const double mse_truth = rlp::mse(net, inst.dataset, inst.dataset.rows(), rlp::Target::Truth);

  bool sealed_match = true;
  if (against_sealed) {
    rlp::Solution sealed = rlp::read_solution(std::filesystem::path(instance_dir) / "solution.sealed.json");
    sealed_match = sol.flat() == sealed.flat();
  }

  if (g.json_out) {
    json j{{"mse_pred", mse_pred}, {"mse_truth", mse_truth}, {"pass", mse_pred <= kMseTarget}};
    if (against_sealed) j["sealed_match"] = sealed_match;
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("MSE vs pred         %.12g\n", mse_pred);
    std::printf("MSE vs truth        %.6f\n", mse_truth);
    if (against_sealed) std::printf("sealed match        %s\n", sealed_match ? "yes" : "no");
  }
  return (mse_pred <= kMseTarget && sealed_match) ? 0 : 1;
}

int cmd_report(const std::string& instance_dir, const std::string& out_prefix, const GlobalOpts& g) {
  rlp::Instance inst = rlp::read_instance(instance_dir);
  rlp::PairingResult pr = rlp::pair_blocks(inst.pieces);
  rlp::TheoryReport rep = rlp::theory_report(pr.blocks, inst.dataset, pr.separation.gap);
  std::vector<double> iso = rlp::isometry_residual(pr.blocks, inst.dataset);

  json j{{"negative_traces", rep.negative_traces},
         {"separation_gap", rep.separation_gap},
         {"random_baseline_mean", rep.random_baseline_mean},
         {"traces", rep.traces},
         {"product_frobenius", rep.product_frob},
         {"dominance", rep.dominance},
         {"relu_fraction", rep.relu_fraction},
         {"isometry_residual", iso}};
  {
    std::ofstream f(out_prefix + ".json");
    f << j.dump(2) << "\n";
  }
  {
    std::ofstream f(out_prefix + ".csv");
    f << "block,trace,product_frobenius,dominance,relu_fraction,isometry_residual\n";
    for (size_t k = 0; k < rep.traces.size(); ++k)
      f << k << ',' << rep.traces[k] << ',' << rep.product_frob[k] << ',' << rep.dominance[k] << ','
        << rep.relu_fraction[k] << ',' << iso[k] << '\n';
  }
  if (g.json_out)
    std::cout << j.dump(2) << "\n";
  else
    std::printf("negative traces %d/%zu, separation gap %.4f, random baseline %.4f\n", rep.negative_traces,
                rep.traces.size(), rep.separation_gap, rep.random_baseline_mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dropped-ResNet reassembly toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_flag("--json", g.json_out, "machine-readable JSON output");
  app.add_option("--threads", g.threads, "upper bound on worker threads");
  app.add_option("-v,--verbosity", g.verbosity, "0 = quiet");

  // generate
  auto* gen = app.add_subcommand("generate", "train a network and export a shuffled instance");
  std::string gen_out;
  rlp::TrainConfig cfg;
  int rows = 10000;
  gen->add_option("--out", gen_out, "output instance directory")->required();
  gen->add_option("--seed", cfg.seed, "RNG seed");
  gen->add_option("--rows", rows, "dataset rows");
  gen->add_option("--blocks", cfg.blocks, "residual blocks");
  gen->add_option("--epochs", cfg.epochs, "training epochs");
  gen->add_option("--lr", cfg.lr, "Adam learning rate");
  gen->add_option("--batch", cfg.batch_size, "mini-batch size");

  // pair
  auto* pair = app.add_subcommand("pair", "match input/output projections");
  std::string pair_instance, pair_out;
  pair->add_option("--instance", pair_instance, "instance directory")->required();
  pair->add_option("--out", pair_out, "pairing JSON output file");

  // shared solve/order options
  std::string strategy_name = "delta-norm";
  std::string use_bt_name = "on";
  int n_cmp = 2000;
  double temperature = 0.001;

  auto add_order_opts = [&](CLI::App* sub) {
    sub->add_option("--seed-strategy", strategy_name, "delta-norm | frobenius-out")
        ->check(CLI::IsMember({"delta-norm", "frobenius-out"}));
    sub->add_option("--use-bt", use_bt_name, "on | off")->check(CLI::IsMember({"on", "off"}));
    sub->add_option("--n-cmp", n_cmp, "rows used per swap comparison");
    sub->add_option("--temperature", temperature, "Bradley-Terry sigmoid temperature");
  };

  // order
  auto* order = app.add_subcommand("order", "recover the block sequence");
  std::string order_instance, order_out, order_trace;
  order->add_option("--instance", order_instance, "instance directory")->required();
  order->add_option("--out", order_out, "ordering/solution JSON output");
  order->add_option("--trace", order_trace, "repair trace CSV output");
  add_order_opts(order);

  // solve
  auto* solve = app.add_subcommand("solve", "full pipeline: pair, seed, optional BT, repair");
  std::string solve_instance, solve_out, solve_trace;
  solve->add_option("--instance", solve_instance, "instance directory")->required();
  solve->add_option("--out", solve_out, "solution JSON output");
  solve->add_option("--trace", solve_trace, "repair trace CSV output");
  add_order_opts(solve);

  // verify
  auto* verify = app.add_subcommand("verify", "evaluate a solution against the recorded predictions");
  std::string verify_instance, verify_solution;
  bool against_sealed = false;
  verify->add_option("--instance", verify_instance, "instance directory")->required();
  verify->add_option("--solution", verify_solution, "solution JSON file")->required();
  verify->add_flag("--against-sealed", against_sealed, "also compare with solution.sealed.json");

  // report
  auto* report = app.add_subcommand("report", "per-block theory diagnostics");
  std::string report_instance, report_prefix = "theory_report";
  report->add_option("--instance", report_instance, "instance directory")->required();
  report->add_option("--out-prefix", report_prefix, "output file prefix (.json/.csv appended)");

  CLI11_PARSE(app, argc, argv);

  const auto strategy =
      strategy_name == "delta-norm" ? rlp::SeedStrategy::DeltaNorm : rlp::SeedStrategy::FrobeniusOut;
  const bool use_bt = use_bt_name == "on";

  try {
    if (gen->parsed()) return cmd_generate(gen_out, cfg, rows, g);
    if (pair->parsed()) return cmd_pair(pair_instance, pair_out, g);
    if (order->parsed()) return cmd_solve(order_instance, order_out, order_trace, strategy, use_bt, n_cmp, temperature, g);
    if (solve->parsed()) return cmd_solve(solve_instance, solve_out, solve_trace, strategy, use_bt, n_cmp, temperature, g);
    if (verify->parsed()) return cmd_verify(verify_instance, verify_solution, against_sealed, g);
    if (report->parsed()) return cmd_report(report_instance, report_prefix, g);
  } catch (const rlp::IoError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormatError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
