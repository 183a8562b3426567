// Block sequence recovery: seed orderings, pairwise swap gaps, Bradley-Terry
// strengths, and adjacent-swap hill climbing.
#pragma once

#include <array>
#include <utility>
#include <vector>

#include "rlp/model.hpp"

namespace rlp {

// A candidate solution: block order (indices into a PairedBlock list) plus the
// id of the (1,48) output piece.
struct Ordering {
  std::vector<int> sequence;
  int last_id = -1;
};

// Swap-induced MSE deltas, indexed by seed position. g(p,q) = MSE after
// swapping positions p,q minus seed MSE; symmetric, zero diagonal.
struct GapMatrix {
  Matrix g;
  int n_cmp = 0;
};

struct BTStrengths {
  std::vector<double> s;  // positive, geometric mean 1
  int iterations = 0;
  bool converged = false;
};

struct RepairRound {
  int round;
  int swaps;
  double mse;
};

struct RepairTrace {
  std::vector<RepairRound> rounds;  // rounds[0] is the starting state
  bool converged = false;
  int total_swaps() const;
};

struct TransitivityReport {
  long violations = 0;
  std::vector<std::array<int, 3>> cycles;  // seed positions, a < b < c
};

enum class SeedStrategy { DeltaNorm, FrobeniusOut };

Network make_network(const std::vector<PairedBlock>& blocks, const Ordering& o, const Piece& last);

// Mean residual magnitude per block, measured on raw inputs.
std::vector<double> delta_norms(const std::vector<PairedBlock>& blocks, const Dataset& ds);

// Ascending sort by the chosen statistic; DeltaNorm needs a dataset.
Ordering seed_order(const std::vector<PairedBlock>& blocks, SeedStrategy strategy, const Dataset* ds, int last_id);

GapMatrix swap_gap_matrix(const Ordering& seed, const std::vector<PairedBlock>& blocks, const Piece& last,
                          const Dataset& ds, int n_cmp = 2000);

// Hunter's MM iteration on sigmoid(g/T) win weights. Positions earlier in the
// seed win a pair when the swap raises MSE.
BTStrengths bt_fit(const GapMatrix& gaps, double temperature = 0.001);

// Descending strength = earlier position; ties keep seed order.
Ordering bt_order(const BTStrengths& strengths, const Ordering& seed);

TransitivityReport count_transitivity_violations(const GapMatrix& gaps);

// Greedy adjacent-swap hill climbing on full-dataset MSE; a swap is kept only
// if MSE improves by more than 1e-15. Stops after a zero-swap sweep.
std::pair<Ordering, RepairTrace> bubble_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                               const Piece& last, const Dataset& ds, int max_rounds = 100);

// Same acceptance rule, but tries swaps at position distance <= window.
// Escalation path for when adjacent swaps stall in a local minimum.
std::pair<Ordering, RepairTrace> windowed_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                                 const Piece& last, const Dataset& ds, int window = 3,
                                                 int max_rounds = 100);

// Remove-and-reinsert sweeps: every block is tried at every other position.
// Insertions are scored on the first n_eval rows; a move is committed only if
// it also lowers the full-dataset MSE, so the recorded trace stays monotone.
// Fixes long-range misplacements that swap-based repair cannot reach.
std::pair<Ordering, RepairTrace> relocation_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                                   const Piece& last, const Dataset& ds, int n_eval = 2000,
                                                   int max_rounds = 30);

}  // namespace rlp
