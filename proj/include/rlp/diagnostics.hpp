// Theory checks on reassembled blocks: trace signs, dominance separation,
// ReLU activity, and random-pairing baselines.
#pragma once

#include <cstdint>
#include <vector>

#include "rlp/model.hpp"

namespace rlp {

struct TheoryReport {
  std::vector<double> traces;          // tr(W_out * W_in) per block
  std::vector<double> product_frob;    // ||W_out * W_in||_F per block
  std::vector<double> dominance;       // d(k,k) per block
  std::vector<double> relu_fraction;   // per block, on the given dataset
  int negative_traces = 0;
  double separation_gap = 0;           // min matched - max unmatched dominance
  double random_baseline_mean = 0;
};

struct TraceReport {
  std::vector<double> traces;
  int negative = 0;
};

TraceReport trace_report(const std::vector<PairedBlock>& blocks);

// Residual of the dynamic-isometry trace identity per block:
// |2 E[tr(J_r)] + E[||J_r||_F^2]| over at most max_rows dataset rows.
std::vector<double> isometry_residual(const std::vector<PairedBlock>& blocks, const Dataset& ds,
                                      int max_rows = 1000);

// ReLU gate Jacobian of the residual branch at x: W_out * D(x) * W_in.
Matrix residual_jacobian(const PairedBlock& b, const Vector& x);

struct BaselineStats {
  double mean = 0;
  double stddev = 0;
  double stderr_mean = 0;
};

// Monte-Carlo dominance ratio for independent N(0,1) factor pairs.
BaselineStats random_baseline(int d, int h, int trials, uint64_t seed = 12345);

TheoryReport theory_report(const std::vector<PairedBlock>& blocks, const Dataset& ds, double separation_gap,
                           int baseline_trials = 1000);

}  // namespace rlp
