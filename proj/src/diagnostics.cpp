#include "rlp/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "rlp/generator.hpp"
#include "rlp/pairing.hpp"

namespace rlp {

TraceReport trace_report(const std::vector<PairedBlock>& blocks) {
  TraceReport rep;
  for (const PairedBlock& b : blocks) {
    const double t = trace(matmul(b.out_piece.weight, b.in_piece.weight));
    rep.traces.push_back(t);
    if (t < 0) ++rep.negative;
  }
  return rep;
}

Matrix residual_jacobian(const PairedBlock& b, const Vector& x) {
  const Matrix& w_in = b.in_piece.weight;
  const Matrix& w_out = b.out_piece.weight;
  const int h = w_in.rows();
  // Gated copy of W_in, then W_out * (D W_in).
  Matrix gated(h, w_in.cols());
  for (int j = 0; j < h; ++j) {
    if (dot(w_in.row(j), x) + b.in_piece.bias[j] > 0) {
      auto src = w_in.row(j);
      std::copy(src.begin(), src.end(), gated.row(j).begin());
    }
  }
  return matmul(w_out, gated);
}

std::vector<double> isometry_residual(const std::vector<PairedBlock>& blocks, const Dataset& ds, int max_rows) {
  const int rows = std::min(max_rows, ds.rows());
  std::vector<double> out;
  for (const PairedBlock& b : blocks) {
    // Gram matrices let us get tr(J_r) and ||J_r||_F^2 from the active set
    // without forming J_r per row.
    const Matrix p_in_out = matmul(b.in_piece.weight, b.out_piece.weight);     // h x h
    const Matrix g_out = matmul(transpose(b.out_piece.weight), b.out_piece.weight);  // h x h
    const Matrix g_in = matmul(b.in_piece.weight, transpose(b.in_piece.weight));     // h x h
    const int h = b.in_piece.weight.rows();

    std::vector<int> active;
    double sum_tr = 0, sum_frob2 = 0;
    for (int r = 0; r < rows; ++r) {
      auto x = ds.x.row(r);
      active.clear();
      for (int j = 0; j < h; ++j)
        if (dot(b.in_piece.weight.row(j), x) + b.in_piece.bias[j] > 0) active.push_back(j);
      double tr_j = 0, frob2 = 0;
      for (int k : active) {
        tr_j += p_in_out(k, k);
        for (int l : active) frob2 += g_out(k, l) * g_in(l, k);
      }
      sum_tr += tr_j;
      sum_frob2 += frob2;
    }
    out.push_back(std::abs(2.0 * sum_tr / rows + sum_frob2 / rows));
  }
  return out;
}

BaselineStats random_baseline(int d, int h, int trials, uint64_t seed) {
  Rng rng(seed);
  double sum = 0, sum2 = 0;
  for (int t = 0; t < trials; ++t) {
    Matrix w_out(d, h), w_in(h, d);
    for (double& v : w_out.flat()) v = rng.normal();
    for (double& v : w_in.flat()) v = rng.normal();
    const double r = dominance_ratio(w_out, w_in);
    sum += r;
    sum2 += r * r;
  }
  BaselineStats s;
  s.mean = sum / trials;
  s.stddev = std::sqrt(std::max(0.0, sum2 / trials - s.mean * s.mean));
  s.stderr_mean = s.stddev / std::sqrt(static_cast<double>(trials));
  return s;
}

TheoryReport theory_report(const std::vector<PairedBlock>& blocks, const Dataset& ds, double separation_gap,
                           int baseline_trials) {
  TheoryReport rep;
  for (const PairedBlock& b : blocks) {
    const Matrix prod = matmul(b.out_piece.weight, b.in_piece.weight);
    const double t = trace(prod);
    rep.traces.push_back(t);
    if (t < 0) ++rep.negative_traces;
    const double fn = frobenius_norm(prod);
    rep.product_frob.push_back(fn);
    rep.dominance.push_back(fn > 0 ? std::abs(t) / fn : 0.0);
    rep.relu_fraction.push_back(relu_active_fraction(b, ds));
  }
  rep.separation_gap = separation_gap;
  rep.random_baseline_mean = random_baseline(blocks.empty() ? kInDim : blocks[0].out_piece.weight.rows(),
                                             blocks.empty() ? kHiddenDim : blocks[0].in_piece.weight.rows(),
                                             baseline_trials)
                                 .mean;
  return rep;
}

}  // namespace rlp
