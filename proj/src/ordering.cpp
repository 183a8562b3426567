#include "rlp/ordering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rlp {

namespace {

constexpr double kSwapTol = 1e-15;  // MSE improvement below this is float noise

Matrix input_states(const Dataset& ds, int n_rows) {
  Matrix s(n_rows, ds.x.cols());
  for (int r = 0; r < n_rows; ++r) {
    auto src = ds.x.row(r);
    std::copy(src.begin(), src.end(), s.row(r).begin());
  }
  return s;
}

void copy_states(const Matrix& from, Matrix& to) { to = from; }

// Applies blocks at positions [p, n) of `order` to `states`, with positions a
// and b exchanged (pass a == b for no swap), then returns the sum of squared
// errors of the last layer against `target`.
double tail_sse(const std::vector<PairedBlock>& blocks, const std::vector<int>& order, int p, int a, int b,
                const Piece& last, Matrix& states, std::span<const double> target) {
  const int n = static_cast<int>(order.size());
  for (int q = p; q < n; ++q) {
    int idx = q;
    if (q == a) idx = b;
    else if (q == b) idx = a;
    detail::apply_block_batch(blocks[order[idx]], states);
  }
  return detail::sum_sq_err(last, states, target);
}

}  // namespace

int RepairTrace::total_swaps() const {
  int s = 0;
  for (const RepairRound& r : rounds) s += r.swaps;
  return s;
}

Network make_network(const std::vector<PairedBlock>& blocks, const Ordering& o, const Piece& last) {
  Network net;
  for (int idx : o.sequence) net.blocks.push_back(blocks[idx]);
  net.last = last;
  return net;
}

std::vector<double> delta_norms(const std::vector<PairedBlock>& blocks, const Dataset& ds) {
  if (ds.rows() < 1) throw std::invalid_argument("delta_norms: empty dataset");
  std::vector<double> out(blocks.size(), 0.0);
  std::vector<double> state, hidden, x;
  for (size_t k = 0; k < blocks.size(); ++k) {
    const PairedBlock& b = blocks[k];
    hidden.assign(b.in_piece.weight.rows(), 0.0);
    double acc = 0;
    for (int r = 0; r < ds.rows(); ++r) {
      auto row = ds.x.row(r);
      state.assign(row.begin(), row.end());
      detail::apply_block_row(b, state, hidden);
      double s = 0;
      for (size_t i = 0; i < state.size(); ++i) {
        const double d = state[i] - row[i];
        s += d * d;
      }
      acc += std::sqrt(s);
    }
    out[k] = acc / ds.rows();
  }
  return out;
}

Ordering seed_order(const std::vector<PairedBlock>& blocks, SeedStrategy strategy, const Dataset* ds, int last_id) {
  std::vector<double> stat;
  if (strategy == SeedStrategy::DeltaNorm) {
    if (ds == nullptr) throw std::invalid_argument("seed_order: delta-norm strategy requires a dataset");
    stat = delta_norms(blocks, *ds);
  } else {
    for (const PairedBlock& b : blocks) stat.push_back(frobenius_norm(b.out_piece.weight));
  }
  Ordering o;
  o.last_id = last_id;
  o.sequence.resize(blocks.size());
  std::iota(o.sequence.begin(), o.sequence.end(), 0);
  std::stable_sort(o.sequence.begin(), o.sequence.end(), [&](int a, int b) { return stat[a] < stat[b]; });
  return o;
}

GapMatrix swap_gap_matrix(const Ordering& seed, const std::vector<PairedBlock>& blocks, const Piece& last,
                          const Dataset& ds, int n_cmp) {
  const int n = static_cast<int>(seed.sequence.size());
  if (n_cmp < 1 || n_cmp > ds.rows()) throw std::invalid_argument("swap_gap_matrix: n_cmp out of range");

  // Prefix states of the seed ordering at every position, on the n_cmp prefix.
  std::vector<Matrix> prefix;
  prefix.reserve(n + 1);
  prefix.push_back(input_states(ds, n_cmp));
  for (int p = 0; p < n; ++p) {
    prefix.push_back(prefix.back());
    detail::apply_block_batch(blocks[seed.sequence[p]], prefix.back());
  }
  const std::span<const double> target(ds.pred.data(), static_cast<size_t>(n_cmp));
  const double seed_mse = detail::sum_sq_err(last, prefix[n], target) / n_cmp;

  GapMatrix gm;
  gm.g = Matrix(n, n);
  gm.n_cmp = n_cmp;
  Matrix scratch;
  for (int p = 0; p < n; ++p) {
    for (int q = p + 1; q < n; ++q) {
      copy_states(prefix[p], scratch);
      const double sse = tail_sse(blocks, seed.sequence, p, p, q, last, scratch, target);
      const double gap = sse / n_cmp - seed_mse;
      gm.g(p, q) = gap;
      gm.g(q, p) = gap;
    }
  }
  return gm;
}

BTStrengths bt_fit(const GapMatrix& gaps, double temperature) {
  if (temperature <= 0) throw std::invalid_argument("bt_fit: temperature must be positive");
  const int n = gaps.g.rows();
  constexpr double kClamp = 1e-12;  // keep win weights off the exact 0/1 boundary

  // w(i,j): soft probability that position i should come before position j.
  Matrix w(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double p = 1.0 / (1.0 + std::exp(-gaps.g(i, j) / temperature));
      p = std::clamp(p, kClamp, 1.0 - kClamp);
      w(i, j) = p;
      w(j, i) = 1.0 - p;
    }
  }

  BTStrengths bt;
  bt.s.assign(n, 1.0);
  std::vector<double> next(n);
  for (int it = 1; it <= 10000; ++it) {
    double max_rel = 0;
    for (int i = 0; i < n; ++i) {
      double num = 0, den = 0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        num += w(i, j);
        den += (w(i, j) + w(j, i)) / (bt.s[i] + bt.s[j]);
      }
      next[i] = num / den;
    }
    // Renormalize to geometric mean 1.
    double log_sum = 0;
    for (double v : next) {
      if (!(v > 0) || !std::isfinite(v)) throw std::runtime_error("bt_fit: non-finite MM update");
      log_sum += std::log(v);
    }
    const double scale = std::exp(-log_sum / n);
    for (int i = 0; i < n; ++i) {
      next[i] *= scale;
      max_rel = std::max(max_rel, std::abs(next[i] - bt.s[i]) / bt.s[i]);
    }
    bt.s = next;
    bt.iterations = it;
    if (max_rel < 1e-10) {
      bt.converged = true;
      break;
    }
  }
  return bt;
}

Ordering bt_order(const BTStrengths& strengths, const Ordering& seed) {
  const int n = static_cast<int>(seed.sequence.size());
  if (static_cast<int>(strengths.s.size()) != n) throw std::invalid_argument("bt_order: size mismatch");
  std::vector<int> positions(n);
  std::iota(positions.begin(), positions.end(), 0);
  std::stable_sort(positions.begin(), positions.end(),
                   [&](int a, int b) { return strengths.s[a] > strengths.s[b]; });
  Ordering o;
  o.last_id = seed.last_id;
  for (int p : positions) o.sequence.push_back(seed.sequence[p]);
  return o;
}

TransitivityReport count_transitivity_violations(const GapMatrix& gaps) {
  const int n = gaps.g.rows();
  // beats(i,j) for i < j: does the earlier seed position keep its spot?
  auto earlier_wins = [&](int i, int j) { return gaps.g(i, j) > 0; };
  TransitivityReport rep;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const bool ab = earlier_wins(a, b);  // true: a before b
      for (int c = b + 1; c < n; ++c) {
        const bool bc = earlier_wins(b, c);
        const bool ac = earlier_wins(a, c);
        // A 3-tournament is cyclic iff the relation is not transitive:
        // a->b->c->a or a->c->b->a.
        const bool cyclic = (ab && bc && !ac) || (!ab && !bc && ac);
        if (cyclic) {
          ++rep.violations;
          rep.cycles.push_back({a, b, c});
        }
      }
    }
  }
  return rep;
}

namespace {

std::pair<Ordering, RepairTrace> repair_impl(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                             const Piece& last, const Dataset& ds, int window, int max_rounds) {
  const int n = static_cast<int>(start.sequence.size());
  const int n_rows = ds.rows();
  const std::span<const double> target(ds.pred.data(), static_cast<size_t>(n_rows));

  Ordering cur = start;

  const Matrix x0 = input_states(ds, n_rows);
  Matrix prefix, scratch;
  copy_states(x0, prefix);
  double cur_sse = tail_sse(blocks, cur.sequence, 0, 0, 0, last, prefix, target);

  RepairTrace trace;
  trace.rounds.push_back({0, 0, cur_sse / n_rows});

  for (int round = 1; round <= max_rounds; ++round) {
    int swaps = 0;
    copy_states(x0, prefix);  // states before position p
    for (int p = 0; p < n - 1; ++p) {
      const int q_hi = std::min(n - 1, p + window);
      for (int q = p + 1; q <= q_hi; ++q) {
        copy_states(prefix, scratch);
        const double trial_sse = tail_sse(blocks, cur.sequence, p, p, q, last, scratch, target);
        if (cur_sse - trial_sse > kSwapTol * n_rows) {
          std::swap(cur.sequence[p], cur.sequence[q]);
          cur_sse = trial_sse;
          ++swaps;
        }
      }
      // Advance the prefix past position p under the (possibly updated) order.
      detail::apply_block_batch(blocks[cur.sequence[p]], prefix);
    }
    trace.rounds.push_back({round, swaps, cur_sse / n_rows});
    if (swaps == 0) {
      trace.converged = true;
      break;
    }
  }
  return {cur, trace};
}

}  // namespace

std::pair<Ordering, RepairTrace> bubble_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                               const Piece& last, const Dataset& ds, int max_rounds) {
  return repair_impl(start, blocks, last, ds, /*window=*/1, max_rounds);
}

std::pair<Ordering, RepairTrace> windowed_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                                 const Piece& last, const Dataset& ds, int window, int max_rounds) {
  return repair_impl(start, blocks, last, ds, window, max_rounds);
}

std::pair<Ordering, RepairTrace> relocation_repair(const Ordering& start, const std::vector<PairedBlock>& blocks,
                                                   const Piece& last, const Dataset& ds, int n_eval,
                                                   int max_rounds) {
  const int n = static_cast<int>(start.sequence.size());
  if (n_eval < 1) throw std::invalid_argument("relocation_repair: n_eval must be >= 1");
  const int m = std::min(n_eval, ds.rows());
  const int n_rows = ds.rows();
  const std::span<const double> target_m(ds.pred.data(), static_cast<size_t>(m));
  const std::span<const double> target_full(ds.pred.data(), static_cast<size_t>(n_rows));

  Ordering cur = start;
  const Matrix x0m = input_states(ds, m);
  const Matrix x0full = input_states(ds, n_rows);
  Matrix scratch;

  copy_states(x0full, scratch);
  double cur_full_sse = tail_sse(blocks, cur.sequence, 0, 0, 0, last, scratch, target_full);

  RepairTrace trace;
  trace.rounds.push_back({0, 0, cur_full_sse / n_rows});

  std::vector<Matrix> pre(n);  // pre[q]: subset states after q blocks of `rest`
  std::vector<int> rest, cand;
  for (int round = 1; round <= max_rounds; ++round) {
    int moves = 0;
    for (int p = 0; p < n; ++p) {
      const int blk = cur.sequence[p];
      rest = cur.sequence;
      rest.erase(rest.begin() + p);

      pre[0] = x0m;
      for (int q = 1; q < n; ++q) {
        pre[q] = pre[q - 1];
        detail::apply_block_batch(blocks[rest[q - 1]], pre[q]);
      }

      double best_sse = 0, cur_sub_sse = 0;
      int best_q = -1;
      for (int q = 0; q < n; ++q) {
        copy_states(pre[q], scratch);
        detail::apply_block_batch(blocks[blk], scratch);
        for (int j = q; j < n - 1; ++j) detail::apply_block_batch(blocks[rest[j]], scratch);
        const double sse = detail::sum_sq_err(last, scratch, target_m);
        if (q == p) cur_sub_sse = sse;
        if (best_q < 0 || sse < best_sse) {
          best_sse = sse;
          best_q = q;
        }
      }
      if (best_q == p || cur_sub_sse - best_sse <= kSwapTol * m) continue;

      // Commit only when the move also helps on the full dataset.
      cand = rest;
      cand.insert(cand.begin() + best_q, blk);
      copy_states(x0full, scratch);
      const double cand_full_sse = tail_sse(blocks, cand, 0, 0, 0, last, scratch, target_full);
      if (cur_full_sse - cand_full_sse > kSwapTol * n_rows) {
        cur.sequence = cand;
        cur_full_sse = cand_full_sse;
        ++moves;
      }
    }
    trace.rounds.push_back({round, moves, cur_full_sse / n_rows});
    if (moves == 0) {
      trace.converged = true;
      break;
    }
  }
  return {cur, trace};
}

}  // namespace rlp
