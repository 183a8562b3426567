#include "rlp/pairing.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rlp {

double dominance_ratio(const Matrix& w_out, const Matrix& w_in) {
  if (w_out.cols() != w_in.rows() || w_out.rows() != w_in.cols())
    throw std::invalid_argument("dominance_ratio: incompatible projection shapes");
  const Matrix prod = matmul(w_out, w_in);
  const double denom = frobenius_norm(prod);
  if (denom == 0.0) return 0.0;
  return std::abs(trace(prod)) / denom;
}

DominanceMatrix dominance_matrix(const std::vector<Piece>& inputs, const std::vector<Piece>& outputs) {
  if (inputs.size() != outputs.size() || inputs.empty())
    throw std::invalid_argument("dominance_matrix: need equally many input and output projections");
  for (const Piece& p : inputs)
    if (classify_piece(p) != PieceKind::InputProj)
      throw std::invalid_argument("dominance_matrix: piece " + std::to_string(p.id) + " is not an input projection");
  for (const Piece& p : outputs)
    if (classify_piece(p) != PieceKind::OutputProj)
      throw std::invalid_argument("dominance_matrix: piece " + std::to_string(p.id) + " is not an output projection");

  const int n = static_cast<int>(inputs.size());
  DominanceMatrix dm;
  dm.scores = Matrix(n, n);
  for (int i = 0; i < n; ++i) dm.in_ids.push_back(inputs[i].id);
  for (int j = 0; j < n; ++j) dm.out_ids.push_back(outputs[j].id);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) dm.scores(i, j) = dominance_ratio(outputs[j].weight, inputs[i].weight);
  return dm;
}

Assignment hungarian_assign(const Matrix& scores) {
  if (scores.rows() != scores.cols()) throw std::invalid_argument("hungarian_assign: score table must be square");
  const int n = scores.rows();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  // Kuhn-Munkres with potentials, 1-based, minimizing negated scores.
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -scores(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  Assignment a;
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) row_to_col[p[j] - 1] = j - 1;
  for (int i = 0; i < n; ++i) {
    a.pairs.emplace_back(i, row_to_col[i]);
    a.total_score += scores(i, row_to_col[i]);
  }
  return a;
}

Assignment greedy_assign(const Matrix& scores) {
  if (scores.rows() != scores.cols()) throw std::invalid_argument("greedy_assign: score table must be square");
  const int n = scores.rows();
  std::vector<int> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  auto row_max = [&](int i) {
    double m = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) m = std::max(m, scores(i, j));
    return m;
  };
  std::stable_sort(rows.begin(), rows.end(), [&](int a, int b) { return row_max(a) > row_max(b); });

  Assignment a;
  std::vector<char> used(n, 0);
  std::vector<int> row_to_col(n, -1);
  for (int i : rows) {
    int best = -1;
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      if (best < 0 || scores(i, j) > scores(i, best)) best = j;
    }
    used[best] = 1;
    row_to_col[i] = best;
    a.total_score += scores(i, best);
  }
  for (int i = 0; i < n; ++i) a.pairs.emplace_back(i, row_to_col[i]);
  return a;
}

PairingResult pair_blocks(const std::vector<Piece>& pieces) {
  std::vector<Piece> inputs, outputs;
  for (const Piece& p : pieces) {
    switch (classify_piece(p)) {
      case PieceKind::InputProj: inputs.push_back(p); break;
      case PieceKind::OutputProj: outputs.push_back(p); break;
      default: break;
    }
  }
  DominanceMatrix dm = dominance_matrix(inputs, outputs);
  Assignment a = hungarian_assign(dm.scores);

  const int n = static_cast<int>(inputs.size());
  PairingResult res;
  std::vector<std::vector<char>> matched(n, std::vector<char>(n, 0));
  res.separation.min_matched = std::numeric_limits<double>::infinity();
  for (auto [i, j] : a.pairs) {
    matched[i][j] = 1;
    PairedBlock b;
    b.in_piece = inputs[i];
    b.out_piece = outputs[j];
    res.blocks.push_back(std::move(b));
    res.id_pairs.emplace_back(dm.in_ids[i], dm.out_ids[j]);
    res.pair_scores.push_back(dm.scores(i, j));
    res.separation.min_matched = std::min(res.separation.min_matched, dm.scores(i, j));
  }
  res.separation.max_unmatched = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!matched[i][j]) res.separation.max_unmatched = std::max(res.separation.max_unmatched, dm.scores(i, j));
  res.separation.gap = res.separation.min_matched - res.separation.max_unmatched;
  return res;
}

}  // namespace rlp
