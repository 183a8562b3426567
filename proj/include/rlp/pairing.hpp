// Input/output projection matching via the diagonal dominance ratio.
#pragma once

#include <vector>

#include "rlp/model.hpp"

namespace rlp {

// scores(i, j) = dominance ratio for input piece i against output piece j.
struct DominanceMatrix {
  Matrix scores;
  std::vector<int> in_ids;   // row -> piece id
  std::vector<int> out_ids;  // col -> piece id
};

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col) indices
  double total_score = 0;
};

struct SeparationReport {
  double min_matched = 0;
  double max_unmatched = 0;
  double gap = 0;  // min_matched - max_unmatched
};

// |tr(w_out * w_in)| / ||w_out * w_in||_F; 0 when the product vanishes.
double dominance_ratio(const Matrix& w_out, const Matrix& w_in);

DominanceMatrix dominance_matrix(const std::vector<Piece>& inputs, const std::vector<Piece>& outputs);

// Perfect matching maximizing total score, O(n^3). Ties broken toward lower column index.
Assignment hungarian_assign(const Matrix& scores);

// Row-wise argmax among unused columns, rows visited in descending max-score order.
Assignment greedy_assign(const Matrix& scores);

struct PairingResult {
  std::vector<PairedBlock> blocks;
  std::vector<std::pair<int, int>> id_pairs;  // (in_id, out_id)
  std::vector<double> pair_scores;
  SeparationReport separation;
};

// Splits pieces by shape, scores all candidates, solves the assignment.
PairingResult pair_blocks(const std::vector<Piece>& pieces);

}  // namespace rlp
