// Pieces, blocks, assembled networks, and the MSE objective.
#pragma once

#include <span>
#include <vector>

#include "rlp/linalg.hpp"

namespace rlp {

constexpr int kInDim = 48;
constexpr int kHiddenDim = 96;

// One unlabeled linear layer: weight matrix + bias, with a stable id.
struct Piece {
  int id = -1;
  Matrix weight;
  Vector bias;
};

enum class PieceKind { InputProj, OutputProj, Last, Unknown };

PieceKind classify_piece(const Piece& p);

// A matched (input-projection, output-projection) pair forming one residual block.
struct PairedBlock {
  Piece in_piece;   // (hidden, in)
  Piece out_piece;  // (in, hidden)
};

struct Network {
  std::vector<PairedBlock> blocks;
  Piece last;  // (1, in)
};

struct Dataset {
  Matrix x;      // N x in_dim
  Vector pred;   // original model outputs (may be empty until filled)
  Vector truth;  // ground-truth targets
  int rows() const { return x.rows(); }
};

enum class Target { Pred, Truth };

// x + W_out * relu(W_in * x + b_in) + b_out
Vector block_forward(const PairedBlock& b, const Vector& x);

double network_forward(const Network& net, const Vector& x);

// Mean squared error over the first n_points rows against the chosen column.
double mse(const Network& net, const Dataset& ds, int n_points, Target target);

// Mean over rows and hidden units of 1[pre-activation > 0].
double relu_active_fraction(const PairedBlock& b, const Dataset& ds);

namespace detail {

// In-place batch propagation: every row of `states` is advanced through the block.
// `hidden` is caller-provided scratch of length b.in_piece.weight.rows().
void apply_block_row(const PairedBlock& b, std::span<double> state, std::span<double> hidden);
void apply_block_batch(const PairedBlock& b, Matrix& states);

double last_layer_row(const Piece& last, std::span<const double> state);

// Sum of squared errors of last(states) against target rows [0, states.rows()).
double sum_sq_err(const Piece& last, const Matrix& states, std::span<const double> target);

}  // namespace detail

}  // namespace rlp
