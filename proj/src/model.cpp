#include "rlp/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace rlp {

PieceKind classify_piece(const Piece& p) {
  const int r = p.weight.rows(), c = p.weight.cols();
  if (r == kHiddenDim && c == kInDim) return PieceKind::InputProj;
  if (r == kInDim && c == kHiddenDim) return PieceKind::OutputProj;
  if (r == 1 && c == kInDim) return PieceKind::Last;
  return PieceKind::Unknown;
}

namespace detail {

void apply_block_row(const PairedBlock& b, std::span<double> state, std::span<double> hidden) {
  const Matrix& w_in = b.in_piece.weight;
  const Matrix& w_out = b.out_piece.weight;
  const int h = w_in.rows();
  const int d = w_out.rows();
  for (int j = 0; j < h; ++j) {
    const double pre = dot(w_in.row(j), state) + b.in_piece.bias[j];
    hidden[j] = pre > 0.0 ? pre : 0.0;
  }
  for (int i = 0; i < d; ++i) state[i] += dot(w_out.row(i), hidden) + b.out_piece.bias[i];
}

namespace {

// One weight row against four state rows; amortizes the weight loads.
inline void dot4(const double* w, const double* x0, const double* x1, const double* x2, const double* x3, long n,
                 double out[4]) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
  for (long i = 0; i < n; ++i) {
    s0 += w[i] * x0[i];
    s1 += w[i] * x1[i];
    s2 += w[i] * x2[i];
    s3 += w[i] * x3[i];
  }
  out[0] = s0;
  out[1] = s1;
  out[2] = s2;
  out[3] = s3;
}

}  // namespace

void apply_block_batch(const PairedBlock& b, Matrix& states) {
  const Matrix& w_in = b.in_piece.weight;
  const Matrix& w_out = b.out_piece.weight;
  const int h = w_in.rows();
  const int d = w_out.rows();
  const int n_rows = states.rows();

  static thread_local std::vector<double> hidden4;
  hidden4.resize(static_cast<size_t>(4) * h);
  std::vector<double> hidden1(h);

  int r = 0;
  for (; r + 4 <= n_rows; r += 4) {
    double* s0 = states.row(r).data();
    double* s1 = states.row(r + 1).data();
    double* s2 = states.row(r + 2).data();
    double* s3 = states.row(r + 3).data();
    double pre[4];
    for (int j = 0; j < h; ++j) {
      dot4(w_in.row(j).data(), s0, s1, s2, s3, d, pre);
      const double bj = b.in_piece.bias[j];
      hidden4[j] = std::max(0.0, pre[0] + bj);
      hidden4[h + j] = std::max(0.0, pre[1] + bj);
      hidden4[2 * h + j] = std::max(0.0, pre[2] + bj);
      hidden4[3 * h + j] = std::max(0.0, pre[3] + bj);
    }
    double acc[4];
    for (int i = 0; i < d; ++i) {
      dot4(w_out.row(i).data(), hidden4.data(), hidden4.data() + h, hidden4.data() + 2 * h, hidden4.data() + 3 * h,
           h, acc);
      const double bi = b.out_piece.bias[i];
      s0[i] += acc[0] + bi;
      s1[i] += acc[1] + bi;
      s2[i] += acc[2] + bi;
      s3[i] += acc[3] + bi;
    }
  }
  for (; r < n_rows; ++r) apply_block_row(b, states.row(r), hidden1);
}

double last_layer_row(const Piece& last, std::span<const double> state) {
  return dot(last.weight.row(0), state) + last.bias[0];
}

double sum_sq_err(const Piece& last, const Matrix& states, std::span<const double> target) {
  double s = 0;
  for (int r = 0; r < states.rows(); ++r) {
    const double e = last_layer_row(last, states.row(r)) - target[r];
    s += e * e;
  }
  return s;
}

}  // namespace detail

Vector block_forward(const PairedBlock& b, const Vector& x) {
  if (static_cast<int>(x.size()) != b.in_piece.weight.cols())
    throw std::invalid_argument("block_forward: input length does not match W_in columns");
  if (b.out_piece.weight.cols() != b.in_piece.weight.rows() ||
      b.out_piece.weight.rows() != b.in_piece.weight.cols())
    throw std::invalid_argument("block_forward: W_in/W_out shapes are incompatible");
  Vector state = x;
  std::vector<double> hidden(b.in_piece.weight.rows());
  detail::apply_block_row(b, state, hidden);
  return state;
}

double network_forward(const Network& net, const Vector& x) {
  if (static_cast<int>(x.size()) != net.last.weight.cols())
    throw std::invalid_argument("network_forward: input length mismatch");
  Vector state = x;
  std::vector<double> hidden;
  for (const PairedBlock& b : net.blocks) {
    hidden.resize(b.in_piece.weight.rows());
    detail::apply_block_row(b, state, hidden);
  }
  return detail::last_layer_row(net.last, state);
}

double mse(const Network& net, const Dataset& ds, int n_points, Target target) {
  if (n_points < 1 || n_points > ds.rows()) throw std::invalid_argument("mse: n_points out of range");
  const Vector& t = target == Target::Pred ? ds.pred : ds.truth;
  if (static_cast<int>(t.size()) < n_points) throw std::invalid_argument("mse: target column too short");

  Matrix states(n_points, ds.x.cols());
  for (int r = 0; r < n_points; ++r) {
    auto dst = states.row(r);
    auto src = ds.x.row(r);
    std::copy(src.begin(), src.end(), dst.begin());
  }
  for (const PairedBlock& b : net.blocks) detail::apply_block_batch(b, states);
  return detail::sum_sq_err(net.last, states, {t.data(), static_cast<size_t>(n_points)}) / n_points;
}

double relu_active_fraction(const PairedBlock& b, const Dataset& ds) {
  const Matrix& w_in = b.in_piece.weight;
  const int h = w_in.rows();
  long active = 0;
  for (int r = 0; r < ds.rows(); ++r) {
    auto x = ds.x.row(r);
    for (int j = 0; j < h; ++j)
      if (dot(w_in.row(j), x) + b.in_piece.bias[j] > 0.0) ++active;
  }
  return static_cast<double>(active) / (static_cast<double>(ds.rows()) * h);
}

}  // namespace rlp
