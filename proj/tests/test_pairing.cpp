#include <stdexcept>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "rlp/pairing.hpp"

using namespace rlp;

namespace {

std::mt19937_64 g_gen(123);

Matrix gaussian(int rows, int cols, double std = 1.0) {
  std::normal_distribution<double> d(0.0, std);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = d(g_gen);
  return m;
}

// Brute-force assignment oracle: all n! permutations.
double best_total_score(const Matrix& scores) {
  const int n = scores.rows();
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = -1e300;
  do {
    double t = 0;
    for (int i = 0; i < n; ++i) t += scores(i, perm[i]);
    best = std::max(best, t);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Piece make_input_piece(int id, const Matrix& w) {
  Piece p;
  p.id = id;
  p.weight = w;
  p.bias.assign(w.rows(), 0.0);
  return p;
}

Piece make_output_piece(int id, const Matrix& w) {
  Piece p;
  p.id = id;
  p.weight = w;
  p.bias.assign(w.rows(), 0.0);
  return p;
}

}  // namespace

TEST_CASE("dominance_ratio: product -eps*I scores sqrt(d)") {
  const int d = 48, h = 96;
  // W_in embeds into the first d hidden coordinates; W_out reads them back
  // scaled by -eps, so W_out * W_in = -eps * I_d.
  Matrix w_in(h, d), w_out(d, h);
  const double eps = 1e-3;
  for (int i = 0; i < d; ++i) {
    w_in(i, i) = 1.0;
    w_out(i, i) = -eps;
  }
  CHECK(dominance_ratio(w_out, w_in) == doctest::Approx(std::sqrt(48.0)).epsilon(1e-12));
}

TEST_CASE("dominance_ratio: hollow product scores zero") {
  const int d = 4, h = 6;
  // Product is a cyclic shift: nonzero entries only off the diagonal.
  Matrix w_in(h, d), w_out(d, h);
  for (int i = 0; i < d; ++i) w_in(i, i) = 1.0;
  for (int i = 0; i < d; ++i) w_out(i, (i + 1) % d) = 1.0;
  CHECK(dominance_ratio(w_out, w_in) == 0.0);
  CHECK(dominance_ratio(Matrix(d, h), Matrix(h, d)) == 0.0);  // zero product convention
}

TEST_CASE("dominance_ratio: shape checks and scale invariance") {
  CHECK_THROWS_AS(dominance_ratio(Matrix(48, 96), Matrix(95, 48)), std::invalid_argument);
  const Matrix w_in = gaussian(96, 48);
  const Matrix w_out = gaussian(48, 96);
  const double r = dominance_ratio(w_out, w_in);
  Matrix scaled = w_out;
  for (double& v : scaled.flat()) v *= 7.5;
  CHECK(dominance_ratio(scaled, w_in) == doctest::Approx(r).epsilon(1e-12));
}

TEST_CASE("dominance_ratio: unrelated random projections sit near 1/sqrt(d)") {
  // For an unstructured product the trace is one diagonal's worth of mass out
  // of d^2 entries, so the ratio concentrates around d^{-1/2} ~ 0.144, far
  // below the sqrt(d) ~ 6.9 ceiling of a matched pair.
  double acc = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) acc += dominance_ratio(gaussian(48, 96), gaussian(96, 48));
  const double mean = acc / trials;
  CHECK(mean > 0.05);
  CHECK(mean < 0.25);
}

TEST_CASE("hungarian_assign: hand case with a known optimum") {
  Matrix s(3, 3);
  s(0, 0) = 1; s(0, 1) = 5; s(0, 2) = 3;
  s(1, 0) = 4; s(1, 1) = 2; s(1, 2) = 6;
  s(2, 0) = 7; s(2, 1) = 1; s(2, 2) = 2;
  // Optimal: (0,1)+(1,2)+(2,0) = 5+6+7 = 18.
  const Assignment a = hungarian_assign(s);
  CHECK(a.total_score == doctest::Approx(18.0));
  std::vector<int> col(3);
  for (auto [i, j] : a.pairs) col[i] = j;
  CHECK(col == std::vector<int>{1, 2, 0});
}

TEST_CASE("hungarian_assign matches the factorial oracle") {
  for (int n : {2, 3, 5, 7, 8}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix s = gaussian(n, n);
      const Assignment a = hungarian_assign(s);
      CHECK(a.total_score == doctest::Approx(best_total_score(s)).epsilon(1e-12));
      // Result is a permutation.
      std::vector<char> used(n, 0);
      for (auto [i, j] : a.pairs) {
        CHECK(!used[j]);
        used[j] = 1;
      }
    }
  }
}

TEST_CASE("greedy_assign is suboptimal where hungarian is not") {
  Matrix s(2, 2);
  s(0, 0) = 2; s(0, 1) = 1;
  s(1, 0) = 2; s(1, 1) = 0;
  // Greedy takes (0,0)=2 first and is stuck with (1,1)=0; optimum is 1+2.
  CHECK(greedy_assign(s).total_score == doctest::Approx(2.0));
  CHECK(hungarian_assign(s).total_score == doctest::Approx(3.0));
}

TEST_CASE("property: hungarian total never falls below greedy") {
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix s = gaussian(6, 6);
    CHECK(hungarian_assign(s).total_score >= greedy_assign(s).total_score - 1e-12);
  }
}

TEST_CASE("dominance_matrix validates shapes and tracks ids") {
  std::vector<Piece> ins = {make_input_piece(10, gaussian(kHiddenDim, kInDim))};
  std::vector<Piece> outs = {make_output_piece(20, gaussian(kInDim, kHiddenDim))};
  const DominanceMatrix dm = dominance_matrix(ins, outs);
  CHECK(dm.in_ids == std::vector<int>{10});
  CHECK(dm.out_ids == std::vector<int>{20});
  CHECK(dm.scores(0, 0) == doctest::Approx(dominance_ratio(outs[0].weight, ins[0].weight)));

  std::vector<Piece> bad = {make_input_piece(1, gaussian(3, 3))};
  CHECK_THROWS_AS(dominance_matrix(bad, outs), std::invalid_argument);
  CHECK_THROWS_AS(dominance_matrix(ins, std::vector<Piece>{}), std::invalid_argument);
}

TEST_CASE("pair_blocks recovers a planted pairing with a positive gap") {
  // Plant pairs by setting W_out = -W_in^T: the product is a negated Gram
  // matrix, whose diagonal carries h sigma^2 per entry while cross products
  // between independent blocks stay unstructured.
  const int n = 6;
  std::vector<Matrix> w_ins;
  for (int k = 0; k < n; ++k) w_ins.push_back(gaussian(kHiddenDim, kInDim, 1.0 / std::sqrt(kInDim)));

  std::vector<Piece> pieces;
  pieces.push_back(make_output_piece(99, gaussian(1, kInDim)));  // last layer, must be ignored
  for (int k = 0; k < n; ++k) {
    pieces.push_back(make_input_piece(2 * k, w_ins[k]));
    Matrix w_out = transpose(w_ins[k]);
    for (double& v : w_out.flat()) v = -v;
    pieces.push_back(make_output_piece(2 * k + 1, w_out));
  }
  std::shuffle(pieces.begin(), pieces.end(), g_gen);

  const PairingResult res = pair_blocks(pieces);
  CHECK(static_cast<int>(res.blocks.size()) == n);
  for (auto [in_id, out_id] : res.id_pairs) CHECK(out_id == in_id + 1);
  CHECK(res.separation.gap > 0.5);
  CHECK(res.separation.min_matched > res.separation.max_unmatched);
  for (double s : res.pair_scores) CHECK(s >= res.separation.min_matched);
}
