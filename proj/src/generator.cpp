#include "rlp/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace rlp {

// ---------------------------------------------------------------- Rng

uint64_t Rng::next_u64() {
  // splitmix64
  uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  have_spare_ = true;
  return r * std::cos(theta);
}

int Rng::uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

// ---------------------------------------------------------------- buffers

namespace {

Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }
Vector zeros_like(const Vector& v) { return Vector(v.size(), 0.0); }

void collect_spans(Network& net, std::vector<std::span<double>>& out) {
  for (PairedBlock& b : net.blocks) {
    out.push_back(b.in_piece.weight.flat());
    out.push_back({b.in_piece.bias.data(), b.in_piece.bias.size()});
    out.push_back(b.out_piece.weight.flat());
    out.push_back({b.out_piece.bias.data(), b.out_piece.bias.size()});
  }
  out.push_back(net.last.weight.flat());
  out.push_back({net.last.bias.data(), net.last.bias.size()});
}

void collect_spans(Gradients& g, std::vector<std::span<double>>& out) {
  for (BlockGrads& b : g.blocks) {
    out.push_back(b.w_in.flat());
    out.push_back({b.b_in.data(), b.b_in.size()});
    out.push_back(b.w_out.flat());
    out.push_back({b.b_out.data(), b.b_out.size()});
  }
  out.push_back(g.w_last.flat());
  out.push_back({g.b_last.data(), g.b_last.size()});
}

}  // namespace

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const PairedBlock& b : net.blocks)
    g.blocks.push_back({rlp::zeros_like(b.in_piece.weight), rlp::zeros_like(b.in_piece.bias),
                        rlp::zeros_like(b.out_piece.weight), rlp::zeros_like(b.out_piece.bias)});
  g.w_last = rlp::zeros_like(net.last.weight);
  g.b_last = rlp::zeros_like(net.last.bias);
  return g;
}

void Gradients::fill_zero() {
  std::vector<std::span<double>> spans;
  collect_spans(*this, spans);
  for (auto s : spans) std::fill(s.begin(), s.end(), 0.0);
}

void Gradients::add(const Gradients& other) {
  std::vector<std::span<double>> a, b;
  collect_spans(*this, a);
  collect_spans(const_cast<Gradients&>(other), b);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t k = 0; k < a[i].size(); ++k) a[i][k] += b[i][k];
}

void Gradients::scale(double c) {
  std::vector<std::span<double>> spans;
  collect_spans(*this, spans);
  for (auto s : spans)
    for (double& v : s) v *= c;
}

AdamState AdamState::init(const Network& net) {
  AdamState st;
  st.m = Gradients::zeros_like(net);
  st.v = Gradients::zeros_like(net);
  st.t = 0;
  return st;
}

// ---------------------------------------------------------------- dataset

Dataset synthesize_dataset(int n, uint64_t seed, int in_dim) {
  if (n < 1) throw std::invalid_argument("synthesize_dataset: n must be >= 1");
  Rng rng(seed);

  Dataset ds;
  ds.x = Matrix(n, in_dim);
  for (double& v : ds.x.flat()) v = rng.normal();

  // Fixed random teacher: a smooth ReLU random-feature part plus a bank of
  // sinusoidal ridge functions. The sinusoids are deliberately hard for the
  // student (spectral bias), so the training error stays large and structured
  // through the whole run instead of collapsing to a noise floor. That
  // sustained, structured error is what pushes every residual block --
  // including the ones next to the scalar readout, whose gradients are nearly
  // rank-one -- toward a clean near-isometry; with an easy target, late
  // training degenerates into memorizing noise and the pairing signal erodes.
  const int teacher_hidden = 256;
  Matrix u(teacher_hidden, in_dim);
  Vector c(teacher_hidden), v(teacher_hidden);
  const double u_std = 1.0 / std::sqrt(in_dim);
  const double v_std = 1.0 / std::sqrt(teacher_hidden);
  for (double& w : u.flat()) w = u_std * rng.normal();
  for (double& w : c) w = 0.3 * rng.normal();
  for (double& w : v) w = v_std * rng.normal();

  const int n_sines = 12;
  const double omega = 3.0;
  Matrix q(n_sines, in_dim);  // unit ridge directions
  Vector phase(n_sines);
  for (int j = 0; j < n_sines; ++j) {
    double norm2 = 0;
    for (int col = 0; col < in_dim; ++col) {
      q(j, col) = rng.normal();
      norm2 += q(j, col) * q(j, col);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (int col = 0; col < in_dim; ++col) q(j, col) *= inv;
    phase[j] = 6.283185307179586 * rng.uniform();
  }

  Vector smooth(n), rough(n);
  for (int r = 0; r < n; ++r) {
    auto x = ds.x.row(r);
    double t = 0;
    for (int j = 0; j < teacher_hidden; ++j) {
      const double pre = dot(u.row(j), x) + c[j];
      if (pre > 0) t += v[j] * pre;
    }
    smooth[r] = t;
    double s = 0;
    for (int j = 0; j < n_sines; ++j) s += std::sin(omega * dot(q.row(j), x) + phase[j]);
    rough[r] = s;
  }

  // Mix so the sinusoids carry ~10% of the target variance.
  auto stddev = [n](const Vector& a) {
    double mean = 0;
    for (double av : a) mean += av;
    mean /= n;
    double var = 0;
    for (double av : a) var += (av - mean) * (av - mean);
    return std::sqrt(var / n);
  };
  const double w_smooth = std::sqrt(0.90) / stddev(smooth);
  const double w_rough = std::sqrt(0.10) / stddev(rough);
  ds.truth.resize(n);
  for (int r = 0; r < n; ++r)
    ds.truth[r] = w_smooth * smooth[r] + w_rough * rough[r] + 0.01 * rng.normal();

  // Standardize feature columns and the target to zero mean, unit variance.
  auto standardize = [n](auto get, auto set) {
    double mean = 0;
    for (int r = 0; r < n; ++r) mean += get(r);
    mean /= n;
    double var = 0;
    for (int r = 0; r < n; ++r) {
      const double d = get(r) - mean;
      var += d * d;
    }
    var /= n;
    const double inv = var > 1e-24 ? 1.0 / std::sqrt(var) : 1.0;
    for (int r = 0; r < n; ++r) set(r, (get(r) - mean) * inv);
  };
  for (int col = 0; col < in_dim; ++col)
    standardize([&](int r) { return ds.x(r, col); }, [&](int r, double v2) { ds.x(r, col) = v2; });
  standardize([&](int r) { return ds.truth[r]; }, [&](int r, double v2) { ds.truth[r] = v2; });
  return ds;
}

// ---------------------------------------------------------------- backward

namespace {

struct RowWorkspace {
  Matrix states;  // (n_blocks + 1) x d, state before each block
  Matrix acts;    // n_blocks x h, post-ReLU activations
  Vector g, da, dpre, dx;
};

double forward_cached(const Network& net, std::span<const double> x, RowWorkspace& ws) {
  const int nb = static_cast<int>(net.blocks.size());
  const int d = static_cast<int>(x.size());
  const int h = nb > 0 ? net.blocks[0].in_piece.weight.rows() : 0;
  if (ws.states.rows() != nb + 1) ws.states = Matrix(nb + 1, d);
  if (nb > 0 && ws.acts.rows() != nb) ws.acts = Matrix(nb, h);

  std::copy(x.begin(), x.end(), ws.states.row(0).begin());
  for (int k = 0; k < nb; ++k) {
    const PairedBlock& b = net.blocks[k];
    auto s = ws.states.row(k);
    auto a = ws.acts.row(k);
    for (int j = 0; j < h; ++j) {
      const double pre = dot(b.in_piece.weight.row(j), s) + b.in_piece.bias[j];
      a[j] = pre > 0 ? pre : 0;
    }
    auto s_next = ws.states.row(k + 1);
    for (int i = 0; i < d; ++i) s_next[i] = s[i] + dot(b.out_piece.weight.row(i), a) + b.out_piece.bias[i];
  }
  return detail::last_layer_row(net.last, ws.states.row(nb));
}

// Accumulates gradients of 0.5*(f(x)-y)^2 into `out`. Returns f(x)-y.
double backward_accum(const Network& net, std::span<const double> x, double y, Gradients& out, RowWorkspace& ws) {
  const int nb = static_cast<int>(net.blocks.size());
  const int d = static_cast<int>(x.size());
  const double err = forward_cached(net, x, ws) - y;

  // Last layer.
  {
    auto s = ws.states.row(nb);
    auto gw = out.w_last.row(0);
    for (int i = 0; i < d; ++i) gw[i] += err * s[i];
    out.b_last[0] += err;
  }
  ws.g.resize(d);
  {
    auto wl = net.last.weight.row(0);
    for (int i = 0; i < d; ++i) ws.g[i] = err * wl[i];
  }

  for (int k = nb - 1; k >= 0; --k) {
    const PairedBlock& b = net.blocks[k];
    const int h = b.in_piece.weight.rows();
    auto a = ws.acts.row(k);
    auto x_in = ws.states.row(k);
    BlockGrads& bg = out.blocks[k];

    ws.da.assign(h, 0.0);
    for (int i = 0; i < d; ++i) {
      const double gi = ws.g[i];
      bg.b_out[i] += gi;
      const double* wrow = b.out_piece.weight.row(i).data();
      double* gwrow = bg.w_out.row(i).data();
      double* da = ws.da.data();
#pragma omp simd
      for (int j = 0; j < h; ++j) {
        gwrow[j] += gi * a[j];
        da[j] += gi * wrow[j];
      }
    }
    ws.dpre.resize(h);
    for (int j = 0; j < h; ++j) ws.dpre[j] = a[j] > 0 ? ws.da[j] : 0.0;

    ws.dx.assign(ws.g.begin(), ws.g.end());  // identity path
    for (int j = 0; j < h; ++j) {
      const double gj = ws.dpre[j];
      bg.b_in[j] += gj;
      if (gj == 0.0) continue;
      const double* wrow = b.in_piece.weight.row(j).data();
      double* gwrow = bg.w_in.row(j).data();
      double* dx = ws.dx.data();
#pragma omp simd
      for (int c2 = 0; c2 < d; ++c2) {
        gwrow[c2] += gj * x_in[c2];
        dx[c2] += gj * wrow[c2];
      }
    }
    ws.g.swap(ws.dx);
  }
  return err;
}

}  // namespace

Gradients backward(const Network& net, const Vector& x, double y) {
  Gradients g = Gradients::zeros_like(net);
  RowWorkspace ws;
  backward_accum(net, x, y, g, ws);
  return g;
}

// ---------------------------------------------------------------- adam

void adam_step(Network& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg) {
  state.t += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  std::vector<std::span<double>> p, g, m, v;
  collect_spans(params, p);
  collect_spans(const_cast<Gradients&>(grads), g);
  collect_spans(state.m, m);
  collect_spans(state.v, v);
  for (size_t i = 0; i < p.size(); ++i) {
    for (size_t k = 0; k < p[i].size(); ++k) {
      const double gk = g[i][k];
      m[i][k] = b1 * m[i][k] + (1 - b1) * gk;
      v[i][k] = b2 * v[i][k] + (1 - b2) * gk * gk;
      const double m_hat = m[i][k] / bc1;
      const double v_hat = v[i][k] / bc2;
      p[i][k] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------- training

Network init_network(const TrainConfig& cfg, Rng& rng) {
  Network net;
  const double in_std = std::sqrt(2.0 / cfg.in_dim);
  // Output projections start at exactly zero, so the stack is the identity at
  // init and every entry of a trained W_out is pure accumulated gradient.
  // That keeps the cross products W_out_j * W_in_i of *different* blocks free
  // of random-init mass, which is what creates spurious diagonal-dominance
  // outliers among mismatched pairs.
  for (int k = 0; k < cfg.blocks; ++k) {
    PairedBlock b;
    b.in_piece.weight = Matrix(cfg.hidden_dim, cfg.in_dim);
    b.in_piece.bias.assign(cfg.hidden_dim, 0.0);
    b.out_piece.weight = Matrix(cfg.in_dim, cfg.hidden_dim);
    b.out_piece.bias.assign(cfg.in_dim, 0.0);
    for (double& w : b.in_piece.weight.flat()) w = in_std * rng.normal();
    b.in_piece.id = 2 * k;
    b.out_piece.id = 2 * k + 1;
    net.blocks.push_back(std::move(b));
  }
  net.last.weight = Matrix(1, cfg.in_dim);
  net.last.bias.assign(1, 0.0);
  const double last_std = 1.0 / std::sqrt(cfg.in_dim);
  for (double& w : net.last.weight.flat()) w = last_std * rng.normal();
  net.last.id = 2 * cfg.blocks;
  return net;
}

TrainResult train_network(const TrainConfig& cfg, Dataset& ds) {
  if (cfg.epochs < 1) throw std::invalid_argument("train_network: epochs must be >= 1");
  if (!(cfg.lr > 0)) throw std::invalid_argument("train_network: lr must be positive");
  if (cfg.blocks < 1 || cfg.in_dim < 1 || cfg.hidden_dim < 1)
    throw std::invalid_argument("train_network: dimensions must be positive");
  if (ds.rows() < 1) throw std::invalid_argument("train_network: empty dataset");
  if (ds.x.cols() != cfg.in_dim) throw std::invalid_argument("train_network: dataset width != in_dim");

  Rng rng(cfg.seed);
  Network net = init_network(cfg, rng);
  AdamState adam = AdamState::init(net);
  Gradients grads = Gradients::zeros_like(net);
  RowWorkspace ws;

  const int n = ds.rows();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(idx);
    double epoch_sse = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, n - start);
      grads.fill_zero();
      for (int i = 0; i < bsz; ++i) {
        const int r = idx[start + i];
        const double err = backward_accum(net, ds.x.row(r), ds.truth[r], grads, ws);
        epoch_sse += err * err;
      }
      grads.scale(2.0 / bsz);  // d/dp of mean (f-y)^2 from the accumulated 0.5*e^2 grads
      adam_step(net, grads, adam, cfg);
    }
    if (!std::isfinite(epoch_sse))
      throw std::runtime_error("train_network: loss diverged (NaN) at epoch " + std::to_string(epoch));
    if (cfg.on_epoch) cfg.on_epoch(epoch, net, epoch_sse / n);
  }

  TrainResult res;
  ds.pred.resize(n);
  double sse = 0;
  for (int r = 0; r < n; ++r) {
    const double f = forward_cached(net, ds.x.row(r), ws);
    ds.pred[r] = f;
    const double e = f - ds.truth[r];
    sse += e * e;
  }
  res.final_mse_truth = sse / n;
  res.net = std::move(net);
  return res;
}

// ---------------------------------------------------------------- export

namespace {

Piece quantize(const Piece& p) {
  Piece q = p;
  for (double& v : q.weight.flat()) v = static_cast<double>(static_cast<float>(v));
  for (double& v : q.bias) v = static_cast<double>(static_cast<float>(v));
  return q;
}

}  // namespace

PuzzleInstance shuffle_and_export(const Network& net, const Dataset& ds, uint64_t seed,
                                  const std::filesystem::path& dir) {
  const int nb = static_cast<int>(net.blocks.size());

  // f32 quantization first; pred is recorded from the quantized weights so the
  // sealed reassembly reaches MSE ~ 0 in f64 arithmetic.
  Network qnet;
  for (const PairedBlock& b : net.blocks) qnet.blocks.push_back({quantize(b.in_piece), quantize(b.out_piece)});
  qnet.last = quantize(net.last);

  PuzzleInstance inst;
  inst.dataset = ds;
  inst.dataset.pred.resize(ds.rows());
  {
    RowWorkspace ws;
    for (int r = 0; r < ds.rows(); ++r) inst.dataset.pred[r] = forward_cached(qnet, ds.x.row(r), ws);
  }

  // Canonical piece order [in_0, out_0, ..., in_{nb-1}, out_{nb-1}, last],
  // relabeled by a seeded permutation.
  std::vector<int> perm(2 * nb + 1);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);

  for (int k = 0; k < nb; ++k) {
    Piece in = qnet.blocks[k].in_piece;
    Piece out = qnet.blocks[k].out_piece;
    in.id = perm[2 * k];
    out.id = perm[2 * k + 1];
    inst.pieces.push_back(std::move(in));
    inst.pieces.push_back(std::move(out));
  }
  Piece last = qnet.last;
  last.id = perm[2 * nb];
  inst.pieces.push_back(std::move(last));

  // Sealed ground truth. Pairs are listed by ascending in_id so the listing
  // itself does not leak depth; `order` points back into that list.
  std::vector<int> block_of(nb);
  std::iota(block_of.begin(), block_of.end(), 0);
  std::sort(block_of.begin(), block_of.end(), [&](int a, int b) { return perm[2 * a] < perm[2 * b]; });
  std::vector<int> pair_index_of_block(nb);
  for (int i = 0; i < nb; ++i) {
    const int k = block_of[i];
    inst.sealed.pairs.push_back({perm[2 * k], perm[2 * k + 1]});
    pair_index_of_block[k] = i;
  }
  for (int k = 0; k < nb; ++k) inst.sealed.order.push_back(pair_index_of_block[k]);
  inst.sealed.last_id = perm[2 * nb];

  if (!dir.empty()) {
    write_instance(inst.pieces, inst.dataset, dir);
    write_solution(inst.sealed, dir / "solution.sealed.json");
  }
  return inst;
}

}  // namespace rlp
