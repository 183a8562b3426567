// Puzzle instance production: synthetic regression data, from-scratch training
// of the residual network with Adam, piece shuffling and export.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>

#include "rlp/io.hpp"
#include "rlp/model.hpp"

namespace rlp {

struct TrainConfig {
  int blocks = 48;
  int in_dim = kInDim;
  int hidden_dim = kHiddenDim;
  double lr = 1e-4;
  int epochs = 200;
  int batch_size = 24;
  uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Progress hook, called after each epoch with the epoch number, the current
  // parameters, and the epoch's mean squared training error.
  std::function<void(int, const Network&, double)> on_epoch;
};

// Deterministic RNG (splitmix64 + Box-Muller) so streams do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next_u64();
  double uniform();        // [0, 1)
  double normal();         // standard normal
  int uniform_int(int n);  // [0, n)
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) std::swap(v[i], v[uniform_int(i + 1)]);
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0;
};

// Parameter-shaped buffers (gradients, Adam moments).
struct BlockGrads {
  Matrix w_in;
  Vector b_in;
  Matrix w_out;
  Vector b_out;
};

struct Gradients {
  std::vector<BlockGrads> blocks;
  Matrix w_last;
  Vector b_last;
  static Gradients zeros_like(const Network& net);
  void fill_zero();
  void add(const Gradients& other);
  void scale(double a);
};

struct AdamState {
  Gradients m;
  Gradients v;
  long t = 0;
  static AdamState init(const Network& net);
};

// x: i.i.d. standard normal, then column-standardized. truth: random ReLU
// teacher of x plus small noise, standardized. pred left empty.
Dataset synthesize_dataset(int n, uint64_t seed, int in_dim = kInDim);

// Gradients of 0.5 * (f(x) - y)^2 with respect to every parameter.
Gradients backward(const Network& net, const Vector& x, double y);

void adam_step(Network& params, const Gradients& grads, AdamState& state, const TrainConfig& cfg);

struct TrainResult {
  Network net;
  double final_mse_truth = 0;  // vs the truth column
};

// Trains from scratch and fills ds.pred with the trained network's outputs.
// Throws std::runtime_error naming the epoch if the loss goes non-finite.
TrainResult train_network(const TrainConfig& cfg, Dataset& ds);

Network init_network(const TrainConfig& cfg, Rng& rng);

struct PuzzleInstance {
  std::vector<Piece> pieces;  // shuffled ids 0..96
  Dataset dataset;            // pred recomputed from f32-quantized weights
  Solution sealed;
};

// Quantizes weights to f32, recomputes pred, assigns ids by a seeded
// permutation, and (when dir is non-empty) writes the instance plus
// solution.sealed.json.
PuzzleInstance shuffle_and_export(const Network& net, const Dataset& ds, uint64_t seed,
                                  const std::filesystem::path& dir = {});

}  // namespace rlp
