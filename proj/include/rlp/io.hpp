// Portable on-disk formats: RLP1 piece files, the dataset CSV, and solution JSON.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlp/model.hpp"

namespace rlp {

struct IoError : std::runtime_error {
  enum class Kind { BadMagic, Truncated, BadShape, BadHeader, BadCell, BadSolution, Missing };
  Kind kind;
  IoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Ground-truth (or recovered) assembly: which pieces pair up, in what order.
struct Solution {
  struct Pair {
    int in_id;
    int out_id;
  };
  std::vector<Pair> pairs;     // one per block
  std::vector<int> order;      // indices into `pairs`, position 0 first
  int last_id = -1;
  // Flattened id sequence [in,out,in,out,...,last] following `order`.
  std::vector<int> flat() const;
};

void write_piece(const Piece& p, const std::filesystem::path& path);
Piece read_piece(const std::filesystem::path& path);

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);

void write_solution(const Solution& s, const std::filesystem::path& path);
Solution read_solution(const std::filesystem::path& path);

// Consistency check: permutation ids, pairs/order/flat agreement. Throws IoError.
void validate_solution(const Solution& s, int n_blocks);

// An instance directory: pieces/piece_<k>.rlp + historical_data.csv.
struct Instance {
  std::vector<Piece> pieces;  // all 97, any order
  Dataset dataset;
};

Instance read_instance(const std::filesystem::path& dir);
void write_instance(const std::vector<Piece>& pieces, const Dataset& ds, const std::filesystem::path& dir);

// Assembles a network from instance pieces per solution. Throws IoError on unknown ids.
Network assemble(const Instance& inst, const Solution& s);

}  // namespace rlp
