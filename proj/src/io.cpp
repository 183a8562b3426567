#include "rlp/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace rlp {

namespace {

constexpr char kMagic[4] = {'R', 'L', 'P', '1'};
constexpr uint32_t kVersion = 1;

bool census_shape_ok(int rows, int cols) {
  return (rows == kHiddenDim && cols == kInDim) || (rows == kInDim && cols == kHiddenDim) ||
         (rows == 1 && cols == kInDim);
}

void put_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::ifstream& f, const std::filesystem::path& path) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4))
    throw IoError(IoError::Kind::Truncated, "truncated piece file: " + path.string());
  return v;
}

}  // namespace

void write_piece(const Piece& p, const std::filesystem::path& path) {
  if (!census_shape_ok(p.weight.rows(), p.weight.cols()))
    throw IoError(IoError::Kind::BadShape,
                  "piece shape (" + std::to_string(p.weight.rows()) + "," + std::to_string(p.weight.cols()) +
                      ") not in the allowed census");
  if (static_cast<int>(p.bias.size()) != p.weight.rows())
    throw IoError(IoError::Kind::BadShape, "bias length does not match weight rows");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open for write: " + path.string());
  f.write(kMagic, 4);
  put_u32(f, kVersion);
  put_u32(f, static_cast<uint32_t>(p.weight.rows()));
  put_u32(f, static_cast<uint32_t>(p.weight.cols()));
  for (double v : p.weight.flat()) {
    const float x = static_cast<float>(v);
    f.write(reinterpret_cast<const char*>(&x), 4);
  }
  put_u32(f, static_cast<uint32_t>(p.bias.size()));
  for (double v : p.bias) {
    const float x = static_cast<float>(v);
    f.write(reinterpret_cast<const char*>(&x), 4);
  }
}

Piece read_piece(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open: " + path.string());
  char magic[4];
  if (!f.read(magic, 4)) throw IoError(IoError::Kind::Truncated, "truncated piece file: " + path.string());
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(IoError::Kind::BadMagic, "bad magic in " + path.string());
  const uint32_t version = get_u32(f, path);
  if (version != kVersion)
    throw IoError(IoError::Kind::BadMagic, "unsupported piece version " + std::to_string(version));
  const uint32_t rows = get_u32(f, path);
  const uint32_t cols = get_u32(f, path);
  if (!census_shape_ok(static_cast<int>(rows), static_cast<int>(cols)))
    throw IoError(IoError::Kind::BadShape,
                  "piece shape (" + std::to_string(rows) + "," + std::to_string(cols) + ") not in the allowed census");

  const size_t expected = 4 + 4 + 4 + 4 + 4ull * rows * cols + 4 + 4ull * rows;
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected)
    throw IoError(IoError::Kind::Truncated, "piece file " + path.string() + ": expected " +
                                                std::to_string(expected) + " bytes, got " + std::to_string(actual));

  Piece p;
  p.weight = Matrix(static_cast<int>(rows), static_cast<int>(cols));
  auto flat = p.weight.flat();
  for (double& v : flat) {
    float x;
    if (!f.read(reinterpret_cast<char*>(&x), 4))
      throw IoError(IoError::Kind::Truncated, "truncated piece file: " + path.string());
    v = static_cast<double>(x);
  }
  const uint32_t bias_len = get_u32(f, path);
  if (bias_len != rows)
    throw IoError(IoError::Kind::BadShape, "bias_len " + std::to_string(bias_len) + " != rows in " + path.string());
  p.bias.resize(bias_len);
  for (double& v : p.bias) {
    float x;
    if (!f.read(reinterpret_cast<char*>(&x), 4))
      throw IoError(IoError::Kind::Truncated, "truncated piece file: " + path.string());
    v = static_cast<double>(x);
  }
  return p;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open for write: " + csv_path.string());
  for (int c = 0; c < ds.x.cols(); ++c) f << "measurement_" << c << ",";
  f << "pred,true\n";
  char buf[32];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    f << buf;
  };
  for (int r = 0; r < ds.rows(); ++r) {
    for (double v : ds.x.row(r)) {
      emit(v);
      f << ',';
    }
    emit(r < static_cast<int>(ds.pred.size()) ? ds.pred[r] : 0.0);
    f << ',';
    emit(ds.truth[r]);
    f << '\n';
  }
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open: " + csv_path.string());
  std::string line;
  if (!std::getline(f, line)) throw IoError(IoError::Kind::BadHeader, "empty CSV: " + csv_path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::string expected_header;
  for (int c = 0; c < kInDim; ++c) expected_header += "measurement_" + std::to_string(c) + ",";
  expected_header += "pred,true";
  if (line != expected_header)
    throw IoError(IoError::Kind::BadHeader, "unexpected CSV header in " + csv_path.string());

  std::vector<std::array<double, kInDim + 2>> rows;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, kInDim + 2> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int c = 0; c < kInDim + 2; ++c) {
      if (c > 0) {
        if (p >= end || *p != ',')
          throw IoError(IoError::Kind::BadCell,
                        "row " + std::to_string(lineno) + ": expected " + std::to_string(kInDim + 2) + " columns");
        ++p;
      }
      auto [next, ec] = std::from_chars(p, end, row[c]);
      if (ec != std::errc())
        throw IoError(IoError::Kind::BadCell,
                      "row " + std::to_string(lineno) + ", column " + std::to_string(c) + ": not a number");
      p = next;
    }
    if (p != end)
      throw IoError(IoError::Kind::BadCell, "row " + std::to_string(lineno) + ": trailing data");
    rows.push_back(row);
  }
  if (rows.empty()) throw IoError(IoError::Kind::BadHeader, "CSV has no data rows: " + csv_path.string());

  Dataset ds;
  ds.x = Matrix(static_cast<int>(rows.size()), kInDim);
  ds.pred.resize(rows.size());
  ds.truth.resize(rows.size());
  for (size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < kInDim; ++c) ds.x(static_cast<int>(r), c) = rows[r][c];
    ds.pred[r] = rows[r][kInDim];
    ds.truth[r] = rows[r][kInDim + 1];
  }
  return ds;
}

std::vector<int> Solution::flat() const {
  std::vector<int> out;
  out.reserve(pairs.size() * 2 + 1);
  for (int idx : order) {
    out.push_back(pairs[idx].in_id);
    out.push_back(pairs[idx].out_id);
  }
  out.push_back(last_id);
  return out;
}

void validate_solution(const Solution& s, int n_blocks) {
  if (static_cast<int>(s.pairs.size()) != n_blocks)
    throw IoError(IoError::Kind::BadSolution, "solution has " + std::to_string(s.pairs.size()) + " pairs, expected " +
                                                  std::to_string(n_blocks));
  if (static_cast<int>(s.order.size()) != n_blocks)
    throw IoError(IoError::Kind::BadSolution, "solution order length mismatch");
  std::vector<char> seen_order(n_blocks, 0);
  for (int idx : s.order) {
    if (idx < 0 || idx >= n_blocks || seen_order[idx])
      throw IoError(IoError::Kind::BadSolution, "order is not a permutation of pair indices");
    seen_order[idx] = 1;
  }
  std::set<int> ids;
  for (const auto& pr : s.pairs) {
    ids.insert(pr.in_id);
    ids.insert(pr.out_id);
  }
  ids.insert(s.last_id);
  if (static_cast<int>(ids.size()) != 2 * n_blocks + 1)
    throw IoError(IoError::Kind::BadSolution, "piece ids are not distinct");
}

void write_solution(const Solution& s, const std::filesystem::path& path) {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::array();
  for (const auto& pr : s.pairs) j["pairs"].push_back({{"in_id", pr.in_id}, {"out_id", pr.out_id}});
  j["order"] = s.order;
  j["last_id"] = s.last_id;
  j["flat"] = s.flat();
  std::ofstream f(path);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open for write: " + path.string());
  f << j.dump(2) << "\n";
}

Solution read_solution(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoError::Kind::Missing, "cannot open: " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::BadSolution, "malformed solution JSON: " + std::string(e.what()));
  }
  Solution s;
  try {
    for (const auto& pr : j.at("pairs")) s.pairs.push_back({pr.at("in_id").get<int>(), pr.at("out_id").get<int>()});
    s.order = j.at("order").get<std::vector<int>>();
    s.last_id = j.at("last_id").get<int>();
    if (j.contains("flat")) {
      const auto flat = j["flat"].get<std::vector<int>>();
      if (flat != s.flat())
        throw IoError(IoError::Kind::BadSolution, "solution flat view disagrees with pairs/order");
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(IoError::Kind::BadSolution, "malformed solution JSON: " + std::string(e.what()));
  }
  validate_solution(s, static_cast<int>(s.pairs.size()));
  return s;
}

Instance read_instance(const std::filesystem::path& dir) {
  Instance inst;
  const auto pieces_dir = dir / "pieces";
  for (int k = 0;; ++k) {
    const auto path = pieces_dir / ("piece_" + std::to_string(k) + ".rlp");
    if (!std::filesystem::exists(path)) {
      if (k == 0) throw IoError(IoError::Kind::Missing, "no pieces found in " + pieces_dir.string());
      break;
    }
    Piece p = read_piece(path);
    p.id = k;
    inst.pieces.push_back(std::move(p));
  }
  inst.dataset = read_dataset(dir / "historical_data.csv");
  return inst;
}

void write_instance(const std::vector<Piece>& pieces, const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "pieces");
  for (const Piece& p : pieces) write_piece(p, dir / "pieces" / ("piece_" + std::to_string(p.id) + ".rlp"));
  write_dataset(ds, dir / "historical_data.csv");
}

Network assemble(const Instance& inst, const Solution& s) {
  std::map<int, const Piece*> by_id;
  for (const Piece& p : inst.pieces) by_id[p.id] = &p;
  auto get = [&](int id, PieceKind want) -> const Piece& {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw IoError(IoError::Kind::BadSolution, "solution names unknown piece id " + std::to_string(id));
    if (classify_piece(*it->second) != want)
      throw IoError(IoError::Kind::BadSolution, "piece " + std::to_string(id) + " has the wrong shape for its role");
    return *it->second;
  };
  Network net;
  for (int idx : s.order) {
    PairedBlock b;
    b.in_piece = get(s.pairs[idx].in_id, PieceKind::InputProj);
    b.out_piece = get(s.pairs[idx].out_id, PieceKind::OutputProj);
    net.blocks.push_back(std::move(b));
  }
  net.last = get(s.last_id, PieceKind::Last);
  return net;
}

}  // namespace rlp
