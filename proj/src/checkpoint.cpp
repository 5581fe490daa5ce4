#include "midam/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace midam {

namespace {

void write_array(std::ofstream& out, const std::string& name,
                 const double* data, std::size_t rows, std::size_t cols) {
  out << "array " << name << ' ' << rows << ' ' << cols << "\n";
  char buf[64];
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", data[r * cols + c]);
      out << buf << (c + 1 == cols ? "" : " ");
    }
    out << "\n";
  }
}

struct NamedArray {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& p,
                     const PoolState* state) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "midam-checkpoint 1\n";
  write_array(out, "W1", p.W1.data(), p.d, p.d);
  write_array(out, "b1", p.b1.data(), 1, p.d);
  write_array(out, "w_c", p.w_c.data(), 1, p.d);
  write_array(out, "c0", &p.c0, 1, 1);
  write_array(out, "V", p.V.data(), p.m, p.d);
  write_array(out, "w_a", p.w_a.data(), 1, p.m);
  write_array(out, "a", &p.a, 1, 1);
  write_array(out, "b", &p.b, 1, 1);
  write_array(out, "alpha", &p.alpha, 1, 1);
  if (state != nullptr) {
    std::vector<double> s_flat;
    s_flat.reserve(state->size() * 2);
    std::vector<double> visited;
    visited.reserve(state->size());
    for (std::size_t i = 0; i < state->size(); ++i) {
      s_flat.push_back(state->s[i].s1);
      s_flat.push_back(state->s[i].s2);
      visited.push_back(state->visited[i] ? 1.0 : 0.0);
    }
    write_array(out, "pool_s", s_flat.data(), state->size(), 2);
    write_array(out, "pool_visited", visited.data(), state->size(), 1);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string banner;
  std::getline(in, banner);
  if (banner != "midam-checkpoint 1") {
    throw std::runtime_error(path + ": not a midam checkpoint");
  }

  std::map<std::string, NamedArray> arrays;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    head >> tag >> name >> rows >> cols;
    if (tag != "array" || name.empty() || rows == 0 || cols == 0) {
      throw std::runtime_error(path + ": malformed array header '" + line +
                               "'");
    }
    NamedArray arr;
    arr.rows = rows;
    arr.cols = cols;
    arr.data.resize(rows * cols);
    for (std::size_t i = 0; i < rows * cols; ++i) {
      if (!(in >> arr.data[i])) {
        throw std::runtime_error(path + ": truncated array " + name);
      }
    }
    std::getline(in, line);  // consume end of last row
    arrays.emplace(std::move(name), std::move(arr));
  }

  auto need = [&](const std::string& name) -> const NamedArray& {
    auto it = arrays.find(name);
    if (it == arrays.end()) {
      throw std::runtime_error(path + ": missing array " + name);
    }
    return it->second;
  };

  Checkpoint ck;
  const NamedArray& w1 = need("W1");
  if (w1.rows != w1.cols) {
    throw std::runtime_error(path + ": W1 must be square");
  }
  ModelParams& p = ck.params;
  p.d = w1.rows;
  p.W1 = w1.data;
  p.b1 = need("b1").data;
  p.w_c = need("w_c").data;
  p.c0 = need("c0").data.at(0);
  const NamedArray& v = need("V");
  p.m = v.rows;
  p.V = v.data;
  p.w_a = need("w_a").data;
  p.a = need("a").data.at(0);
  p.b = need("b").data.at(0);
  p.alpha = need("alpha").data.at(0);
  if (p.b1.size() != p.d || p.w_c.size() != p.d || p.w_a.size() != p.m ||
      v.cols != p.d) {
    throw std::runtime_error(path + ": inconsistent array shapes");
  }

  if (arrays.count("pool_s")) {
    const NamedArray& ps = need("pool_s");
    const NamedArray& pv = need("pool_visited");
    if (ps.cols != 2 || pv.rows != ps.rows || pv.cols != 1) {
      throw std::runtime_error(path + ": malformed pooling state arrays");
    }
    PoolState state;
    state.s.resize(ps.rows);
    state.visited.resize(ps.rows);
    for (std::size_t i = 0; i < ps.rows; ++i) {
      state.s[i].s1 = ps.data[2 * i];
      state.s[i].s2 = ps.data[2 * i + 1];
      state.visited[i] = pv.data[i] != 0.0 ? 1 : 0;
    }
    ck.state = std::move(state);
  }
  return ck;
}

}  // namespace midam
