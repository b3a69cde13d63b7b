/*
 * Copyright 2026 The dflsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DFLSIM_TOPOLOGY_H_
#define DFLSIM_TOPOLOGY_H_

#include <cstddef>
#include <filesystem>
#include <utility>
#include <vector>

#include "dflsim/numerics.h"

namespace dflsim {

// A directed edge: `from` sends to `to`.
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

// Directed communication graph. Self-loops are always present; neighbor
// lists are sorted by client id and include the client itself.
class Digraph {
 public:
  // Builds the graph without a connectivity check. Self-edges in `edges`
  // are ignored (self-loops are implicit); duplicates are merged.
  static Digraph FromEdges(std::size_t n, const std::vector<Edge>& edges);

  std::size_t size() const { return out_.size(); }
  const std::vector<std::size_t>& out_neighbors(std::size_t i) const {
    return out_[i];
  }
  const std::vector<std::size_t>& in_neighbors(std::size_t i) const {
    return in_[i];
  }
  bool HasEdge(std::size_t from, std::size_t to) const;
  // Directed edges excluding self-loops, ordered by (from, to).
  std::vector<Edge> NonSelfEdges() const;

 private:
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
};

enum class TopologyKind { kFull, kRing, kCustom };

// n >= 2. Custom graphs must be strongly connected or a topology error is
// raised.
Digraph BuildTopology(TopologyKind kind, std::size_t n,
                      const std::vector<Edge>& custom_edges = {});

// Reads {"n": int, "edges": [[from, to], ...]} and builds a custom topology.
Digraph LoadEdgeListJson(const std::filesystem::path& path);

bool IsStronglyConnected(const Digraph& g);

// w(i, j) is the weight client i places on what it receives from j; it is
// nonzero exactly when j is an in-neighbor of i.
struct WeightMatrix {
  DenseMatrix w;

  std::size_t size() const { return w.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return w(i, j); }
  // max over rows and columns of |sum - 1|.
  double StochasticityResidual() const;
};

inline constexpr double kSinkhornTolerance = 1e-10;
inline constexpr int kSinkhornMaxIter = 10000;

// Alternating row/column normalization of the 0/1 adjacency (self-loops
// included). Throws a convergence error carrying the residual if `max_iter`
// sweeps do not reach `tol`.
WeightMatrix SinkhornKnopp(const Digraph& g, double tol = kSinkhornTolerance,
                           int max_iter = kSinkhornMaxIter);

}  // namespace dflsim

#endif  // DFLSIM_TOPOLOGY_H_
