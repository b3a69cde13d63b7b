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

#include "dflsim/topology.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "dflsim/error.h"
#include "json.hpp"

namespace dflsim {
namespace {

void Reach(const std::vector<std::vector<std::size_t>>& adj, std::size_t start,
           std::vector<bool>& seen) {
  std::vector<std::size_t> stack = {start};
  seen[start] = true;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = true;
        stack.push_back(v);
      }
    }
  }
}

}  // namespace

Digraph Digraph::FromEdges(std::size_t n, const std::vector<Edge>& edges) {
  Digraph g;
  g.out_.resize(n);
  g.in_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.out_[i].push_back(i);
    g.in_[i].push_back(i);
  }
  for (const Edge& e : edges) {
    if (e.from >= n || e.to >= n) {
      throw Error(ErrorCode::kTopology,
                  "edge (" + std::to_string(e.from) + ", " +
                      std::to_string(e.to) + ") out of range for n = " +
                      std::to_string(n));
    }
    if (e.from == e.to) continue;
    g.out_[e.from].push_back(e.to);
    g.in_[e.to].push_back(e.from);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (auto* list : {&g.out_[i], &g.in_[i]}) {
      std::sort(list->begin(), list->end());
      list->erase(std::unique(list->begin(), list->end()), list->end());
    }
  }
  return g;
}

bool Digraph::HasEdge(std::size_t from, std::size_t to) const {
  const auto& out = out_[from];
  return std::binary_search(out.begin(), out.end(), to);
}

std::vector<Edge> Digraph::NonSelfEdges() const {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < size(); ++i) {
    for (std::size_t l : out_[i]) {
      if (l != i) edges.push_back({i, l});
    }
  }
  return edges;
}

Digraph BuildTopology(TopologyKind kind, std::size_t n,
                      const std::vector<Edge>& custom_edges) {
  if (n < 2) {
    throw Error(ErrorCode::kTopology, "topology needs at least 2 clients");
  }
  std::vector<Edge> edges;
  switch (kind) {
    case TopologyKind::kFull:
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          if (i != j) edges.push_back({i, j});
        }
      }
      break;
    case TopologyKind::kRing:
      for (std::size_t i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
      break;
    case TopologyKind::kCustom:
      edges = custom_edges;
      break;
  }
  Digraph g = Digraph::FromEdges(n, edges);
  if (!IsStronglyConnected(g)) {
    throw Error(ErrorCode::kTopology, "graph is not strongly connected");
  }
  return g;
}

Digraph LoadEdgeListJson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open edge list " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
    const auto n = doc.at("n").get<std::size_t>();
    std::vector<Edge> edges;
    for (const auto& pair : doc.at("edges")) {
      if (!pair.is_array() || pair.size() != 2) {
        throw Error(ErrorCode::kTopology, "edges must be [from, to] pairs");
      }
      edges.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
    }
    return BuildTopology(TopologyKind::kCustom, n, edges);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kTopology,
                "malformed edge list " + path.string() + ": " + e.what());
  }
}

bool IsStronglyConnected(const Digraph& g) {
  const std::size_t n = g.size();
  if (n == 0) return false;
  std::vector<std::vector<std::size_t>> out(n), in(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = g.out_neighbors(i);
    in[i] = g.in_neighbors(i);
  }
  std::vector<bool> forward(n, false), backward(n, false);
  Reach(out, 0, forward);
  Reach(in, 0, backward);
  return std::all_of(forward.begin(), forward.end(), [](bool b) { return b; }) &&
         std::all_of(backward.begin(), backward.end(), [](bool b) { return b; });
}

double WeightMatrix::StochasticityResidual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double row = 0.0;
    double col = 0.0;
    for (std::size_t j = 0; j < w.cols(); ++j) {
      row += w(i, j);
      col += w(j, i);
    }
    worst = std::max({worst, std::fabs(row - 1.0), std::fabs(col - 1.0)});
  }
  return worst;
}

WeightMatrix SinkhornKnopp(const Digraph& g, double tol, int max_iter) {
  const std::size_t n = g.size();
  WeightMatrix result{DenseMatrix(n, n)};
  DenseMatrix& w = result.w;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : g.in_neighbors(i)) w(i, j) = 1.0;
  }
  double residual = result.StochasticityResidual();
  for (int iter = 0; iter < max_iter && residual > tol; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += w(i, j);
      for (std::size_t j = 0; j < n; ++j) w(i, j) /= s;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += w(i, j);
      for (std::size_t i = 0; i < n; ++i) w(i, j) /= s;
    }
    residual = result.StochasticityResidual();
  }
  if (residual > tol) {
    std::ostringstream msg;
    msg << "Sinkhorn-Knopp did not reach tol " << tol << " in " << max_iter
        << " iterations; residual " << residual;
    throw Error(ErrorCode::kConvergence, msg.str());
  }
  return result;
}

}  // namespace dflsim
