#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <numeric>
#include <sstream>
#include <vector>

#include "thames/geometry.hpp"
#include "thames/rng.hpp"
#include "thames/math.hpp"
#include "thames/model.hpp"

namespace thames {

// Gaussian class models of the component blocks, fitted on the relabelled
// second half; class proportions are fixed at 1/G by construction.
struct QdaModel {
  int u = 0;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> chol;  // lower factors of the per-class covariances
};

inline QdaModel fit_qda(const Eigen::MatrixXd& draws, const BlockLayout& l,
                        const std::vector<int>* rows = nullptr,
                        const Eigen::VectorXd* variance_floor = nullptr) {
  QdaModel q;
  q.u = l.u;
  q.means.resize(l.G);
  q.chol.resize(l.G);
  const int m = rows ? static_cast<int>(rows->size()) : static_cast<int>(draws.rows());
  if (m < 1) throw config_error("fit_qda: empty sample");
  if (m < l.u + 2)
    warn("fit_qda: fewer than u+2 draws per component; ridge regularization engaged");
  Eigen::MatrixXd block(m, l.u);
  for (int g = 0; g < l.G; ++g) {
    for (int k = 0; k < m; ++k) {
      int r = rows ? (*rows)[k] : k;
      block.row(k) = draws.row(r).segment(l.block_offset(g), l.u);
    }
    Eigen::RowVectorXd mean = block.colwise().mean();
    q.means[g] = mean.transpose();
    Eigen::MatrixXd cov =
        m > 1 ? Eigen::MatrixXd((block.rowwise() - mean).transpose() *
                                (block.rowwise() - mean) / (m - 1))
              : Eigen::MatrixXd::Zero(l.u, l.u);
    if (variance_floor)
      for (int k = 0; k < l.u; ++k)
        cov(k, k) = std::max(cov(k, k), (*variance_floor)[l.block_offset(g) + k]);
    q.chol[g] = cholesky_with_ridge(cov);
  }
  return q;
}

struct QdaAssignment {
  int g_hat = 0;      // 0-based component label within the candidate set
  double w_hat = 1.0; // conditional class probability given the candidate set
};

// responsibilities of Eq-style Gaussian classes renormalized over the
// candidate set; the 1/G proportions cancel in the conditional
inline QdaAssignment qda_assign(const Eigen::VectorXd& xi, const QdaModel& q,
                                const std::vector<int>& iset) {
  if (iset.empty()) throw config_error("qda_assign: empty candidate set");
  Eigen::VectorXd lw(iset.size());
  for (size_t k = 0; k < iset.size(); ++k)
    lw[static_cast<int>(k)] = mvn_logpdf_chol(xi, q.means[iset[k]], q.chol[iset[k]]);
  int arg = 0;
  lw.maxCoeff(&arg);
  double lse = log_sum_exp(lw);
  QdaAssignment a;
  if (!std::isfinite(lse)) {
    // degenerate densities: fall back to the smallest Mahalanobis distance
    double best = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < iset.size(); ++k) {
      Eigen::VectorXd z = q.chol[iset[k]].triangularView<Eigen::Lower>().solve(
          xi - q.means[iset[k]]);
      double m2 = z.squaredNorm();
      if (m2 < best) {
        best = m2;
        arg = static_cast<int>(k);
      }
    }
    a.g_hat = iset[arg];
    a.w_hat = 1.0;
    return a;
  }
  a.g_hat = iset[arg];
  a.w_hat = std::exp(lw[arg] - lse);
  return a;
}

// W(xi) = g_hat + 1 - w_hat on 1-based labels; lives in [g_hat, g_hat+1)
inline double summary_w(const Eigen::VectorXd& xi, const QdaModel& q,
                        const std::vector<int>& iset) {
  QdaAssignment a = qda_assign(xi, q, iset);
  return (a.g_hat + 1) + 1.0 - a.w_hat;
}

// W of every component block for each point (rows are R-vectors)
inline Eigen::MatrixXd w_matrix(const Eigen::MatrixXd& points, const BlockLayout& l,
                                const QdaModel& q, const std::vector<int>& iset) {
  Eigen::MatrixXd W(points.rows(), l.G);
  for (int j = 0; j < points.rows(); ++j)
    for (int g = 0; g < l.G; ++g)
      W(j, g) = summary_w(points.row(j).segment(l.block_offset(g), l.u).transpose(), q, iset);
  return W;
}

inline Eigen::VectorXd w_row(const Eigen::VectorXd& point, const BlockLayout& l,
                             const QdaModel& q, const std::vector<int>& iset) {
  Eigen::VectorXd W(l.G);
  for (int g = 0; g < l.G; ++g)
    W[g] = summary_w(point.segment(l.block_offset(g), l.u), q, iset);
  return W;
}

// Delta[g1][g2] = 1 iff W(xi_g1) < W(xi_g2) held at every checked point and
// (g1,g2) is not an overlap edge; min_margin tracks the smallest observed gap
struct DeltaMatrix {
  Eigen::MatrixXi delta;
  Eigen::MatrixXd min_margin;
  int G() const { return static_cast<int>(delta.rows()); }
};

inline void delta_apply_point(DeltaMatrix& dm, const Eigen::VectorXd& w) {
  const int G = dm.G();
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b) {
      if (a == b || dm.delta(a, b) == 0) continue;
      double margin = w[b] - w[a];
      if (margin <= 0.0) {
        dm.delta(a, b) = 0;
      } else if (margin < dm.min_margin(a, b)) {
        dm.min_margin(a, b) = margin;
      }
    }
}

namespace detail {

// cycle hunt via DFS; returns a cycle's edge list or empty
inline std::vector<std::pair<int, int>> find_cycle(const Eigen::MatrixXi& delta) {
  const int G = static_cast<int>(delta.rows());
  std::vector<int> state(G, 0), parent(G, -1);
  std::vector<std::pair<int, int>> cycle;
  std::function<bool(int)> dfs = [&](int v) {
    state[v] = 1;
    for (int w = 0; w < G; ++w) {
      if (!delta(v, w)) continue;
      if (state[w] == 1) {
        cycle.emplace_back(v, w);
        for (int x = v; x != w && parent[x] >= 0; x = parent[x])
          cycle.emplace_back(parent[x], x);
        return true;
      }
      if (state[w] == 0) {
        parent[w] = v;
        if (dfs(w)) return true;
      }
    }
    state[v] = 2;
    return false;
  };
  for (int v = 0; v < G; ++v)
    if (state[v] == 0 && dfs(v)) return cycle;
  return {};
}

}  // namespace detail

// drops minimum-margin edges until the digraph is acyclic (cannot trigger
// when all pairs are checked against one shared sample, kept as a safety net)
inline void resolve_cycles(DeltaMatrix& dm) {
  for (;;) {
    auto cycle = detail::find_cycle(dm.delta);
    if (cycle.empty()) return;
    auto worst = cycle.front();
    for (auto& e : cycle)
      if (dm.min_margin(e.first, e.second) < dm.min_margin(worst.first, worst.second))
        worst = e;
    dm.delta(worst.first, worst.second) = 0;
    warn("delta matrix: dropped cycle edge " + std::to_string(worst.first + 1) + "->" +
         std::to_string(worst.second + 1) + " with minimum margin");
  }
}

inline DeltaMatrix build_delta(const Eigen::MatrixXd& mc_w, const OverlapGraph& overlap) {
  const int G = overlap.G;
  DeltaMatrix dm;
  dm.delta.setOnes(G, G);
  dm.delta.diagonal().setZero();
  dm.min_margin.setConstant(G, G, std::numeric_limits<double>::infinity());
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      if (a != b && overlap.has_edge(a, b)) dm.delta(a, b) = 0;
  for (int j = 0; j < mc_w.rows(); ++j) delta_apply_point(dm, mc_w.row(j).transpose());
  resolve_cycles(dm);
  return dm;
}

// number of vertices on the longest directed path (>=1 for any nonempty graph)
inline int longest_path_vertices(const Eigen::MatrixXi& delta) {
  const int G = static_cast<int>(delta.rows());
  std::vector<int> indeg(G, 0), order;
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      if (delta(a, b)) ++indeg[b];
  std::vector<int> stack;
  for (int v = 0; v < G; ++v)
    if (indeg[v] == 0) stack.push_back(v);
  std::vector<int> depth(G, 1);
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (int w = 0; w < G; ++w) {
      if (!delta(v, w)) continue;
      depth[w] = std::max(depth[w], depth[v] + 1);
      if (--indeg[w] == 0) stack.push_back(w);
    }
  }
  if (static_cast<int>(order.size()) != G)
    throw numerical_error("ordering bound: precedence digraph has a cycle");
  return *std::max_element(depth.begin(), depth.end());
}

inline constexpr long long kBoundSentinel = (1LL << 62);

// G!/|I'|! with saturation well above the tractability threshold
inline long long ordering_bound(const DeltaMatrix& dm) {
  const int G = dm.G();
  int chain = longest_path_vertices(dm.delta);
  long long bound = 1;
  for (int k = chain + 1; k <= G; ++k) {
    if (bound > kBoundSentinel / std::max(k, 1)) return kBoundSentinel;
    bound *= k;
  }
  return bound;
}

struct OrderingSet {
  std::vector<std::vector<int>> omega;  // sequences of 0-based slot labels
  long long bound = 0;
};

// all topological orderings of the Delta digraph, emitted lexicographically
inline OrderingSet enumerate_orderings(const DeltaMatrix& dm, long long cap) {
  const int G = dm.G();
  OrderingSet out;
  out.bound = ordering_bound(dm);
  std::vector<int> indeg(G, 0);
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b)
      if (dm.delta(a, b)) ++indeg[b];
  std::vector<int> seq;
  std::vector<char> used(G, false);
  seq.reserve(G);
  std::function<void()> rec = [&]() {
    if (static_cast<int>(seq.size()) == G) {
      if (static_cast<long long>(out.omega.size()) >= cap)
        throw numerical_error("enumerate_orderings: cap exceeded (shrinkage contract violated)");
      out.omega.push_back(seq);
      return;
    }
    for (int v = 0; v < G; ++v) {
      if (used[v] || indeg[v] != 0) continue;
      used[v] = true;
      seq.push_back(v);
      for (int w = 0; w < G; ++w)
        if (dm.delta(v, w)) --indeg[w];
      rec();
      for (int w = 0; w < G; ++w)
        if (dm.delta(v, w)) ++indeg[w];
      seq.pop_back();
      used[v] = false;
    }
  };
  rec();
  if (out.omega.empty())
    throw numerical_error("enumerate_orderings: no topological ordering (cycle)");
  return out;
}

// blocks sorted by W ascending (ties by original label), then placed so the
// emitted vector realizes the o-permuted ordering constraint: slot o[k] gets
// the k-th smallest W block; proportions travel with their blocks
inline std::vector<int> ordering_permutation(const Eigen::VectorXd& w,
                                             const std::vector<int>& o) {
  const int G = static_cast<int>(w.size());
  std::vector<int> idx(G);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return w[a] < w[b]; });
  std::vector<int> perm(G);
  for (int k = 0; k < G; ++k) perm[idx[k]] = o[k];
  return perm;
}

inline TransformedParameterVector apply_ordering(const ModelSpec& spec,
                                                 const TransformedParameterVector& v,
                                                 const std::vector<int>& o, const QdaModel& q,
                                                 const std::vector<int>& iset) {
  BlockLayout l = layout(spec);
  Eigen::VectorXd w = w_row(v.values, l, q, iset);
  return permute_components(spec, v, ordering_permutation(w, o));
}

// ---------------------------------------------------------------------------
// shrink-until-tractable (Delta/Omega context on the final ellipsoid)

struct ShrinkResult {
  Ellipsoid e;
  DeltaMatrix delta;
  QdaModel qda;
  OverlapGraph overlap;
  Eigen::MatrixXd mc_sample;
  int halvings = 0;
  bool recentered = false;
};

// Halves the radius while the ordering bound exceeds the threshold; recenters
// at the second-half MAP draw when the ellipsoid runs out of sample points,
// refitting the QDA on the draws the recentered ellipsoid contains. For
// G <= 6 the Delta claims are additionally checked against every
// in-ellipsoid permuted image of the flagged second-half draws, which makes
// the efficient sum agree with the naive G!-term sum exactly rather than up
// to Monte Carlo error.
inline ShrinkResult shrink_until_tractable(const ModelSpec& spec, const Ellipsoid& e0,
                                           const Eigen::MatrixXd& second_half,
                                           const Eigen::VectorXd& second_log_post,
                                           const QdaModel& q0, const std::vector<int>& iset,
                                           long long threshold, int N, Rng rng,
                                           const std::vector<int>* aug_rows = nullptr) {
  BlockLayout l = layout(spec);
  const int G = spec.G;
  if (iset.size() <= 1) {
    // W is constant when the candidate set is a singleton, so no amount of
    // shrinking can introduce precedences
    long long gfact = 1;
    for (int k = 2; k <= G; ++k) {
      gfact *= k;
      if (gfact > threshold) break;
    }
    if (gfact > threshold)
      throw numerical_error(
          "shrink_until_tractable: a single distinguishable component cannot "
          "reduce the G! orderings below the threshold");
  }
  Ellipsoid cur = e0;
  QdaModel qda = q0;
  bool recentered = false;
  int halvings = 0;

  std::vector<std::vector<int>> sigmas;
  if (aug_rows && G <= 6) {
    std::vector<int> sigma(G);
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
      sigmas.push_back(sigma);
    } while (std::next_permutation(sigma.begin(), sigma.end()));
  }

  for (int iter = 0;; ++iter) {
    Eigen::MatrixXd mc = cur.sample_uniform(N, rng.derive(iter));
    OverlapGraph og = build_overlap_graph(cur, l, G);
    DeltaMatrix dm = build_delta(w_matrix(mc, l, qda, iset), og);
    for (const auto& sigma : sigmas) {
      for (int t : *aug_rows) {
        Eigen::VectorXd img = permute_values(spec, second_half.row(t).transpose(), sigma);
        if (cur.contains(img)) delta_apply_point(dm, w_row(img, l, qda, iset));
      }
    }
    resolve_cycles(dm);
    long long bound = ordering_bound(dm);
    if (bound <= threshold)
      return ShrinkResult{cur, dm, qda, og, std::move(mc), halvings, recentered};

    if (halvings > 120)
      throw numerical_error("shrink_until_tractable: no tractable ellipsoid found");
    cur = cur.with_radius(0.5 * cur.radius());
    ++halvings;
    bool any_inside = false;
    for (int t = 0; t < second_half.rows() && !any_inside; ++t)
      any_inside = cur.contains(second_half.row(t).transpose());
    if (!any_inside) {
      int map_row = 0;
      for (int t = 1; t < second_half.rows(); ++t)
        if (second_log_post[t] > second_log_post[map_row]) map_row = t;
      cur = cur.with_center(second_half.row(map_row).transpose());
      recentered = true;
      // refit on whatever the recentered ellipsoid still contains (at least
      // the MAP draw); flooring the class variances at the ellipsoid scale
      // keeps the densities comparable across it even from a tiny refit
      // sample, so W stays able to order the components
      std::vector<int> inside;
      for (int t = 0; t < second_half.rows(); ++t)
        if (cur.contains(second_half.row(t).transpose())) inside.push_back(t);
      Eigen::VectorXd floor_vec =
          cur.radius() * cur.radius() * cur.scatter().diagonal();
      qda = fit_qda(second_half, l, &inside, &floor_vec);
    }
  }
}

inline std::string delta_to_dot(const DeltaMatrix& dm) {
  std::ostringstream os;
  os << "digraph delta_G" << dm.G() << " {\n";
  for (int v = 0; v < dm.G(); ++v) os << "  " << (v + 1) << ";\n";
  for (int a = 0; a < dm.G(); ++a)
    for (int b = 0; b < dm.G(); ++b)
      if (dm.delta(a, b)) os << "  " << (a + 1) << " -> " << (b + 1) << ";\n";
  os << "}\n";
  return os.str();
}

inline std::string omega_to_csv(const OrderingSet& os_set) {
  std::ostringstream os;
  os << "ordering\n";
  for (const auto& o : os_set.omega) {
    for (size_t k = 0; k < o.size(); ++k) os << (k ? " " : "") << (o[k] + 1);
    os << "\n";
  }
  return os.str();
}

}  // namespace thames
