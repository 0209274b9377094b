#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "thames/model.hpp"
#include "thames/sampler.hpp"

namespace thames {

struct RelabelledRun {
  PosteriorRun base;
  std::vector<std::vector<int>> perms;  // perms[t][g] = destination slot of component g
  int pivot_index = 0;

  int T() const { return base.T(); }
  int R() const { return base.R(); }
};

// MAP draw; ties resolved to the smallest index
inline int choose_pivot(const PosteriorRun& run) {
  if (run.T() < 1) throw config_error("empty run");
  int best = 0;
  for (int t = 1; t < run.T(); ++t)
    if (run.log_post[t] > run.log_post[best]) best = t;
  return best;
}

namespace detail {

// exact assignment maximizing sum_g score(g, sigma(g)); O(G^3)
inline std::vector<int> hungarian_max(const Eigen::MatrixXd& score) {
  const int n = static_cast<int>(score.rows());
  // minimize negated scores with the standard potentials/augmenting-path scheme
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, std::numeric_limits<double>::infinity());
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      double delta = std::numeric_limits<double>::infinity();
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = -score(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> sigma(n, 0);
  for (int j = 1; j <= n; ++j) sigma[p[j] - 1] = j - 1;
  return sigma;
}

// distinct pivot labels in order of first occurrence, then missing labels
inline std::vector<int> pivot_label_order(const Eigen::VectorXi& pivot, int G) {
  std::vector<int> order;
  std::vector<char> seen(G, false);
  for (int i = 0; i < pivot.size(); ++i) {
    int l = pivot[i];
    if (!seen[l]) {
      seen[l] = true;
      order.push_back(l);
    }
  }
  for (int g = 0; g < G; ++g)
    if (!seen[g]) order.push_back(g);
  return order;
}

}  // namespace detail

// ECR: per draw, the G x G assignment maximizing label co-occurrence with the
// pivot allocation. For small G all permutations are enumerated and ties are
// broken by the permuted blocks read in the pivot's first-occurrence label
// order; that key is invariant under a global relabelling of the input, which
// keeps the whole pipeline deterministic under label switching of the chain.
inline RelabelledRun ecr_relabel(const PosteriorRun& run) {
  const int G = run.spec.G;
  const int n = run.n();
  const int T = run.T();
  BlockLayout l = layout(run.spec);

  RelabelledRun rr;
  rr.base = run;
  rr.pivot_index = choose_pivot(run);
  rr.perms.assign(T, std::vector<int>(G));

  Eigen::VectorXi pivot = run.allocations.row(rr.pivot_index).transpose();
  std::vector<int> label_order = detail::pivot_label_order(pivot, G);

  const bool enumerate = G <= 6;
  std::vector<int> base_perm(G);
  std::iota(base_perm.begin(), base_perm.end(), 0);

  Eigen::MatrixXd cooc(G, G);
  for (int t = 0; t < T; ++t) {
    cooc.setZero();
    for (int i = 0; i < n; ++i) cooc(run.allocations(t, i), pivot[i]) += 1.0;
    if (G == 1) {
      rr.perms[t] = {0};
      continue;
    }
    if (!enumerate) {
      rr.perms[t] = detail::hungarian_max(cooc);
      continue;
    }
    std::vector<int> sigma = base_perm;
    std::vector<int> best = sigma;
    double best_score = -1.0;
    std::vector<int> inv(G), best_inv(G);
    Eigen::VectorXd draw = run.draws.row(t).transpose();
    do {
      double score = 0.0;
      for (int g = 0; g < G; ++g) score += cooc(g, sigma[g]);
      if (score < best_score) continue;
      for (int g = 0; g < G; ++g) inv[sigma[g]] = g;
      if (score > best_score) {
        best_score = score;
        best = sigma;
        best_inv = inv;
        continue;
      }
      // tie: lexicographic comparison of image blocks at the pivot-ordered slots
      int cmp = 0;
      for (int slot_idx = 0; slot_idx < G && cmp == 0; ++slot_idx) {
        int slot = label_order[slot_idx];
        const double* a = draw.data() + l.block_offset(inv[slot]);
        const double* b = draw.data() + l.block_offset(best_inv[slot]);
        for (int k = 0; k < l.u; ++k) {
          if (a[k] < b[k]) {
            cmp = -1;
            break;
          }
          if (a[k] > b[k]) {
            cmp = 1;
            break;
          }
        }
      }
      if (cmp < 0) {
        best = sigma;
        best_inv = inv;
      }
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    rr.perms[t] = best;
  }
  return rr;
}

// draw matrix with the per-draw permutations applied
inline Eigen::MatrixXd apply_relabelling(const RelabelledRun& rr) {
  Eigen::MatrixXd out(rr.T(), rr.R());
  for (int t = 0; t < rr.T(); ++t)
    out.row(t) =
        permute_values(rr.base.spec, rr.base.draws.row(t).transpose(), rr.perms[t]).transpose();
  return out;
}

inline Eigen::MatrixXi relabelled_allocations(const RelabelledRun& rr) {
  Eigen::MatrixXi out(rr.T(), rr.base.n());
  for (int t = 0; t < rr.T(); ++t)
    for (int i = 0; i < rr.base.n(); ++i)
      out(t, i) = rr.perms[t][rr.base.allocations(t, i)];
  return out;
}

inline int mismatch_count(const Eigen::VectorXi& labels, const Eigen::VectorXi& pivot,
                          const std::vector<int>& perm) {
  int m = 0;
  for (int i = 0; i < labels.size(); ++i)
    if (perm[labels[i]] != pivot[i]) ++m;
  return m;
}

}  // namespace thames
