#pragma once

#include <Eigen/Dense>
#include <sstream>
#include <string>
#include <vector>

#include "thames/math.hpp"
#include "thames/model.hpp"
#include "thames/rng.hpp"

namespace thames {

// Ellipsoid {x | (x-center)^T scatter^{-1} (x-center) < c^2} with a cached
// Cholesky factor of the scatter matrix.
class Ellipsoid {
 public:
  Ellipsoid() = default;
  Ellipsoid(Eigen::VectorXd center, Eigen::MatrixXd scatter, double radius)
      : center_(std::move(center)), scatter_(std::move(scatter)), radius_(radius) {
    if (radius_ <= 0.0) throw config_error("ellipsoid radius must be > 0");
    chol_ = cholesky_with_ridge(scatter_, 1e-8, &ridge_);
    if (ridge_ > 0.0) scatter_.diagonal().array() += ridge_;
  }

  int dim() const { return static_cast<int>(center_.size()); }
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::MatrixXd& scatter() const { return scatter_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  double radius() const { return radius_; }

  double mahalanobis2(const Eigen::VectorXd& x) const {
    Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - center_);
    return z.squaredNorm();
  }

  bool contains(const Eigen::VectorXd& x) const {
    return mahalanobis2(x) < radius_ * radius_;
  }

  double log_volume() const {
    const int R = dim();
    return R * std::log(radius_) + 0.5 * R * std::log(M_PI) -
           std::lgamma(0.5 * R + 1.0) + chol_.diagonal().array().log().sum();
  }

  double volume() const { return std::exp(log_volume()); }

  Ellipsoid with_radius(double c) const { return Ellipsoid(center_, scatter_, c); }
  Ellipsoid with_center(const Eigen::VectorXd& c) const {
    return Ellipsoid(c, scatter_, radius_);
  }

  // uniform draws: direction from a normalized Gaussian, radius from U^{1/R};
  // the stream is taken by value so the caller's generator is untouched
  Eigen::MatrixXd sample_uniform(int N, Rng rng) const {
    const int R = dim();
    Eigen::MatrixXd out(N, R);
    for (int j = 0; j < N; ++j) {
      Eigen::VectorXd z = rng.normal_vector(R);
      double norm = z.norm();
      while (norm == 0.0) {
        z = rng.normal_vector(R);
        norm = z.norm();
      }
      double r = std::pow(rng.uniform_pos(), 1.0 / R);
      Eigen::VectorXd dir = chol_.triangularView<Eigen::Lower>() * z;
      out.row(j) = (center_ + (radius_ * r / norm) * dir).transpose();
    }
    return out;
  }

 private:
  Eigen::VectorXd center_;
  Eigen::MatrixXd scatter_;
  Eigen::MatrixXd chol_;
  double radius_ = 1.0;
  double ridge_ = 0.0;
};

// sample mean / covariance of the first-half draws; ridge engages for short
// or degenerate samples
inline Ellipsoid fit_ellipsoid(const Eigen::MatrixXd& first_half, double c) {
  const int m = static_cast<int>(first_half.rows());
  const int R = static_cast<int>(first_half.cols());
  if (m < 1) throw config_error("fit_ellipsoid: no draws");
  Eigen::VectorXd center = first_half.colwise().mean().transpose();
  Eigen::MatrixXd centered = first_half.rowwise() - center.transpose();
  Eigen::MatrixXd scatter =
      m > 1 ? Eigen::MatrixXd(centered.transpose() * centered / (m - 1))
            : Eigen::MatrixXd::Zero(R, R);
  if (m < R + 2) warn("fit_ellipsoid: fewer than R+2 draws; ridge regularization engaged");
  for (int k = 0; k < R; ++k)
    if (!(scatter(k, k) > 0.0)) {
      warn("fit_ellipsoid: zero-variance coordinate " + std::to_string(k));
      break;
    }
  return Ellipsoid(std::move(center), std::move(scatter), c);
}

inline double default_radius(int R) { return std::sqrt(R + 1.0); }

// minimum of the Mahalanobis form over the subspace {xi_g1 = xi_g2}; the KKT
// system reduces to the u x u equation (A Sigma A^T) nu = A theta_hat
inline double hyperplane_min_mahalanobis2(const Ellipsoid& e, const BlockLayout& l, int g1,
                                          int g2) {
  if (g1 == g2) throw config_error("hyperplane test needs distinct components");
  const int u = l.u;
  const int o1 = l.block_offset(g1), o2 = l.block_offset(g2);
  Eigen::VectorXd r(u);
  for (int k = 0; k < u; ++k) r[k] = e.center()[o1 + k] - e.center()[o2 + k];
  Eigen::MatrixXd M(u, u);
  const Eigen::MatrixXd& S = e.scatter();
  for (int a = 0; a < u; ++a)
    for (int b = 0; b < u; ++b)
      M(a, b) = S(o1 + a, o1 + b) - S(o1 + a, o2 + b) - S(o2 + a, o1 + b) + S(o2 + a, o2 + b);
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) {
    warn("hyperplane test: singular constraint system; ridge applied");
    M.diagonal().array() += 1e-8 * std::max(M.trace() / u, 1e-8);
    llt.compute(M);
    if (llt.info() != Eigen::Success)
      throw numerical_error("hyperplane test: constraint system not solvable");
  }
  return r.dot(llt.solve(r));
}

inline bool hyperplane_crosses(const Ellipsoid& e, const BlockLayout& l, int g1, int g2) {
  return hyperplane_min_mahalanobis2(e, l, g1, g2) <= e.radius() * e.radius();
}

struct OverlapGraph {
  int G = 0;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> adj;

  bool has_edge(int a, int b) const { return adj(a, b); }
  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int a = 0; a < G; ++a)
      for (int b = a + 1; b < G; ++b)
        if (adj(a, b)) out.emplace_back(a, b);
    return out;
  }
};

inline OverlapGraph build_overlap_graph(const Ellipsoid& e, const BlockLayout& l, int G) {
  OverlapGraph g;
  g.G = G;
  g.adj.setConstant(G, G, false);
  for (int a = 0; a < G; ++a)
    for (int b = a + 1; b < G; ++b)
      if (hyperplane_crosses(e, l, a, b)) {
        g.adj(a, b) = true;
        g.adj(b, a) = true;
      }
  return g;
}

// greedy independent set, repeatedly taking the minimum-degree node (lowest
// label on ties) and deleting its neighborhood; quadratic in G
inline std::vector<int> max_independent_set_greedy(const OverlapGraph& g) {
  std::vector<char> alive(g.G, true);
  std::vector<int> iset;
  for (;;) {
    int best = -1, best_deg = -1;
    for (int v = 0; v < g.G; ++v) {
      if (!alive[v]) continue;
      int deg = 0;
      for (int w = 0; w < g.G; ++w)
        if (alive[w] && w != v && g.adj(v, w)) ++deg;
      if (best < 0 || deg < best_deg) {
        best = v;
        best_deg = deg;
      }
    }
    if (best < 0) break;
    iset.push_back(best);
    alive[best] = false;
    for (int w = 0; w < g.G; ++w)
      if (g.adj(best, w)) alive[w] = false;
  }
  std::sort(iset.begin(), iset.end());
  return iset;
}

inline int criterion_of_overlap(int i_size, int G) { return 2 * i_size - G; }

// stable DOT export; labels are 1-based component indices
inline std::string overlap_graph_to_dot(const OverlapGraph& g) {
  std::ostringstream os;
  os << "graph overlap_G" << g.G << " {\n";
  for (int v = 0; v < g.G; ++v) os << "  " << (v + 1) << ";\n";
  for (auto [a, b] : g.edges()) os << "  " << (a + 1) << " -- " << (b + 1) << ";\n";
  os << "}\n";
  return os.str();
}

}  // namespace thames
