#pragma once

#include <Eigen/Dense>
#include <vector>

#include "thames/math.hpp"
#include "thames/rng.hpp"

namespace thames {

struct MixtureScenario {
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  Eigen::VectorXd tau;
  int d() const { return static_cast<int>(means.at(0).size()); }
  int G() const { return static_cast<int>(means.size()); }
};

// Univariate designs with overlap controlled by rho in [0,1]: means are
// 3 +- (2(1-rho)+1) patterns, so rho=0 gives (0,6)/(0,3,6) and rho=1 gives
// (2,4)/(2,3,4); unit variances, unequal true proportions.
inline MixtureScenario uni_toy_scenario(int G, double rho) {
  if (G != 2 && G != 3) throw config_error("toy scenario supports G in {2,3}");
  if (rho < 0.0 || rho > 1.0) throw config_error("rho must lie in [0,1]");
  MixtureScenario s;
  double spread = 2.0 * (1.0 - rho) + 1.0;
  std::vector<double> dir = G == 2 ? std::vector<double>{-1.0, 1.0}
                                   : std::vector<double>{-1.0, 0.0, 1.0};
  for (int g = 0; g < G; ++g) {
    s.means.push_back(Eigen::VectorXd::Constant(1, 3.0 + spread * dir[g]));
    s.covs.push_back(Eigen::MatrixXd::Identity(1, 1));
  }
  s.tau.resize(G);
  if (G == 2)
    s.tau << 1.0 / 3.0, 2.0 / 3.0;
  else
    s.tau << 2.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0;
  return s;
}

// strongly separated d-dimensional design: mean gaps of `gap` per coordinate,
// identity covariances, equal proportions
inline MixtureScenario separated_scenario(int G, int d, double gap = 100.0) {
  MixtureScenario s;
  for (int g = 0; g < G; ++g) {
    s.means.push_back(Eigen::VectorXd::Constant(d, gap * (g + 1)));
    s.covs.push_back(Eigen::MatrixXd::Identity(d, d));
  }
  s.tau = Eigen::VectorXd::Constant(G, 1.0 / G);
  return s;
}

struct SimulatedDataset {
  Eigen::MatrixXd data;
  std::vector<int> labels;
};

inline SimulatedDataset simulate_mixture(const MixtureScenario& s, int n, std::uint64_t seed) {
  SimulatedDataset out;
  const int d = s.d();
  out.data.resize(n, d);
  out.labels.resize(n);
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> chols;
  for (const auto& c : s.covs) chols.push_back(cholesky_with_ridge(c));
  Eigen::VectorXd cum(s.G());
  double acc = 0.0;
  for (int g = 0; g < s.G(); ++g) {
    acc += s.tau[g];
    cum[g] = acc;
  }
  for (int i = 0; i < n; ++i) {
    double u = rng.uniform();
    int g = 0;
    while (g + 1 < s.G() && u > cum[g]) ++g;
    out.labels[i] = g;
    out.data.row(i) =
        (s.means[g] + chols[g] * rng.normal_vector(d)).transpose();
  }
  return out;
}

}  // namespace thames
