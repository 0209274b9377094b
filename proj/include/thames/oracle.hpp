#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "thames/math.hpp"
#include "thames/model.hpp"
#include "thames/sampler.hpp"

namespace thames {

// ---------------------------------------------------------------------------
// exact evidence for the toy model by summing over all G^n allocations

namespace detail {

// one component's contribution to log MVN_n(Y; 0, I + O): the within-block
// covariance is I + ones, so det = 1 + cnt and the quadratic form telescopes
inline double toy_component_term(double cnt, double sum, double sumsq) {
  if (cnt == 0.0) return 0.0;
  return -0.5 * cnt * log_2pi - 0.5 * std::log1p(cnt) -
         0.5 * (sumsq - sum * sum / (1.0 + cnt));
}

}  // namespace detail

inline double exact_marglik_bruteforce(const Eigen::VectorXd& y, int G) {
  const int n = static_cast<int>(y.size());
  if (n * std::log(static_cast<double>(G)) > std::log(1e7))
    throw config_error("brute-force guard: G^n exceeds 1e7 allocations (" +
                       std::to_string(std::pow(static_cast<double>(G), n)) + ")");
  std::vector<int> alloc(n, 0);
  Eigen::VectorXd cnt = Eigen::VectorXd::Zero(G), sum = Eigen::VectorXd::Zero(G),
                  sumsq = Eigen::VectorXd::Zero(G);
  cnt[0] = n;
  sum[0] = y.sum();
  sumsq[0] = y.squaredNorm();
  double total = 0.0;
  for (int g = 0; g < G; ++g) total += detail::toy_component_term(cnt[g], sum[g], sumsq[g]);

  auto move_point = [&](int i, int from, int to) {
    total -= detail::toy_component_term(cnt[from], sum[from], sumsq[from]);
    total -= detail::toy_component_term(cnt[to], sum[to], sumsq[to]);
    cnt[from] -= 1.0;
    sum[from] -= y[i];
    sumsq[from] -= y[i] * y[i];
    cnt[to] += 1.0;
    sum[to] += y[i];
    sumsq[to] += y[i] * y[i];
    total += detail::toy_component_term(cnt[from], sum[from], sumsq[from]);
    total += detail::toy_component_term(cnt[to], sum[to], sumsq[to]);
  };

  LogSumAccumulator acc;
  acc.add(total);
  for (;;) {
    int i = 0;
    while (i < n && alloc[i] == G - 1) {
      move_point(i, G - 1, 0);
      alloc[i] = 0;
      ++i;
    }
    if (i == n) break;
    move_point(i, alloc[i], alloc[i] + 1);
    alloc[i] += 1;
    acc.add(total);
  }
  return acc.value() - n * std::log(static_cast<double>(G));
}

inline double exact_marglik_bruteforce(const Eigen::MatrixXd& data, int G) {
  if (data.cols() != 1) throw config_error("brute-force oracle expects univariate data");
  return exact_marglik_bruteforce(Eigen::VectorXd(data.col(0)), G);
}

// ---------------------------------------------------------------------------
// MAP allocation and the well-separated closed form

// argmax of the draw-averaged responsibilities, ties to the lowest label
inline std::vector<int> map_allocation(const PosteriorRun& run, const Eigen::MatrixXd& data) {
  const int n = static_cast<int>(data.rows());
  Eigen::MatrixXd zbar = Eigen::MatrixXd::Zero(n, run.spec.G);
  for (int t = 0; t < run.T(); ++t)
    zbar += responsibilities(run.spec, data, run.draws.row(t).transpose());
  std::vector<int> labels(n, 0);
  for (int i = 0; i < n; ++i) {
    int arg = 0;
    for (int g = 1; g < run.spec.G; ++g)
      if (zbar(i, g) > zbar(i, arg)) arg = g;
    labels[i] = arg;
  }
  return labels;
}

inline bool check_separation(const PosteriorRun& run) {
  for (int t = 1; t < run.T(); ++t)
    if ((run.allocations.row(t).array() != run.allocations.row(0).array()).any())
      return false;
  return true;
}

// Normal-Inverse-Wishart evidence of one data block under the mvn-full prior
inline double niw_log_evidence(const Eigen::MatrixXd& block, const HyperParams& h) {
  const int ng = static_cast<int>(block.rows());
  if (ng == 0) return 0.0;
  const int d = static_cast<int>(block.cols());
  Eigen::VectorXd ybar = block.colwise().mean().transpose();
  Eigen::MatrixXd centered = block.rowwise() - ybar.transpose();
  Eigen::MatrixXd S = centered.transpose() * centered;
  double kappa_n = h.kappa0 + ng;
  double phi_n = h.phi0 + ng;
  Eigen::VectorXd dv = ybar - h.beta;
  Eigen::MatrixXd Lambda_n = h.Lambda + S + (h.kappa0 * ng / kappa_n) * (dv * dv.transpose());
  double logdet0 = log_det_from_chol(cholesky_with_ridge(h.Lambda));
  double logdetn = log_det_from_chol(cholesky_with_ridge(Lambda_n));
  return -0.5 * ng * d * std::log(M_PI) + lgamma_multivariate(d, 0.5 * phi_n) -
         lgamma_multivariate(d, 0.5 * h.phi0) + 0.5 * h.phi0 * logdet0 -
         0.5 * phi_n * logdetn + 0.5 * d * (std::log(h.kappa0) - std::log(kappa_n));
}

// Normal-Inverse-Gamma evidence of one coordinate under the mvn-diag prior
inline double nig_log_evidence(const Eigen::VectorXd& y, double a0, double b0, double kappa0,
                               double beta) {
  const int ng = static_cast<int>(y.size());
  if (ng == 0) return 0.0;
  double ybar = y.mean();
  double ss = (y.array() - ybar).square().sum();
  double kappa_n = kappa0 + ng;
  double a_n = a0 + 0.5 * ng;
  double b_n = b0 + 0.5 * ss + 0.5 * kappa0 * ng * (ybar - beta) * (ybar - beta) / kappa_n;
  return -0.5 * ng * log_2pi + 0.5 * (std::log(kappa0) - std::log(kappa_n)) +
         a0 * std::log(b0) - a_n * std::log(b_n) + std::lgamma(a_n) - std::lgamma(a0);
}

// p(Y) ~= G! p(Y|C0) p(C0) for strongly separated components; exact component
// evidences from conjugacy, empty components contribute nothing
inline double wellsep_marglik(const Eigen::MatrixXd& data, const ModelSpec& spec,
                              const std::vector<int>& c0) {
  if (spec.family != Family::MvnFull && spec.family != Family::MvnDiag)
    throw config_error("well-separated oracle supports the mvn families only");
  const int n = static_cast<int>(data.rows());
  const int G = spec.G;
  std::vector<std::vector<int>> members(G);
  for (int i = 0; i < n; ++i) members.at(c0[i]).push_back(i);

  double log_pc0 = std::lgamma(G) - std::lgamma(G + n);
  for (int g = 0; g < G; ++g) log_pc0 += std::lgamma(1.0 + members[g].size());

  double log_py_c0 = 0.0;
  for (int g = 0; g < G; ++g) {
    const auto& idx = members[g];
    if (idx.empty()) continue;
    Eigen::MatrixXd block(idx.size(), spec.d);
    for (size_t k = 0; k < idx.size(); ++k) block.row(k) = data.row(idx[k]);
    if (spec.family == Family::MvnFull) {
      log_py_c0 += niw_log_evidence(block, spec.hyper);
    } else {
      for (int r = 0; r < spec.d; ++r)
        log_py_c0 += nig_log_evidence(block.col(r), spec.hyper.phi0, spec.hyper.lambda_r[r],
                                      spec.hyper.kappa0, spec.hyper.beta[r]);
    }
  }
  return std::lgamma(G + 1.0) + log_py_c0 + log_pc0;
}

}  // namespace thames
