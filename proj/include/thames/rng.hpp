#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>

#include "thames/math.hpp"

namespace thames {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

// Deterministic RNG with hand-rolled variate generators. std::* distributions
// are implementation-defined, so every sampler here is spelled out to keep
// runs bit-reproducible for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(detail::splitmix64(seed)) {}

  // independent stream for a named substep
  Rng derive(std::uint64_t stream) const {
    return Rng(detail::splitmix64(seed_ ^ (0x632be59bd9b4e019ULL * (stream + 1))));
  }

  double uniform() {
    // 53-bit mantissa in [0,1)
    return (engine_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double normal() {
    if (has_cache_) {
      has_cache_ = false;
      return cache_;
    }
    // Box-Muller
    double u1 = uniform_pos(), u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    cache_ = r * std::sin(a);
    has_cache_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Marsaglia-Tsang; shape < 1 handled by the boost relation
  double gamma(double shape, double scale = 1.0) {
    if (shape < 1.0) {
      double u = uniform_pos();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

  double gamma_rate(double shape, double rate) { return gamma(shape, 1.0 / rate); }

  // InvGamma(shape, rate b): density b^a/Gamma(a) x^{-a-1} exp(-b/x)
  double inv_gamma(double shape, double rate) { return 1.0 / gamma_rate(shape, rate); }

  double chi_squared(double dof) { return gamma(0.5 * dof, 2.0); }

  Eigen::VectorXd dirichlet(const Eigen::VectorXd& conc) {
    Eigen::VectorXd g(conc.size());
    for (int i = 0; i < conc.size(); ++i) g[i] = gamma(conc[i]);
    double s = g.sum();
    if (s <= 0.0) {
      // extreme underflow: fall back to the argmax vertex neighborhood
      int k;
      conc.maxCoeff(&k);
      g.setConstant(1e-12);
      g[k] = 1.0;
      s = g.sum();
    }
    return g / s;
  }

  // index draw from unnormalized log weights
  int categorical_logits(const Eigen::VectorXd& logw) {
    double lse = log_sum_exp(logw);
    double u = uniform();
    double acc = 0.0;
    for (int g = 0; g + 1 < logw.size(); ++g) {
      acc += std::exp(logw[g] - lse);
      if (u < acc) return g;
    }
    return static_cast<int>(logw.size()) - 1;
  }

  // Sigma ~ InvWishart(dof, scale), via Bartlett on scale^{-1}
  Eigen::MatrixXd inv_wishart(double dof, const Eigen::MatrixXd& scale) {
    const int d = static_cast<int>(scale.rows());
    Eigen::MatrixXd P = cholesky_with_ridge(scale);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      A(i, i) = std::sqrt(chi_squared(dof - i));
      for (int j = 0; j < i; ++j) A(i, j) = normal();
    }
    // X = P^{-T} A A^T P^{-1} ~ Wishart(dof, scale^{-1}); Sigma = X^{-1} = M M^T
    // with M = P A^{-T}
    Eigen::MatrixXd Ainv_t = A.triangularView<Eigen::Lower>()
                                 .solve(Eigen::MatrixXd::Identity(d, d))
                                 .transpose();
    Eigen::MatrixXd M = P.triangularView<Eigen::Lower>() * Ainv_t;
    return M * M.transpose();
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cache_ = 0.0;
  bool has_cache_ = false;
};

}  // namespace thames
