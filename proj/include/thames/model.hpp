#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "thames/math.hpp"

namespace thames {

// Supported mixture families. The two univariate families are d=1; "fixed
// sigma" pins tau=1/G and sigma=1 via point masses so only the means are free.
enum class Family { UniFixedSigma, UniHierarchical, MvnFull, MvnDiag };

inline std::string family_name(Family f) {
  switch (f) {
    case Family::UniFixedSigma: return "uni-fixed";
    case Family::UniHierarchical: return "uni-hier";
    case Family::MvnFull: return "mvn-full";
    case Family::MvnDiag: return "mvn-diag";
  }
  return "?";
}

inline Family family_from_name(const std::string& s) {
  if (s == "uni-fixed" || s == "uni-fixed-sigma") return Family::UniFixedSigma;
  if (s == "uni-hier" || s == "uni-hierarchical") return Family::UniHierarchical;
  if (s == "mvn-full") return Family::MvnFull;
  if (s == "mvn-diag") return Family::MvnDiag;
  throw config_error("unknown model family: " + s);
}

struct HyperParams {
  Eigen::VectorXd e;  // Dirichlet concentrations (size G)

  // uni-hierarchical: mu_g ~ N(x0, lambda^2), sigma^2_g | zeta ~ InvGamma(sigma_shape, zeta),
  // zeta ~ Gamma(zeta_shape, 10/lambda^2)
  double x0 = 0.0;
  double lambda = 1.0;
  double sigma_shape = 2.0;
  double zeta_shape = 0.2;

  // mvn: mu_g | Sigma_g ~ MVN(beta, Sigma_g/kappa0);
  // full: Sigma_g ~ InvWishart(phi0, Lambda); diag: sigma^2_{g,r} ~ InvGamma(phi0, lambda_r)
  Eigen::VectorXd beta;
  double kappa0 = 1e-5;
  double phi0 = 0.0;
  Eigen::MatrixXd Lambda;
  Eigen::VectorXd lambda_r;
};

struct ModelSpec {
  Family family = Family::UniFixedSigma;
  int G = 1;
  int d = 1;
  HyperParams hyper;
};

// Flat layout of the transformed parameter vector: G blocks of size u
// (component parameters), then the first G-1 simplex coordinates of tau.
struct BlockLayout {
  int G = 0;
  int u = 0;
  int tau_dim = 0;
  int R = 0;
  int block_offset(int g) const { return g * u; }
  int tau_offset() const { return G * u; }
};

inline int block_dimension(const ModelSpec& spec) {
  switch (spec.family) {
    case Family::UniFixedSigma: return 1;
    case Family::UniHierarchical: return 2;
    case Family::MvnFull: return spec.d + spec.d * (spec.d + 1) / 2;
    case Family::MvnDiag: return 2 * spec.d;
  }
  throw config_error("invalid family");
}

inline BlockLayout layout(const ModelSpec& spec) {
  BlockLayout l;
  l.G = spec.G;
  l.u = block_dimension(spec);
  l.tau_dim = spec.family == Family::UniFixedSigma ? 0 : spec.G - 1;
  l.R = l.G * l.u + l.tau_dim;
  return l;
}

inline int param_dimension(const ModelSpec& spec) { return layout(spec).R; }

inline void validate_spec(const ModelSpec& spec) {
  if (spec.G < 1) throw config_error("component count G must be >= 1");
  if (spec.d < 1) throw config_error("data dimension d must be >= 1");
  bool univariate =
      spec.family == Family::UniFixedSigma || spec.family == Family::UniHierarchical;
  if (univariate && spec.d != 1) throw config_error("univariate family requires d = 1");
  const HyperParams& h = spec.hyper;
  if (spec.family != Family::UniFixedSigma) {
    if (h.e.size() != spec.G) throw config_error("Dirichlet concentration size != G");
    if ((h.e.array() <= 0.0).any()) throw config_error("Dirichlet concentrations must be > 0");
  }
  if (spec.family == Family::UniHierarchical && h.lambda <= 0.0)
    throw config_error("lambda must be > 0");
  if (spec.family == Family::MvnFull || spec.family == Family::MvnDiag) {
    if (h.kappa0 <= 0.0) throw config_error("kappa0 must be > 0");
    if (h.beta.size() != spec.d) throw config_error("prior mean size != d");
  }
  if (spec.family == Family::MvnFull) {
    if (h.phi0 < spec.d) throw config_error("InvWishart dof must be >= d");
    if (h.Lambda.rows() != spec.d || h.Lambda.cols() != spec.d)
      throw config_error("InvWishart scale must be d x d");
    Eigen::LLT<Eigen::MatrixXd> llt(h.Lambda);
    if (llt.info() != Eigen::Success)
      throw config_error("InvWishart scale must be positive definite");
  }
  if (spec.family == Family::MvnDiag) {
    if (h.phi0 <= 0.0) throw config_error("InvGamma shape must be > 0");
    if (h.lambda_r.size() != spec.d) throw config_error("InvGamma rate vector size != d");
    if ((h.lambda_r.array() <= 0.0).any()) throw config_error("InvGamma rates must be > 0");
  }
}

// Natural-scale parameters. cov is the 1x1 variance for univariate families
// and a diagonal matrix for mvn-diag.
struct ParameterVector {
  std::vector<Eigen::VectorXd> mu;
  std::vector<Eigen::MatrixXd> cov;
  Eigen::VectorXd tau;
};

struct TransformedParameterVector {
  Eigen::VectorXd values;
  double log_jacobian = 0.0;
};

namespace detail {

// writes one component block (transformed scale) at dst
inline void write_block(const ModelSpec& spec, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& cov, double* dst) {
  const int d = spec.d;
  switch (spec.family) {
    case Family::UniFixedSigma:
      dst[0] = mu[0];
      return;
    case Family::UniHierarchical:
      if (cov(0, 0) <= 0.0) throw data_error("non-positive variance");
      dst[0] = mu[0];
      dst[1] = std::log(cov(0, 0));
      return;
    case Family::MvnDiag:
      for (int r = 0; r < d; ++r) {
        if (cov(r, r) <= 0.0) throw data_error("non-positive variance");
        dst[r] = mu[r];
        dst[d + r] = std::log(cov(r, r));
      }
      return;
    case Family::MvnFull: {
      for (int r = 0; r < d; ++r) dst[r] = mu[r];
      Eigen::MatrixXd m = cov;
      Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success) {
        // ridge of 1e-10 * mean diagonal guards degenerate draws
        double ridge = 1e-10 * m.diagonal().mean();
        if (!(ridge > 0.0)) throw data_error("covariance not positive definite");
        m.diagonal().array() += ridge;
        llt.compute(m);
        if (llt.info() != Eigen::Success)
          throw data_error("covariance not positive definite");
      }
      Eigen::MatrixXd L = llt.matrixL();
      int k = d;
      for (int j = 0; j < d; ++j) {
        dst[k++] = std::log(L(j, j));
        for (int i = j + 1; i < d; ++i) dst[k++] = L(i, j);
      }
      return;
    }
  }
}

// reconstructs (mu, lower Cholesky factor of the covariance) from one block
inline void read_block(const ModelSpec& spec, const double* src, Eigen::VectorXd& mu,
                       Eigen::MatrixXd& L) {
  const int d = spec.d;
  mu.resize(d);
  L.setZero(d, d);
  switch (spec.family) {
    case Family::UniFixedSigma:
      mu[0] = src[0];
      L(0, 0) = 1.0;
      return;
    case Family::UniHierarchical:
      mu[0] = src[0];
      L(0, 0) = std::exp(0.5 * src[1]);
      return;
    case Family::MvnDiag:
      for (int r = 0; r < d; ++r) {
        mu[r] = src[r];
        L(r, r) = std::exp(0.5 * src[d + r]);
      }
      return;
    case Family::MvnFull: {
      for (int r = 0; r < d; ++r) mu[r] = src[r];
      int k = d;
      for (int j = 0; j < d; ++j) {
        L(j, j) = std::exp(src[k++]);
        for (int i = j + 1; i < d; ++i) L(i, j) = src[k++];
      }
      return;
    }
  }
}

// per-block log |d(natural)/d(transformed)|
inline double block_log_jacobian(const ModelSpec& spec, const double* src) {
  const int d = spec.d;
  switch (spec.family) {
    case Family::UniFixedSigma:
      return 0.0;
    case Family::UniHierarchical:
      return src[1];  // sigma^2 = exp(eta)
    case Family::MvnDiag: {
      double s = 0.0;
      for (int r = 0; r < d; ++r) s += src[d + r];
      return s;
    }
    case Family::MvnFull: {
      // Sigma = L L^T with logged diagonal: d log 2 + sum_j (d - j + 2) log L_jj
      double s = d * std::log(2.0);
      int k = d;
      for (int j = 0; j < d; ++j) {
        s += (d - j + 1) * src[k];  // (d - (j+1) + 2) with 0-based j
        k += d - j;
      }
      return s;
    }
  }
  return 0.0;
}

}  // namespace detail

inline double log_jacobian(const ModelSpec& spec, const Eigen::VectorXd& values) {
  BlockLayout l = layout(spec);
  double s = 0.0;
  for (int g = 0; g < l.G; ++g)
    s += detail::block_log_jacobian(spec, values.data() + l.block_offset(g));
  return s;
}

inline TransformedParameterVector transform(const ModelSpec& spec,
                                            const ParameterVector& theta) {
  BlockLayout l = layout(spec);
  TransformedParameterVector v;
  v.values.resize(l.R);
  for (int g = 0; g < l.G; ++g)
    detail::write_block(spec, theta.mu[g], theta.cov[g], v.values.data() + l.block_offset(g));
  for (int g = 0; g < l.tau_dim; ++g) v.values[l.tau_offset() + g] = theta.tau[g];
  v.log_jacobian = log_jacobian(spec, v.values);
  return v;
}

// tau vector implied by the free simplex coordinates; any entry <= 0 marks an
// out-of-support point.
inline Eigen::VectorXd tau_from_values(const ModelSpec& spec, const Eigen::VectorXd& values) {
  BlockLayout l = layout(spec);
  Eigen::VectorXd tau(spec.G);
  if (l.tau_dim == 0) {
    tau.setConstant(1.0 / spec.G);
    return tau;
  }
  double rest = 1.0;
  for (int g = 0; g < l.tau_dim; ++g) {
    tau[g] = values[l.tau_offset() + g];
    rest -= tau[g];
  }
  tau[spec.G - 1] = rest;
  return tau;
}

inline ParameterVector untransform(const ModelSpec& spec,
                                   const TransformedParameterVector& v) {
  BlockLayout l = layout(spec);
  if (v.values.size() != l.R) throw config_error("transformed vector has wrong length");
  ParameterVector theta;
  theta.mu.resize(l.G);
  theta.cov.resize(l.G);
  Eigen::MatrixXd L;
  for (int g = 0; g < l.G; ++g) {
    detail::read_block(spec, v.values.data() + l.block_offset(g), theta.mu[g], L);
    theta.cov[g] = L * L.transpose();
  }
  theta.tau = tau_from_values(spec, v.values);
  if ((theta.tau.array() <= 0.0).any())
    throw data_error("reconstructed tau outside the open simplex");
  return theta;
}

// log prior density (natural scale, fully normalized), -inf off-support
inline double log_prior(const ModelSpec& spec, const Eigen::VectorXd& values) {
  BlockLayout l = layout(spec);
  const HyperParams& h = spec.hyper;
  const int d = spec.d;
  double lp = 0.0;

  if (l.tau_dim > 0) {
    Eigen::VectorXd tau = tau_from_values(spec, values);
    if ((tau.array() <= 0.0).any()) return neg_inf;
    lp += std::lgamma(h.e.sum());
    for (int g = 0; g < spec.G; ++g)
      lp += (h.e[g] - 1.0) * std::log(tau[g]) - std::lgamma(h.e[g]);
  }

  switch (spec.family) {
    case Family::UniFixedSigma: {
      for (int g = 0; g < spec.G; ++g) {
        double m = values[l.block_offset(g)];
        lp += -0.5 * log_2pi - 0.5 * m * m;
      }
      break;
    }
    case Family::UniHierarchical: {
      // zeta integrated out analytically: the sigma^2 prior is exchangeable
      // but not independent across components
      double a0 = h.zeta_shape, b0 = 10.0 / (h.lambda * h.lambda), s = h.sigma_shape;
      double sum_inv = 0.0, sum_log = 0.0;
      for (int g = 0; g < spec.G; ++g) {
        const double* blk = values.data() + l.block_offset(g);
        double m = blk[0], logv = blk[1];
        lp += -0.5 * log_2pi - std::log(h.lambda) -
              0.5 * (m - h.x0) * (m - h.x0) / (h.lambda * h.lambda);
        sum_inv += std::exp(-logv);
        sum_log += logv;
      }
      lp += a0 * std::log(b0) - std::lgamma(a0) - spec.G * std::lgamma(s) +
            std::lgamma(s * spec.G + a0) -
            (s * spec.G + a0) * std::log(b0 + sum_inv) - (s + 1.0) * sum_log;
      break;
    }
    case Family::MvnFull: {
      Eigen::MatrixXd P = cholesky_with_ridge(h.Lambda);
      double log_det_Lambda = log_det_from_chol(P);
      double c_iw = 0.5 * h.phi0 * log_det_Lambda - 0.5 * h.phi0 * d * std::log(2.0) -
                    lgamma_multivariate(d, 0.5 * h.phi0);
      Eigen::VectorXd mu;
      Eigen::MatrixXd L;
      for (int g = 0; g < spec.G; ++g) {
        detail::read_block(spec, values.data() + l.block_offset(g), mu, L);
        double log_det_Sigma = log_det_from_chol(L);
        Eigen::MatrixXd W = L.triangularView<Eigen::Lower>().solve(P);
        double tr = W.squaredNorm();  // tr(Lambda Sigma^{-1})
        lp += c_iw - 0.5 * (h.phi0 + d + 1.0) * log_det_Sigma - 0.5 * tr;
        Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(mu - h.beta);
        lp += -0.5 * d * log_2pi + 0.5 * d * std::log(h.kappa0) - 0.5 * log_det_Sigma -
              0.5 * h.kappa0 * z.squaredNorm();
      }
      break;
    }
    case Family::MvnDiag: {
      for (int g = 0; g < spec.G; ++g) {
        const double* blk = values.data() + l.block_offset(g);
        for (int r = 0; r < d; ++r) {
          double m = blk[r], logv = blk[d + r], v = std::exp(logv);
          lp += h.phi0 * std::log(h.lambda_r[r]) - std::lgamma(h.phi0) -
                (h.phi0 + 1.0) * logv - h.lambda_r[r] / v;
          lp += -0.5 * log_2pi + 0.5 * std::log(h.kappa0) - 0.5 * logv -
                0.5 * h.kappa0 * (m - h.beta[r]) * (m - h.beta[r]) / v;
        }
      }
      break;
    }
  }
  return lp;
}

// log mixture likelihood of the data under the transformed parameters
inline double log_likelihood(const ModelSpec& spec, const Eigen::MatrixXd& data,
                             const Eigen::VectorXd& values) {
  BlockLayout l = layout(spec);
  const int n = static_cast<int>(data.rows());
  Eigen::VectorXd tau = tau_from_values(spec, values);
  if ((tau.array() <= 0.0).any()) return neg_inf;

  std::vector<Eigen::VectorXd> mu(l.G);
  std::vector<Eigen::MatrixXd> L(l.G);
  Eigen::VectorXd log_tau(l.G);
  for (int g = 0; g < l.G; ++g) {
    detail::read_block(spec, values.data() + l.block_offset(g), mu[g], L[g]);
    log_tau[g] = std::log(tau[g]);
  }
  double ll = 0.0;
  Eigen::VectorXd lw(l.G);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd y = data.row(i).transpose();
    for (int g = 0; g < l.G; ++g) lw[g] = log_tau[g] + mvn_logpdf_chol(y, mu[g], L[g]);
    ll += log_sum_exp(lw);
  }
  return ll;
}

// log pi(theta) + log L(theta) + log-Jacobian, evaluated on the transformed
// scale; -inf for points outside the parameter support (e.g. tau off the
// simplex), which callers treat as "not in any truncation set".
inline double log_unnorm_posterior(const ModelSpec& spec, const Eigen::MatrixXd& data,
                                   const Eigen::VectorXd& values) {
  double lp = log_prior(spec, values);
  if (lp == neg_inf) return neg_inf;
  return lp + log_likelihood(spec, data, values) + log_jacobian(spec, values);
}

inline double log_unnorm_posterior(const ModelSpec& spec, const Eigen::MatrixXd& data,
                                   const TransformedParameterVector& v) {
  return log_unnorm_posterior(spec, data, v.values);
}

// responsibilities z_{i,g} = tau_g f(y_i|xi_g) / sum_gt tau_gt f(y_i|xi_gt)
inline Eigen::MatrixXd responsibilities(const ModelSpec& spec, const Eigen::MatrixXd& data,
                                        const Eigen::VectorXd& values) {
  BlockLayout l = layout(spec);
  const int n = static_cast<int>(data.rows());
  Eigen::VectorXd tau = tau_from_values(spec, values);
  std::vector<Eigen::VectorXd> mu(l.G);
  std::vector<Eigen::MatrixXd> L(l.G);
  for (int g = 0; g < l.G; ++g)
    detail::read_block(spec, values.data() + l.block_offset(g), mu[g], L[g]);
  Eigen::MatrixXd z(n, l.G);
  Eigen::VectorXd lw(l.G);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd y = data.row(i).transpose();
    for (int g = 0; g < l.G; ++g)
      lw[g] = std::log(std::max(tau[g], 1e-300)) + mvn_logpdf_chol(y, mu[g], L[g]);
    double lse = log_sum_exp(lw);
    for (int g = 0; g < l.G; ++g) z(i, g) = std::exp(lw[g] - lse);
  }
  return z;
}

// permutes component blocks and the full proportion vector; perm[g] is the
// destination slot of component g
inline TransformedParameterVector permute_components(const ModelSpec& spec,
                                                     const TransformedParameterVector& v,
                                                     const std::vector<int>& perm) {
  BlockLayout l = layout(spec);
  TransformedParameterVector out;
  out.values.resize(l.R);
  for (int g = 0; g < l.G; ++g)
    out.values.segment(l.block_offset(perm[g]), l.u) = v.values.segment(l.block_offset(g), l.u);
  if (l.tau_dim > 0) {
    Eigen::VectorXd tau = tau_from_values(spec, v.values);
    Eigen::VectorXd ptau(l.G);
    for (int g = 0; g < l.G; ++g) ptau[perm[g]] = tau[g];
    for (int g = 0; g < l.tau_dim; ++g) out.values[l.tau_offset() + g] = ptau[g];
  }
  out.log_jacobian = v.log_jacobian;  // sum of per-block terms, permutation invariant
  return out;
}

// same operation on a raw coordinate vector
inline Eigen::VectorXd permute_values(const ModelSpec& spec, const Eigen::VectorXd& values,
                                      const std::vector<int>& perm) {
  TransformedParameterVector v{values, 0.0};
  return permute_components(spec, v, perm).values;
}

}  // namespace thames
