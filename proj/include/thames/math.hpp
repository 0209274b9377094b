#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace thames {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();
inline constexpr double log_2pi = 1.8378770664093454836;

// Exceptions mapped to CLI exit codes (2/3/4).
struct config_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Warnings go through a replaceable sink so tests can capture them.
using warn_handler = void (*)(const std::string&);
inline warn_handler& warn_sink() {
  static warn_handler h = nullptr;
  return h;
}
inline void warn(const std::string& msg) {
  if (warn_sink())
    warn_sink()(msg);
  else
    std::fprintf(stderr, "[thames] warning: %s\n", msg.c_str());
}

inline double log_sum_exp(std::span<const double> v) {
  double m = neg_inf;
  for (double x : v)
    if (x > m) m = x;
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(const Eigen::VectorXd& v) {
  return log_sum_exp(std::span<const double>(v.data(), static_cast<size_t>(v.size())));
}

inline double log_add_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Streaming log-sum-exp with on-the-fly rescaling; deterministic for a fixed
// insertion order.
class LogSumAccumulator {
 public:
  void add(double logx) {
    if (logx == neg_inf) return;
    if (logx > max_) {
      sum_ = sum_ * std::exp(max_ - logx) + 1.0;
      max_ = logx;
    } else {
      sum_ += std::exp(logx - max_);
    }
    ++count_;
  }
  double value() const { return sum_ > 0.0 ? max_ + std::log(sum_) : neg_inf; }
  long long count() const { return count_; }

 private:
  double max_ = neg_inf;
  double sum_ = 0.0;
  long long count_ = 0;
};

// log of the multivariate gamma function Gamma_d(a)
inline double lgamma_multivariate(int d, double a) {
  double s = 0.25 * d * (d - 1) * std::log(M_PI);
  for (int j = 1; j <= d; ++j) s += std::lgamma(a + 0.5 * (1 - j));
  return s;
}

namespace detail {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
inline double gamma_p_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int i = 0; i < 500; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

inline double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return detail::gamma_p_series(a, x);
  return 1.0 - detail::gamma_q_contfrac(a, x);
}

// CDF of the chi-squared distribution with (possibly non-integer) dof
inline double chi2_cdf(double x, double dof) {
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

// Cholesky factorization with a scale-aware diagonal ridge fallback.
// Returns the lower factor; *ridge_applied (optional) reports the ridge used.
inline Eigen::MatrixXd cholesky_with_ridge(const Eigen::MatrixXd& m,
                                           double rel_eps = 1e-8,
                                           double* ridge_applied = nullptr) {
  const int n = static_cast<int>(m.rows());
  double tr = m.trace();
  double eps = tr > 0.0 ? rel_eps * tr / n : 1e-12;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() == Eigen::Success) {
    if (ridge_applied) *ridge_applied = 0.0;
    return llt.matrixL();
  }
  Eigen::MatrixXd r = m;
  for (int attempt = 0; attempt < 60; ++attempt) {
    r.diagonal().array() += eps;
    llt.compute(r);
    if (llt.info() == Eigen::Success) {
      if (ridge_applied) *ridge_applied = r.diagonal()[0] - m.diagonal()[0];
      return llt.matrixL();
    }
    eps *= 10.0;
  }
  throw numerical_error("cholesky_with_ridge: matrix not factorizable even with ridge");
}

inline double log_det_from_chol(const Eigen::MatrixXd& L) {
  return 2.0 * L.diagonal().array().log().sum();
}

// log N(x; mu, Sigma) where L is the lower Cholesky factor of Sigma
inline double mvn_logpdf_chol(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                              const Eigen::MatrixXd& L) {
  Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - mu);
  return -0.5 * x.size() * log_2pi - L.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
}

}  // namespace thames
