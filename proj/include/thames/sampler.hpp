#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <vector>

#include "thames/math.hpp"
#include "thames/model.hpp"
#include "thames/rng.hpp"

namespace thames {

struct ChainConfig {
  int iterations = 12000;
  int burn_in = 2000;
  int thin = 1;
  std::uint64_t seed = 1;
};

inline int retained_draws(const ChainConfig& cfg) {
  if (cfg.burn_in < 0 || cfg.burn_in >= cfg.iterations)
    throw config_error("burn_in must be < iterations");
  if (cfg.thin < 1) throw config_error("thin must be >= 1");
  int t = (cfg.iterations - cfg.burn_in + cfg.thin - 1) / cfg.thin;
  if (t % 2 == 1) --t;  // the estimator splits the sample in half
  if (t < 4) throw config_error("retained draw count must be >= 4");
  return t;
}

struct PosteriorRun {
  ModelSpec spec;
  Eigen::MatrixXd draws;        // T x R, transformed scale
  Eigen::VectorXd log_post;     // unnormalized log posterior per draw
  Eigen::MatrixXi allocations;  // T x n, labels in 0..G-1
  std::uint64_t seed = 0;

  int T() const { return static_cast<int>(draws.rows()); }
  int R() const { return static_cast<int>(draws.cols()); }
  int n() const { return static_cast<int>(allocations.cols()); }
};

// ---------------------------------------------------------------------------
// k-means pre-clustering (surrogate for a model-based-clustering init)

struct KmeansResult {
  std::vector<int> labels;
  Eigen::MatrixXd centers;  // G x d
  double inertia = 0.0;
};

inline KmeansResult kmeans(const Eigen::MatrixXd& data, int G, int restarts,
                           std::uint64_t seed) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (G > n) throw config_error("k-means: more clusters than points");
  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  Rng rng(seed);
  for (int rs = 0; rs < restarts; ++rs) {
    Rng r = rng.derive(rs);
    // k-means++ seeding
    Eigen::MatrixXd centers(G, d);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    int first = static_cast<int>(r.uniform() * n);
    centers.row(0) = data.row(std::min(first, n - 1));
    for (int g = 1; g < G; ++g) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double dist = (data.row(i) - centers.row(g - 1)).squaredNorm();
        d2[i] = std::min(d2[i], dist);
        total += d2[i];
      }
      double target = r.uniform() * total, acc = 0.0;
      int pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
      centers.row(g) = data.row(pick);
    }
    std::vector<int> labels(n, 0);
    for (int iter = 0; iter < 100; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int arg = 0;
        double bestd = (data.row(i) - centers.row(0)).squaredNorm();
        for (int g = 1; g < G; ++g) {
          double dist = (data.row(i) - centers.row(g)).squaredNorm();
          if (dist < bestd) {
            bestd = dist;
            arg = g;
          }
        }
        if (labels[i] != arg) {
          labels[i] = arg;
          changed = true;
        }
      }
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(G, d);
      Eigen::VectorXi counts = Eigen::VectorXi::Zero(G);
      for (int i = 0; i < n; ++i) {
        sums.row(labels[i]) += data.row(i);
        counts[labels[i]] += 1;
      }
      for (int g = 0; g < G; ++g)
        if (counts[g] > 0) centers.row(g) = sums.row(g) / counts[g];
      if (!changed) break;
    }
    // empty clusters get the point farthest from its current center
    for (int g = 0; g < G; ++g) {
      int cnt = static_cast<int>(std::count(labels.begin(), labels.end(), g));
      if (cnt > 0) continue;
      int worst = -1;
      double worstd = -1.0;
      for (int i = 0; i < n; ++i) {
        int li = labels[i];
        if (std::count(labels.begin(), labels.end(), li) <= 1) continue;
        double dist = (data.row(i) - centers.row(li)).squaredNorm();
        if (dist > worstd) {
          worstd = dist;
          worst = i;
        }
      }
      if (worst >= 0) {
        labels[worst] = g;
        centers.row(g) = data.row(worst);
      }
    }
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) inertia += (data.row(i) - centers.row(labels[i])).squaredNorm();
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centers = centers;
    }
  }
  return best;
}

// fixed internal seed: hyperparameters must be a deterministic function of
// (data, G) so the sampler and the oracles see the same prior
inline constexpr std::uint64_t kPreclusterSeed = 0x7a11e5c0ffeeULL;

inline std::vector<int> initialize_chain(const Eigen::MatrixXd& data, int G,
                                         std::uint64_t seed = kPreclusterSeed) {
  if (G == 1) return std::vector<int>(data.rows(), 0);
  return kmeans(data, G, 25, seed).labels;
}

inline HyperParams default_hyperparameters(const Eigen::MatrixXd& data, int G,
                                           Family family) {
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (G > n) throw config_error("G exceeds the number of observations");
  HyperParams h;
  h.e = Eigen::VectorXd::Ones(G);
  switch (family) {
    case Family::UniFixedSigma:
      break;
    case Family::UniHierarchical: {
      double lo = data.col(0).minCoeff(), hi = data.col(0).maxCoeff();
      h.x0 = 0.5 * (lo + hi);
      h.lambda = std::max(hi - lo, 1e-12);
      break;
    }
    case Family::MvnFull:
    case Family::MvnDiag: {
      h.beta = data.colwise().mean().transpose();
      h.kappa0 = 1e-5;
      KmeansResult km = kmeans(data, G, 25, kPreclusterSeed);
      Eigen::MatrixXd overall =
          (data.rowwise() - data.colwise().mean()).transpose() *
          (data.rowwise() - data.colwise().mean()) / std::max(n - 1, 1);
      Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(d, d);
      for (int g = 0; g < G; ++g) {
        std::vector<int> idx;
        for (int i = 0; i < n; ++i)
          if (km.labels[i] == g) idx.push_back(i);
        Eigen::MatrixXd cov;
        if (static_cast<int>(idx.size()) >= 2) {
          Eigen::MatrixXd sub(idx.size(), d);
          for (size_t k = 0; k < idx.size(); ++k) sub.row(k) = data.row(idx[k]);
          Eigen::RowVectorXd m = sub.colwise().mean();
          cov = (sub.rowwise() - m).transpose() * (sub.rowwise() - m) /
                (static_cast<int>(idx.size()) - 1);
        } else {
          cov = overall;
        }
        avg += cov / G;
      }
      if (family == Family::MvnFull) {
        h.phi0 = d;
        h.Lambda = (1.0 + h.phi0 + d) * avg;
        h.Lambda.diagonal().array() += 1e-10 * std::max(h.Lambda.trace() / d, 1.0);
      } else {
        h.phi0 = 2.0;
        h.lambda_r = 2.0 * avg.diagonal();
        for (int r = 0; r < d; ++r)
          if (!(h.lambda_r[r] > 0.0)) h.lambda_r[r] = std::max(2.0 * overall(r, r), 1e-8);
      }
      break;
    }
  }
  return h;
}

inline ModelSpec make_spec(Family family, int G, const Eigen::MatrixXd& data) {
  ModelSpec spec;
  spec.family = family;
  spec.G = G;
  spec.d = family == Family::MvnFull || family == Family::MvnDiag
               ? static_cast<int>(data.cols())
               : 1;
  spec.hyper = default_hyperparameters(data, G, family);
  validate_spec(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Gibbs samplers

namespace detail {

struct SweepRecorder {
  PosteriorRun run;
  int kept = 0;
  int target = 0;
  const Eigen::MatrixXd* data = nullptr;

  SweepRecorder(const ModelSpec& spec, const Eigen::MatrixXd& d, const ChainConfig& cfg) {
    target = retained_draws(cfg);
    run.spec = spec;
    run.seed = cfg.seed;
    run.draws.resize(target, param_dimension(spec));
    run.log_post.resize(target);
    run.allocations.resize(target, d.rows());
    data = &d;
  }

  bool wants(const ChainConfig& cfg, int it) const {
    return it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 && kept < target;
  }

  void record(const TransformedParameterVector& v, const std::vector<int>& labels) {
    run.draws.row(kept) = v.values.transpose();
    run.log_post[kept] = log_unnorm_posterior(run.spec, *data, v.values);
    for (int i = 0; i < run.allocations.cols(); ++i) run.allocations(kept, i) = labels[i];
    ++kept;
  }
};

}  // namespace detail

// Toy univariate model: sigma=1 and tau=1/G fixed, mu_g ~ N(0,1).
inline PosteriorRun gibbs_toy(const Eigen::MatrixXd& data, int G, const ChainConfig& cfg) {
  ModelSpec spec;
  spec.family = Family::UniFixedSigma;
  spec.G = G;
  spec.d = 1;
  spec.hyper.e = Eigen::VectorXd::Ones(G);  // unused; tau is a point mass
  validate_spec(spec);

  const int n = static_cast<int>(data.rows());
  if (n < 1) throw config_error("need at least one observation");
  Rng rng(cfg.seed);
  detail::SweepRecorder rec(spec, data, cfg);

  double midpoint = 0.5 * (data.col(0).minCoeff() + data.col(0).maxCoeff());
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(G, midpoint);
  std::vector<int> labels(n, 0);
  Eigen::VectorXd lw(G);
  // initial allocations from the midpoint-initialized means
  for (int i = 0; i < n; ++i) {
    for (int g = 0; g < G; ++g) lw[g] = -0.5 * std::pow(data(i, 0) - mu[g], 2);
    labels[i] = rng.categorical_logits(lw);
  }

  for (int it = 0; it < cfg.iterations; ++it) {
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(G);
    Eigen::VectorXd cnts = Eigen::VectorXd::Zero(G);
    for (int i = 0; i < n; ++i) {
      sums[labels[i]] += data(i, 0);
      cnts[labels[i]] += 1.0;
    }
    for (int g = 0; g < G; ++g) {
      double prec = 1.0 + cnts[g];
      mu[g] = sums[g] / prec + rng.normal() / std::sqrt(prec);
    }
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g) lw[g] = -0.5 * std::pow(data(i, 0) - mu[g], 2);
      labels[i] = rng.categorical_logits(lw);
    }
    if (rec.wants(cfg, it)) {
      TransformedParameterVector v;
      v.values = mu;
      v.log_jacobian = 0.0;
      rec.record(v, labels);
    }
  }
  return rec.run;
}

// Univariate mixture with hierarchical priors (random tau, mu, sigma^2, zeta).
inline PosteriorRun gibbs_uni_hier(const Eigen::MatrixXd& data, int G, const ChainConfig& cfg,
                                   const HyperParams* hyper = nullptr) {
  const int n = static_cast<int>(data.rows());
  if (n < G) throw config_error("need n >= G observations");
  ModelSpec spec;
  spec.family = Family::UniHierarchical;
  spec.G = G;
  spec.d = 1;
  spec.hyper = hyper ? *hyper : default_hyperparameters(data, G, Family::UniHierarchical);
  validate_spec(spec);
  const HyperParams& h = spec.hyper;
  const double a0 = h.zeta_shape, b0 = 10.0 / (h.lambda * h.lambda), s = h.sigma_shape;

  Rng rng(cfg.seed);
  detail::SweepRecorder rec(spec, data, cfg);

  std::vector<int> labels = initialize_chain(data, G, cfg.seed);
  Eigen::VectorXd mu(G), var(G), tau = Eigen::VectorXd::Constant(G, 1.0 / G);
  double overall_var = (data.col(0).array() - data.col(0).mean()).square().mean();
  for (int g = 0; g < G; ++g) {
    double sum = 0.0, sumsq = 0.0;
    int cnt = 0;
    for (int i = 0; i < n; ++i)
      if (labels[i] == g) {
        sum += data(i, 0);
        sumsq += data(i, 0) * data(i, 0);
        ++cnt;
      }
    mu[g] = cnt > 0 ? sum / cnt : h.x0;
    var[g] = cnt > 1 ? std::max(sumsq / cnt - mu[g] * mu[g], 1e-6) : std::max(overall_var, 1e-6);
  }
  double zeta = a0 / b0;

  Eigen::VectorXd lw(G);
  for (int it = 0; it < cfg.iterations; ++it) {
    // tau | C
    Eigen::VectorXd conc = h.e;
    for (int i = 0; i < n; ++i) conc[labels[i]] += 1.0;
    tau = rng.dirichlet(conc);
    // mu | C, sigma^2
    for (int g = 0; g < G; ++g) {
      double sum = 0.0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (labels[i] == g) {
          sum += data(i, 0);
          ++cnt;
        }
      double prec = 1.0 / (h.lambda * h.lambda) + cnt / var[g];
      double mean = (h.x0 / (h.lambda * h.lambda) + sum / var[g]) / prec;
      mu[g] = mean + rng.normal() / std::sqrt(prec);
    }
    // sigma^2 | C, mu, zeta
    for (int g = 0; g < G; ++g) {
      double ss = 0.0;
      int cnt = 0;
      for (int i = 0; i < n; ++i)
        if (labels[i] == g) {
          ss += std::pow(data(i, 0) - mu[g], 2);
          ++cnt;
        }
      var[g] = rng.inv_gamma(s + 0.5 * cnt, zeta + 0.5 * ss);
    }
    // zeta | sigma^2
    zeta = rng.gamma_rate(a0 + s * G, b0 + var.array().inverse().sum());
    // C | theta
    for (int i = 0; i < n; ++i) {
      for (int g = 0; g < G; ++g)
        lw[g] = std::log(tau[g]) - 0.5 * std::log(var[g]) -
                0.5 * std::pow(data(i, 0) - mu[g], 2) / var[g];
      labels[i] = rng.categorical_logits(lw);
    }
    if (rec.wants(cfg, it)) {
      ParameterVector theta;
      theta.mu.resize(G);
      theta.cov.resize(G);
      for (int g = 0; g < G; ++g) {
        theta.mu[g] = Eigen::VectorXd::Constant(1, mu[g]);
        theta.cov[g] = Eigen::MatrixXd::Constant(1, 1, var[g]);
      }
      theta.tau = tau;
      rec.record(transform(spec, theta), labels);
    }
  }
  return rec.run;
}

// Multivariate Gaussian mixture, full or diagonal covariances.
inline PosteriorRun gibbs_mvn(const Eigen::MatrixXd& data, int G, const ChainConfig& cfg,
                              Family variant, const HyperParams* hyper = nullptr) {
  if (variant != Family::MvnFull && variant != Family::MvnDiag)
    throw config_error("gibbs_mvn expects an mvn family");
  const int n = static_cast<int>(data.rows());
  const int d = static_cast<int>(data.cols());
  if (n < G) throw config_error("need n >= G observations");
  ModelSpec spec;
  spec.family = variant;
  spec.G = G;
  spec.d = d;
  spec.hyper = hyper ? *hyper : default_hyperparameters(data, G, variant);
  validate_spec(spec);
  const HyperParams& h = spec.hyper;

  Rng rng(cfg.seed);
  detail::SweepRecorder rec(spec, data, cfg);

  std::vector<int> labels = initialize_chain(data, G, cfg.seed);
  std::vector<Eigen::VectorXd> mu(G, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> cov(G, Eigen::MatrixXd::Identity(d, d));
  std::vector<Eigen::MatrixXd> cov_chol(G, Eigen::MatrixXd::Identity(d, d));
  Eigen::VectorXd tau = Eigen::VectorXd::Constant(G, 1.0 / G);

  auto draw_component = [&](int g, const std::vector<int>& lbl) {
    double ng = 0.0;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i)
      if (lbl[i] == g) {
        sum += data.row(i).transpose();
        ng += 1.0;
      }
    Eigen::VectorXd ybar = ng > 0 ? Eigen::VectorXd(sum / ng) : h.beta;
    double kappa_n = h.kappa0 + ng;
    Eigen::VectorXd beta_n = (h.kappa0 * h.beta + sum) / kappa_n;
    if (variant == Family::MvnFull) {
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
      for (int i = 0; i < n; ++i)
        if (lbl[i] == g) {
          Eigen::VectorXd r = data.row(i).transpose() - ybar;
          S += r * r.transpose();
        }
      Eigen::VectorXd dv = ybar - h.beta;
      Eigen::MatrixXd Lambda_n =
          h.Lambda + S + (h.kappa0 * ng / kappa_n) * (dv * dv.transpose());
      double phi_n = h.phi0 + ng;
      Eigen::MatrixXd Sigma;
      try {
        Sigma = rng.inv_wishart(phi_n, Lambda_n);
      } catch (const numerical_error&) {
        Lambda_n.diagonal().array() += 1e-8 * Lambda_n.trace() / d;
        try {
          Sigma = rng.inv_wishart(phi_n, Lambda_n);
        } catch (const numerical_error&) {
          warn("inv_wishart scale not PD after ridge; keeping previous draw for component " +
               std::to_string(g + 1));
          return;
        }
      }
      cov[g] = Sigma;
      cov_chol[g] = cholesky_with_ridge(Sigma, 1e-12);
      mu[g] = beta_n + cov_chol[g] * rng.normal_vector(d) / std::sqrt(kappa_n);
    } else {
      Eigen::MatrixXd Sigma = Eigen::MatrixXd::Zero(d, d);
      for (int r = 0; r < d; ++r) {
        double ss = 0.0;
        for (int i = 0; i < n; ++i)
          if (lbl[i] == g) ss += std::pow(data(i, r) - ybar[r], 2);
        double a_n = h.phi0 + 0.5 * ng;
        double b_n = h.lambda_r[r] + 0.5 * ss +
                     0.5 * h.kappa0 * ng / kappa_n * std::pow(ybar[r] - h.beta[r], 2);
        double v = rng.inv_gamma(a_n, b_n);
        Sigma(r, r) = v;
        mu[g][r] = beta_n[r] + rng.normal() * std::sqrt(v / kappa_n);
      }
      cov[g] = Sigma;
      cov_chol[g] = Sigma.diagonal().array().sqrt().matrix().asDiagonal();
    }
  };

  Eigen::VectorXd lw(G);
  for (int it = 0; it < cfg.iterations; ++it) {
    Eigen::VectorXd conc = h.e;
    for (int i = 0; i < n; ++i) conc[labels[i]] += 1.0;
    tau = rng.dirichlet(conc);
    for (int g = 0; g < G; ++g) draw_component(g, labels);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd y = data.row(i).transpose();
      for (int g = 0; g < G; ++g)
        lw[g] = std::log(tau[g]) + mvn_logpdf_chol(y, mu[g], cov_chol[g]);
      labels[i] = rng.categorical_logits(lw);
    }
    if (rec.wants(cfg, it)) {
      ParameterVector theta;
      theta.mu = mu;
      theta.cov = cov;
      theta.tau = tau;
      rec.record(transform(spec, theta), labels);
    }
  }
  return rec.run;
}

// dispatch on family with a caller-supplied prior
inline PosteriorRun run_chain(const ModelSpec& spec, const Eigen::MatrixXd& data,
                              const ChainConfig& cfg) {
  switch (spec.family) {
    case Family::UniFixedSigma: return gibbs_toy(data, spec.G, cfg);
    case Family::UniHierarchical: return gibbs_uni_hier(data, spec.G, cfg, &spec.hyper);
    case Family::MvnFull:
    case Family::MvnDiag: return gibbs_mvn(data, spec.G, cfg, spec.family, &spec.hyper);
  }
  throw config_error("invalid family");
}

}  // namespace thames
