#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "thames/geometry.hpp"
#include "thames/math.hpp"
#include "thames/model.hpp"
#include "thames/ordering.hpp"
#include "thames/relabel.hpp"

namespace thames {

struct ThamesConfig {
  double c_init = 0.0;   // 0 -> sqrt(R+1)
  double alpha_min = 0.2;
  double alpha_cap = 0.5;
  int alpha_stride = 100;
  int N = 0;             // volume MC sample size; 0 -> T
  long long omega_threshold = 50000;
  int min_draws_for_alpha = 200;
  std::uint64_t seed = 71;  // pipeline RNG (MC sampling only)
};

struct ThamesResult {
  int G = 0;
  double log_z = std::numeric_limits<double>::quiet_NaN();
  double se_log_z = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double c_final = std::numeric_limits<double>::quiet_NaN();
  double log_vol_B = std::numeric_limits<double>::quiet_NaN();
  long long omega_size = 0;
  std::vector<int> I_set;  // 0-based members of the greedy independent set
  int co = 0;
  long long n_points_in_B = 0;
  double phat0 = std::numeric_limits<double>::quiet_NaN();
  int reduced_from = -1;  // G-1 when the empty-component recursion was used
  std::uint64_t prior_hash = 0;
  std::string status = "ok";
  std::string provenance = "thames";

  bool ok() const { return status == "ok"; }
};

// ---------------------------------------------------------------------------
// tuning-parameter selection

struct AlphaSelection {
  double alpha = 0.5;
  double log_q_alpha = neg_inf;  // threshold on the unnormalized log posterior
  double kolmogorov = std::numeric_limits<double>::quiet_NaN();
  bool fallback = false;
};

namespace detail {

inline double hpd_threshold(const std::vector<double>& eta_sorted, double alpha) {
  int T = static_cast<int>(eta_sorted.size());
  int k = std::clamp(static_cast<int>(std::llround(alpha * T)), 1, T);
  return -eta_sorted[k - 1];
}

// sup-distance between the restricted ECDF and the truncated reference CDF
inline double kolmogorov_distance(const std::vector<double>& eta_sorted, int k, int dof,
                                  double eta_max) {
  double mean = 0.0;
  for (int i = 0; i < k; ++i) mean += eta_sorted[i];
  mean /= k;
  double var = 0.0;
  for (int i = 0; i < k; ++i) var += (eta_sorted[i] - mean) * (eta_sorted[i] - mean);
  var /= k;
  if (!(var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  double scale = std::sqrt(var / (2.0 * dof));
  double shift = mean - dof * scale;
  // reference: shifted/scaled chi^2_dof truncated to [0, eta_max]
  auto raw_cdf = [&](double x) { return chi2_cdf((x - shift) / scale, dof); };
  double lo = raw_cdf(0.0), hi = raw_cdf(eta_max);
  if (!(hi - lo > 0.0)) return 1.0;
  auto ref = [&](double x) {
    double c = (raw_cdf(std::min(x, eta_max)) - lo) / (hi - lo);
    return std::clamp(c, 0.0, 1.0);
  };
  double d = 0.0;
  for (int i = 0; i < k; ++i) {
    double F = ref(eta_sorted[i]);
    d = std::max(d, std::fabs(F - static_cast<double>(i + 1) / k));
    d = std::max(d, std::fabs(F - static_cast<double>(i) / k));
  }
  return d;
}

}  // namespace detail

// Kolmogorov-matching quantile selection on the negative log-posterior trace.
// Candidates on a thinned grid above alpha_min; the minimizer is capped at
// alpha_cap and the threshold is the empirical (1-alpha)-quantile.
inline AlphaSelection select_alpha(const Eigen::VectorXd& log_post, int R,
                                   const ThamesConfig& cfg = {}) {
  std::vector<double> eta;
  eta.reserve(log_post.size());
  int flagged = 0;
  for (int t = 0; t < log_post.size(); ++t) {
    if (std::isfinite(log_post[t]))
      eta.push_back(-log_post[t]);
    else
      ++flagged;
  }
  if (flagged > 0)
    warn("select_alpha: excluding " + std::to_string(flagged) +
         " draws with non-finite log posterior");
  const int T = static_cast<int>(eta.size());
  if (T == 0) throw numerical_error("select_alpha: no finite log-posterior values");
  std::sort(eta.begin(), eta.end());

  AlphaSelection sel;
  if (T < cfg.min_draws_for_alpha) {
    warn("select_alpha: fewer than " + std::to_string(cfg.min_draws_for_alpha) +
         " draws; falling back to alpha = " + std::to_string(cfg.alpha_cap));
    sel.alpha = cfg.alpha_cap;
    sel.fallback = true;
    sel.log_q_alpha = detail::hpd_threshold(eta, sel.alpha);
    return sel;
  }
  if (eta.front() == eta.back()) {
    warn("select_alpha: constant log-posterior trace; falling back to alpha cap");
    sel.alpha = cfg.alpha_cap;
    sel.fallback = true;
    sel.log_q_alpha = detail::hpd_threshold(eta, sel.alpha);
    return sel;
  }

  double eta_max = eta.back();
  int k_min = static_cast<int>(cfg.alpha_min * T) + 1;
  double best_d = std::numeric_limits<double>::infinity();
  int best_k = -1;
  for (int k = k_min; k <= T; k += cfg.alpha_stride) {
    double d = detail::kolmogorov_distance(eta, k, R, eta_max);
    if (std::isnan(d)) continue;
    if (d < best_d) {
      best_d = d;
      best_k = k;
    }
  }
  if (best_k < 0) {
    warn("select_alpha: degenerate trace on every candidate; falling back to alpha cap");
    sel.alpha = cfg.alpha_cap;
    sel.fallback = true;
    sel.log_q_alpha = detail::hpd_threshold(eta, sel.alpha);
    return sel;
  }
  sel.kolmogorov = best_d;
  sel.alpha = std::min(static_cast<double>(best_k) / T, cfg.alpha_cap);
  sel.log_q_alpha = detail::hpd_threshold(eta, sel.alpha);
  return sel;
}

// ---------------------------------------------------------------------------
// truncation-set volume

struct VolumeEstimate {
  double log_vol_B = neg_inf;
  double fraction = 0.0;
  int n_pass = 0;
  std::vector<char> inside;
};

inline VolumeEstimate estimate_volume_B(const Ellipsoid& e, double log_q_alpha,
                                        const Eigen::MatrixXd& mc_sample,
                                        const std::function<double(const Eigen::VectorXd&)>&
                                            log_post_fn) {
  VolumeEstimate v;
  const int N = static_cast<int>(mc_sample.rows());
  v.inside.assign(N, 0);
  for (int j = 0; j < N; ++j) {
    double lp = log_post_fn(mc_sample.row(j).transpose());
    if (lp > log_q_alpha) {
      v.inside[j] = 1;
      ++v.n_pass;
    }
  }
  v.fraction = static_cast<double>(v.n_pass) / N;
  v.log_vol_B = v.n_pass > 0 ? e.log_volume() + std::log(v.fraction) : neg_inf;
  return v;
}

// ---------------------------------------------------------------------------
// the symmetric truncated harmonic mean sums

struct HarmonicSum {
  double log_z = std::numeric_limits<double>::quiet_NaN();
  double se_log_z = std::numeric_limits<double>::quiet_NaN();
  long long n_points = 0;
  bool empty = true;
};

namespace detail {

// shared tail: per-draw inclusion counts -> log of the reciprocal estimate
inline HarmonicSum finalize_harmonic_sum(const std::vector<long long>& counts,
                                         const Eigen::VectorXd& second_log_post,
                                         double log_vol_B, double log_g_factorial) {
  const int T2 = static_cast<int>(counts.size());
  HarmonicSum h;
  LogSumAccumulator acc, acc_sq;
  for (int t = 0; t < T2; ++t) {
    if (counts[t] == 0) continue;
    double log_s = std::log(static_cast<double>(counts[t])) - log_vol_B -
                   second_log_post[t] - log_g_factorial;
    acc.add(log_s);
    acc_sq.add(2.0 * log_s);
    h.n_points += counts[t];
  }
  if (h.n_points == 0) return h;
  h.empty = false;
  double lm1 = acc.value() - std::log(static_cast<double>(T2));
  double lm2 = acc_sq.value() - std::log(static_cast<double>(T2));
  h.log_z = -lm1;
  double se = 0.0;
  if (T2 > 1 && lm2 > 2.0 * lm1) {
    double log_var = lm2 + std::log1p(-std::exp(2.0 * lm1 - lm2)) +
                     std::log(static_cast<double>(T2) / (T2 - 1.0));
    se = std::exp(0.5 * log_var - 0.5 * std::log(static_cast<double>(T2)) - lm1);
  }
  h.se_log_z = se;
  return h;
}

}  // namespace detail

// Eq-(4)-style oracle: the full sum over all G! label permutations. Test and
// validation use only; guarded to G! <= 720.
inline HarmonicSum thames_naive(const ModelSpec& spec, const Eigen::MatrixXd& second_half,
                                const Eigen::VectorXd& second_log_post, const Ellipsoid& e,
                                double log_q_alpha, double log_vol_B) {
  const int G = spec.G;
  if (G > 6) throw config_error("thames_naive: G! too large; use thames_efficient");
  const int T2 = static_cast<int>(second_half.rows());
  std::vector<long long> counts(T2, 0);
  std::vector<int> sigma(G);
  std::iota(sigma.begin(), sigma.end(), 0);
  do {
    for (int t = 0; t < T2; ++t) {
      if (!(second_log_post[t] > log_q_alpha)) continue;
      Eigen::VectorXd img = permute_values(spec, second_half.row(t).transpose(), sigma);
      if (e.contains(img)) ++counts[t];
    }
  } while (std::next_permutation(sigma.begin(), sigma.end()));
  return detail::finalize_harmonic_sum(counts, second_log_post, log_vol_B,
                                       std::lgamma(G + 1.0));
}

// Eq-(7)-style sum over the admissible orderings only
inline HarmonicSum thames_efficient(const ModelSpec& spec, const Eigen::MatrixXd& second_half,
                                    const Eigen::VectorXd& second_log_post, const Ellipsoid& e,
                                    double log_q_alpha, double log_vol_B,
                                    const OrderingSet& omega, const QdaModel& qda,
                                    const std::vector<int>& iset) {
  BlockLayout l = layout(spec);
  const int T2 = static_cast<int>(second_half.rows());
  std::vector<long long> counts(T2, 0);
  for (int t = 0; t < T2; ++t) {
    if (!(second_log_post[t] > log_q_alpha)) continue;
    Eigen::VectorXd v = second_half.row(t).transpose();
    Eigen::VectorXd w = w_row(v, l, qda, iset);
    for (const auto& o : omega.omega) {
      Eigen::VectorXd img = permute_values(spec, v, ordering_permutation(w, o));
      if (e.contains(img)) ++counts[t];
    }
  }
  return detail::finalize_harmonic_sum(counts, second_log_post, log_vol_B,
                                       std::lgamma(spec.G + 1.0));
}

// ---------------------------------------------------------------------------
// empty-component machinery

// posterior probability that one component is empty, averaged symmetrically
// over components; computed from responsibilities, not allocations
inline double phat0(const ModelSpec& spec, const Eigen::MatrixXd& data,
                    const Eigen::MatrixXd& draws, double* standard_error = nullptr) {
  const int T = static_cast<int>(draws.rows());
  const int G = spec.G;
  double mean = 0.0, m2 = 0.0;
  for (int t = 0; t < T; ++t) {
    Eigen::MatrixXd z = responsibilities(spec, data, draws.row(t).transpose());
    double pt = 0.0;
    for (int g = 0; g < G; ++g) {
      double log_prod = 0.0;
      for (int i = 0; i < z.rows(); ++i) log_prod += std::log1p(-std::min(z(i, g), 1.0));
      pt += std::exp(log_prod);
    }
    pt /= G;
    double delta = pt - mean;
    mean += delta / (t + 1);
    m2 += delta * (pt - mean);
  }
  if (standard_error)
    *standard_error = T > 1 ? std::sqrt(m2 / (T - 1) / T) : 0.0;
  return mean;
}

// one step of the recursion linking the evidence at G to the evidence at G-1
inline double reduce_empty_component(double log_z_prev, double p0, const Eigen::VectorXd& e,
                                     int n) {
  if (!(p0 > 0.0)) throw numerical_error("empty-component reduction needs phat0 > 0");
  const int G = static_cast<int>(e.size());
  double sum_all = e.sum();
  double sum_head = sum_all - e[G - 1];
  double log_factor = std::lgamma(sum_all) + std::lgamma(n + sum_head) -
                      std::lgamma(n + sum_all) - std::lgamma(sum_head);
  return log_factor + log_z_prev - std::log(p0);
}

// fingerprint of everything the recursion requires to be shared between the
// G and G-1 models: family, dimension, the component-parameter prior, and the
// (symmetric) Dirichlet concentration
inline std::uint64_t component_prior_hash(const ModelSpec& spec) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, size_t len) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  int fam = static_cast<int>(spec.family);
  mix(&fam, sizeof fam);
  mix(&spec.d, sizeof spec.d);
  const HyperParams& hp = spec.hyper;
  double e0 = hp.e.size() > 0 ? hp.e[0] : 1.0;
  mix(&e0, sizeof e0);
  mix(&hp.kappa0, sizeof hp.kappa0);
  mix(&hp.phi0, sizeof hp.phi0);
  if (hp.beta.size()) mix(hp.beta.data(), sizeof(double) * hp.beta.size());
  if (hp.Lambda.size()) mix(hp.Lambda.data(), sizeof(double) * hp.Lambda.size());
  if (hp.lambda_r.size()) mix(hp.lambda_r.data(), sizeof(double) * hp.lambda_r.size());
  return h;
}

// priors under which the recursion is valid: independent component priors not
// depending on G (verified against the G-1 fit via the fingerprint),
// exchangeable Dirichlet proportions
inline bool reduction_admissible(const ModelSpec& spec) {
  if (spec.family != Family::MvnFull && spec.family != Family::MvnDiag) return false;
  for (int g = 1; g < spec.hyper.e.size(); ++g)
    if (spec.hyper.e[g] != spec.hyper.e[0]) return false;
  return true;
}

// ---------------------------------------------------------------------------
// full pipeline

namespace detail {

// deterministic component order (lexicographic mean blocks) so downstream
// numerics do not depend on the arbitrary labelling the pivot draw happened
// to carry; a global relabelling leaves the estimator's value unchanged
inline std::vector<int> canonical_component_order(const Eigen::MatrixXd& X,
                                                  const BlockLayout& l) {
  Eigen::MatrixXd means(l.G, l.u);
  for (int g = 0; g < l.G; ++g) {
    Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(l.u);
    for (int t = 0; t < X.rows(); ++t) m += X.row(t).segment(l.block_offset(g), l.u);
    means.row(g) = m / X.rows();
  }
  std::vector<int> idx(l.G);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int k = 0; k < l.u; ++k) {
      if (means(a, k) < means(b, k)) return true;
      if (means(a, k) > means(b, k)) return false;
    }
    return false;
  });
  std::vector<int> perm(l.G);
  for (int rank = 0; rank < l.G; ++rank) perm[idx[rank]] = rank;
  return perm;
}

}  // namespace detail

// optional side channel for export-oriented internals (DOT/CSV rendering)
struct EstimateArtifacts {
  OverlapGraph overlap;
  DeltaMatrix delta;
  OrderingSet omega;
};

// relabelled draws in canonical component order
inline Eigen::MatrixXd canonical_draws(const RelabelledRun& rr) {
  Eigen::MatrixXd X = apply_relabelling(rr);
  BlockLayout l = layout(rr.base.spec);
  if (l.G > 1) {
    std::vector<int> perm = detail::canonical_component_order(X, l);
    for (int t = 0; t < X.rows(); ++t)
      X.row(t) = permute_values(rr.base.spec, X.row(t).transpose(), perm).transpose();
  }
  return X;
}

inline ThamesResult estimate(const RelabelledRun& rr, const Eigen::MatrixXd& data,
                             const ThamesConfig& cfg = {},
                             const ThamesResult* prev_g = nullptr,
                             EstimateArtifacts* artifacts = nullptr) {
  const ModelSpec& spec = rr.base.spec;
  BlockLayout l = layout(spec);
  const int T = rr.T();
  const int R = rr.R();
  const int G = spec.G;
  ThamesResult res;
  res.G = G;

  if (T % 2 != 0 || T < 4) {
    res.status = "failed: retained draw count must be even and >= 4";
    return res;
  }
  const int T2 = T / 2;

  Eigen::MatrixXd X = canonical_draws(rr);
  const Eigen::VectorXd& lp = rr.base.log_post;
  Eigen::MatrixXd second = X.bottomRows(T2);
  Eigen::VectorXd lp_second = lp.tail(T2);

  try {
    AlphaSelection alpha = select_alpha(lp, R, cfg);
    double c0 = cfg.c_init > 0.0 ? cfg.c_init : default_radius(R);
    Ellipsoid e0 = fit_ellipsoid(X.topRows(T2), c0);
    OverlapGraph overlap = build_overlap_graph(e0, l, G);
    if (artifacts) artifacts->overlap = overlap;
    res.I_set = max_independent_set_greedy(overlap);
    res.co = criterion_of_overlap(static_cast<int>(res.I_set.size()), G);
    res.alpha = alpha.alpha;

    double p0_se = 0.0;
    res.phat0 = phat0(spec, data, X, &p0_se);
    res.prior_hash = component_prior_hash(spec);

    if (prev_g && prev_g->ok() && reduction_admissible(spec) &&
        prev_g->prior_hash == res.prior_hash && res.phat0 > 1.0 / T) {
      res.log_z = reduce_empty_component(prev_g->log_z, res.phat0, spec.hyper.e,
                                         static_cast<int>(data.rows()));
      double rel_p0 = p0_se / res.phat0;
      res.se_log_z = std::sqrt(prev_g->se_log_z * prev_g->se_log_z + rel_p0 * rel_p0);
      res.reduced_from = G - 1;
      res.provenance = "reduction";
      res.c_final = e0.radius();
      return res;
    }

    QdaModel qda = fit_qda(second, l);
    std::vector<int> aug_rows;
    if (G <= 6) {
      for (int t = 0; t < T2; ++t)
        if (lp_second[t] > alpha.log_q_alpha) aug_rows.push_back(t);
    }
    int N = cfg.N > 0 ? cfg.N : T;
    Rng rng(cfg.seed);
    ShrinkResult shrink = shrink_until_tractable(spec, e0, second, lp_second, qda,
                                                 res.I_set, cfg.omega_threshold, N,
                                                 rng.derive(1), G <= 6 ? &aug_rows : nullptr);
    OrderingSet omega = enumerate_orderings(shrink.delta, cfg.omega_threshold);
    if (artifacts) {
      artifacts->delta = shrink.delta;
      artifacts->omega = omega;
    }
    res.omega_size = static_cast<long long>(omega.omega.size());
    res.c_final = shrink.e.radius();

    VolumeEstimate vol = estimate_volume_B(
        shrink.e, alpha.log_q_alpha, shrink.mc_sample,
        [&](const Eigen::VectorXd& x) { return log_unnorm_posterior(spec, data, x); });
    if (vol.n_pass == 0) {
      res.status = "failed: no MC point above the density threshold (alpha=" +
                   std::to_string(alpha.alpha) + ", c=" + std::to_string(res.c_final) +
                   "); lower alpha";
      return res;
    }
    res.log_vol_B = vol.log_vol_B;

    HarmonicSum sum = thames_efficient(spec, second, lp_second, shrink.e, alpha.log_q_alpha,
                                       vol.log_vol_B, omega, shrink.qda, res.I_set);
    if (sum.empty) {
      res.status = "failed: no draw inside the truncation set (alpha=" +
                   std::to_string(alpha.alpha) + ", c=" + std::to_string(res.c_final) +
                   ", |Omega|=" + std::to_string(res.omega_size) + ")";
      return res;
    }
    res.log_z = sum.log_z;
    res.n_points_in_B = sum.n_points;
    double se_vol = std::sqrt((1.0 - vol.fraction) / (vol.fraction * vol.inside.size()));
    res.se_log_z = std::sqrt(sum.se_log_z * sum.se_log_z + se_vol * se_vol);
  } catch (const std::exception& ex) {
    res.status = std::string("failed: ") + ex.what();
  }
  return res;
}

}  // namespace thames
