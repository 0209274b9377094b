#include <catch2/catch_amalgamated.hpp>

#include <map>

#include "thames/oracle.hpp"
#include "thames/sampler.hpp"
#include "thames/simulate.hpp"

using namespace thames;

namespace {

// exact posterior mean of mu_1 for the toy model by brute force over all G^n
// allocations combined with the conjugate within-allocation posterior
double toy_posterior_mean_mu1(const Eigen::VectorXd& y, int G) {
  const int n = static_cast<int>(y.size());
  std::vector<int> alloc(n, 0);
  LogSumAccumulator denom;
  std::vector<double> log_weights;
  std::vector<double> cond_means;
  for (;;) {
    Eigen::VectorXd cnt = Eigen::VectorXd::Zero(G), sum = Eigen::VectorXd::Zero(G),
                    sumsq = Eigen::VectorXd::Zero(G);
    for (int i = 0; i < n; ++i) {
      cnt[alloc[i]] += 1;
      sum[alloc[i]] += y[i];
      sumsq[alloc[i]] += y[i] * y[i];
    }
    double lw = -n * std::log(static_cast<double>(G));
    for (int g = 0; g < G; ++g) {
      if (cnt[g] == 0) continue;
      lw += -0.5 * cnt[g] * log_2pi - 0.5 * std::log1p(cnt[g]) -
            0.5 * (sumsq[g] - sum[g] * sum[g] / (1.0 + cnt[g]));
    }
    log_weights.push_back(lw);
    cond_means.push_back(sum[0] / (1.0 + cnt[0]));
    denom.add(lw);
    int i = 0;
    while (i < n && alloc[i] == G - 1) alloc[i++] = 0;
    if (i == n) break;
    ++alloc[i];
  }
  double z = denom.value();
  double mean = 0.0;
  for (size_t k = 0; k < log_weights.size(); ++k)
    mean += std::exp(log_weights[k] - z) * cond_means[k];
  return mean;
}

double batch_means_se(const Eigen::VectorXd& x, int batches = 50) {
  int bs = static_cast<int>(x.size()) / batches;
  Eigen::VectorXd bm(batches);
  for (int b = 0; b < batches; ++b) bm[b] = x.segment(b * bs, bs).mean();
  double m = bm.mean();
  double var = (bm.array() - m).square().sum() / (batches - 1);
  return std::sqrt(var / batches);
}

}  // namespace

TEST_CASE("retained draw count is forced even") {
  ChainConfig cfg;
  cfg.iterations = 105;
  cfg.burn_in = 100;
  cfg.thin = 1;
  CHECK(retained_draws(cfg) == 4);
  cfg.iterations = 104;
  CHECK(retained_draws(cfg) == 4);
  cfg.burn_in = 104;
  CHECK_THROWS_AS(retained_draws(cfg), config_error);
}

TEST_CASE("identical seed and config give a bit-identical run") {
  Eigen::MatrixXd data(6, 1);
  data << 0.1, 0.4, -0.2, 5.9, 6.2, 6.0;
  ChainConfig cfg;
  cfg.iterations = 300;
  cfg.burn_in = 100;
  cfg.seed = 42;
  PosteriorRun a = gibbs_toy(data, 2, cfg);
  PosteriorRun b = gibbs_toy(data, 2, cfg);
  CHECK(a.draws == b.draws);
  CHECK(a.log_post == b.log_post);
  CHECK(a.allocations == b.allocations);
}

TEST_CASE("log_post trace matches the model evaluation") {
  Eigen::MatrixXd data(8, 1);
  data << 0.1, 0.4, -0.2, 0.3, 5.9, 6.2, 6.0, 5.7;
  ChainConfig cfg;
  cfg.iterations = 240;
  cfg.burn_in = 200;
  cfg.seed = 3;
  MixtureScenario mv = separated_scenario(2, 2);
  SimulatedDataset mds = simulate_mixture(mv, 12, 2);
  for (Family f : {Family::MvnFull, Family::MvnDiag}) {
    PosteriorRun run = gibbs_mvn(mds.data, 2, cfg, f);
    for (int t = 0; t < run.T(); ++t) {
      double lp = log_unnorm_posterior(run.spec, mds.data, run.draws.row(t).transpose());
      CHECK(run.log_post[t] == Catch::Approx(lp).epsilon(1e-8).margin(1e-8));
    }
  }
  for (PosteriorRun run : {gibbs_toy(data, 2, cfg), gibbs_uni_hier(data, 2, cfg)}) {
    for (int t = 0; t < run.T(); ++t) {
      double lp = log_unnorm_posterior(run.spec, data, run.draws.row(t).transpose());
      CHECK(run.log_post[t] == Catch::Approx(lp).epsilon(1e-8).margin(1e-8));
    }
    for (int t = 0; t < run.T(); ++t)
      for (int i = 0; i < run.n(); ++i) {
        CHECK(run.allocations(t, i) >= 0);
        CHECK(run.allocations(t, i) < run.spec.G);
      }
  }
}

TEST_CASE("toy conditional for an empty component is the standard normal prior") {
  // n=1: each sweep leaves one component empty; its mean draws follow N(0,1)
  Eigen::MatrixXd data(1, 1);
  data << 0.0;
  ChainConfig cfg;
  cfg.iterations = 42000;
  cfg.burn_in = 2000;
  cfg.seed = 11;
  PosteriorRun run = gibbs_toy(data, 2, cfg);
  std::vector<double> empty_draws;
  for (int t = 0; t < run.T(); ++t) {
    int occupied = run.allocations(t, 0);
    empty_draws.push_back(run.draws(t, 1 - occupied));
  }
  Eigen::Map<Eigen::VectorXd> e(empty_draws.data(), empty_draws.size());
  double mean = e.mean();
  double sd = std::sqrt((e.array() - mean).square().sum() / (e.size() - 1));
  CHECK(std::fabs(mean) < 3.0 / std::sqrt(static_cast<double>(e.size())));
  CHECK(sd == Catch::Approx(1.0).margin(0.05));

  // the occupied component follows Normal(sum/(1+n), 1/(1+n)) = N(0, 1/2)
  std::vector<double> occupied;
  for (int t = 0; t < run.T(); ++t) occupied.push_back(run.draws(t, run.allocations(t, 0)));
  Eigen::Map<Eigen::VectorXd> o(occupied.data(), occupied.size());
  double omean = o.mean();
  double osd = std::sqrt((o.array() - omean).square().sum() / (o.size() - 1));
  CHECK(std::fabs(omean) < 3.0 * std::sqrt(0.5 / o.size()));
  CHECK(osd == Catch::Approx(std::sqrt(0.5)).margin(0.04));
}

TEST_CASE("getting it right: toy posterior mean matches allocation quadrature") {
  Eigen::MatrixXd data(3, 1);
  data << -0.5, 0.2, 1.4;
  double exact = toy_posterior_mean_mu1(data.col(0), 2);
  ChainConfig cfg;
  cfg.iterations = 52000;
  cfg.burn_in = 2000;
  cfg.seed = 1234;
  PosteriorRun run = gibbs_toy(data, 2, cfg);
  Eigen::VectorXd mu1 = run.draws.col(0);
  double se = batch_means_se(mu1);
  INFO("exact=" << exact << " mcmc=" << mu1.mean() << " se=" << se);
  CHECK(std::fabs(mu1.mean() - exact) < 3.0 * se);
}

TEST_CASE("zeta full conditional matches Gamma(0.2 + 2G, 10/lambda^2 + sum 1/sigma^2)") {
  // independent oracle: numerically normalize the conditional density
  // Gamma-prior(zeta) * prod_g InvGamma(sigma_g^2; 2, zeta) on a grid and
  // compare its mean with the conjugate Gamma's mean
  const int G = 3;
  const double lambda = 7.0;
  const double a0 = 0.2, b0 = 10.0 / (lambda * lambda);
  Eigen::VectorXd var(G);
  var << 0.7, 2.2, 1.1;
  double rate = b0 + var.array().inverse().sum();
  double shape = a0 + 2.0 * G;

  auto log_cond = [&](double z) {
    double lp = (a0 - 1.0) * std::log(z) - b0 * z;
    for (int g = 0; g < G; ++g) lp += 2.0 * std::log(z) - z / var[g];
    return lp;
  };
  const int K = 200000;
  const double hi = 40.0;
  double h = hi / K;
  LogSumAccumulator num, den;
  for (int k = 1; k <= K; ++k) {
    double z = k * h;
    den.add(log_cond(z));
    num.add(log_cond(z) + std::log(z));
  }
  double grid_mean = std::exp(num.value() - den.value());
  CHECK(grid_mean == Catch::Approx(shape / rate).epsilon(1e-4));
}

TEST_CASE("vacuous component leaves the Dirichlet weight near its prior") {
  // single tight blob fitted with G=2: counts concentrate as (n, 0), so the
  // occupied label's tau should average near E[Dir(n+1, 1)] = (n+1)/(n+2)
  MixtureScenario sc = separated_scenario(1, 2);
  SimulatedDataset ds = simulate_mixture(sc, 10, 99);
  ChainConfig cfg;
  cfg.iterations = 6000;
  cfg.burn_in = 1000;
  cfg.seed = 7;
  PosteriorRun run = gibbs_mvn(ds.data, 2, cfg, Family::MvnFull);
  double tau_max_mean = 0.0;
  for (int t = 0; t < run.T(); ++t) {
    Eigen::VectorXd tau = tau_from_values(run.spec, run.draws.row(t).transpose());
    tau_max_mean += tau.maxCoeff();
    CHECK((tau.array() > 0.0).all());
  }
  tau_max_mean /= run.T();
  CHECK(tau_max_mean == Catch::Approx(11.0 / 12.0).margin(0.03));
}

TEST_CASE("well-separated data pin the allocations") {
  MixtureScenario sc = separated_scenario(3, 2);
  SimulatedDataset ds = simulate_mixture(sc, 60, 31);
  ChainConfig cfg;
  cfg.iterations = 600;
  cfg.burn_in = 200;
  cfg.seed = 4;
  PosteriorRun run = gibbs_mvn(ds.data, 3, cfg, Family::MvnFull);
  CHECK(check_separation(run));
}

TEST_CASE("default hyperparameters follow the documented settings") {
  MixtureScenario sc = separated_scenario(3, 4);
  SimulatedDataset ds = simulate_mixture(sc, 50, 5);
  HyperParams h = default_hyperparameters(ds.data, 3, Family::MvnFull);
  CHECK(h.e.size() == 3);
  CHECK((h.e.array() == 1.0).all());
  CHECK(h.phi0 == 4.0);  // = d
  CHECK(h.kappa0 == 1e-5);
  HyperParams h2 = default_hyperparameters(ds.data, 3, Family::MvnFull);
  CHECK(h.Lambda == h2.Lambda);  // deterministic pre-clustering
  CHECK((h.beta - ds.data.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-12);

  HyperParams hd = default_hyperparameters(ds.data, 3, Family::MvnDiag);
  CHECK(hd.phi0 == 2.0);
  CHECK(hd.lambda_r.size() == 4);
  CHECK((hd.lambda_r.array() > 0.0).all());

  CHECK_THROWS_AS(default_hyperparameters(ds.data, 51, Family::MvnFull), config_error);
}

TEST_CASE("Lambda multiplier is 1 + phi0 + d on a constructed clustering") {
  // two tight clusters of {0,1,2} and {100,101,102}: per-cluster variance 1,
  // so Lambda = (1 + phi0 + d) * 1 = 3 for d = 1 up to the tiny PD ridge
  Eigen::MatrixXd data(6, 1);
  data << 0.0, 1.0, 2.0, 100.0, 101.0, 102.0;
  HyperParams h = default_hyperparameters(data, 2, Family::MvnFull);
  CHECK(h.phi0 == 1.0);
  CHECK(h.Lambda(0, 0) == Catch::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("toy scenario means interpolate as documented") {
  CHECK(uni_toy_scenario(2, 0.0).means[0][0] == Catch::Approx(0.0));
  CHECK(uni_toy_scenario(2, 0.0).means[1][0] == Catch::Approx(6.0));
  CHECK(uni_toy_scenario(2, 1.0).means[0][0] == Catch::Approx(2.0));
  CHECK(uni_toy_scenario(2, 1.0).means[1][0] == Catch::Approx(4.0));
  MixtureScenario g3 = uni_toy_scenario(3, 0.0);
  CHECK(g3.means[0][0] == Catch::Approx(0.0));
  CHECK(g3.means[1][0] == Catch::Approx(3.0));
  CHECK(g3.means[2][0] == Catch::Approx(6.0));
  MixtureScenario sep = separated_scenario(3, 2);
  CHECK((sep.means[1] - sep.means[0]).cwiseAbs().minCoeff() == Catch::Approx(100.0));
}

TEST_CASE("initialize_chain covers all labels and splits separated blobs") {
  Eigen::MatrixXd data(8, 1);
  data << 0.0, 0.1, -0.1, 0.05, 10.0, 10.1, 9.9, 10.05;
  auto labels = initialize_chain(data, 2);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[4] == labels[5]);
  CHECK(labels[0] != labels[4]);
  auto one = initialize_chain(data, 1);
  CHECK(std::all_of(one.begin(), one.end(), [](int l) { return l == 0; }));
}

TEST_CASE("k-means recovers well-separated groups") {
  MixtureScenario sc = separated_scenario(5, 6);
  SimulatedDataset ds = simulate_mixture(sc, 200, 17);
  auto labels = initialize_chain(ds.data, 5);
  // agreement up to permutation: map each k-means label to its majority truth
  std::map<int, std::map<int, int>> table;
  for (size_t i = 0; i < labels.size(); ++i) table[labels[i]][ds.labels[i]]++;
  int agree = 0;
  for (auto& [l, counts] : table) {
    int best = 0;
    for (auto& [truth, c] : counts) best = std::max(best, c);
    agree += best;
  }
  CHECK(agree >= static_cast<int>(0.95 * ds.data.rows()));
}
