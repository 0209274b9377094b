#include <catch2/catch_amalgamated.hpp>

#include "thames/geometry.hpp"
#include "thames/model.hpp"
#include "thames/rng.hpp"

using namespace thames;

namespace {

BlockLayout scalar_layout(int G) {
  BlockLayout l;
  l.G = G;
  l.u = 1;
  l.tau_dim = 0;
  l.R = G;
  return l;
}

}  // namespace

TEST_CASE("closed-form volumes") {
  CHECK(Ellipsoid(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2), 1.0).volume() ==
        Catch::Approx(M_PI).epsilon(1e-12));
  CHECK(Ellipsoid(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3), 1.0).volume() ==
        Catch::Approx(4.0 * M_PI / 3.0).epsilon(1e-12));
  CHECK(Ellipsoid(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0), 1.0)
            .volume() == Catch::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("fit_ellipsoid handles degenerate and sampled draws") {
  Eigen::MatrixXd constant = Eigen::MatrixXd::Ones(10, 3) * 2.5;
  Ellipsoid e = fit_ellipsoid(constant, 1.0);
  CHECK((e.center().array() == 2.5).all());
  CHECK(e.contains(e.center()));

  // large standard-normal sample: scatter close to the identity
  Rng rng(3);
  Eigen::MatrixXd draws(50000, 2);
  for (int i = 0; i < draws.rows(); ++i) draws.row(i) = rng.normal_vector(2).transpose();
  Ellipsoid big = fit_ellipsoid(draws, default_radius(2));
  CHECK(big.scatter()(0, 0) == Catch::Approx(1.0).margin(0.05));
  CHECK(big.scatter()(1, 1) == Catch::Approx(1.0).margin(0.05));
  CHECK(big.scatter()(0, 1) == Catch::Approx(0.0).margin(0.05));
  CHECK(default_radius(2) == Catch::Approx(std::sqrt(3.0)));
}

TEST_CASE("uniform samples stay inside and are symmetric", "[mc]") {
  Eigen::VectorXd center(3);
  center << 1.0, -2.0, 0.5;
  Eigen::MatrixXd A(3, 3);
  A << 2.0, 0.3, 0.0, 0.3, 1.5, -0.2, 0.0, -0.2, 0.8;
  Ellipsoid e(center, A * A.transpose(), 1.7);
  Rng rng(11);
  const int N = 100000;
  Eigen::MatrixXd pts = e.sample_uniform(N, rng);
  int above = 0;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (int j = 0; j < N; ++j) {
    Eigen::VectorXd x = pts.row(j).transpose();
    REQUIRE(e.contains(x));
    if (x[0] > center[0]) ++above;
    mean += x;
  }
  mean /= N;
  // fraction above the center in the first coordinate ~ 1/2
  double se_frac = 0.5 / std::sqrt(static_cast<double>(N));
  CHECK(std::fabs(above / static_cast<double>(N) - 0.5) < 3.0 * se_frac);
  // sample mean near the center within 3 standard errors per coordinate
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(3, 3);
  for (int j = 0; j < N; ++j) {
    Eigen::VectorXd c = pts.row(j).transpose() - mean;
    cov += c * c.transpose();
  }
  cov /= N - 1;
  for (int k = 0; k < 3; ++k)
    CHECK(std::fabs(mean[k] - center[k]) < 3.0 * std::sqrt(cov(k, k) / N));
}

TEST_CASE("volume formula agrees with box Monte Carlo", "[mc]") {
  // in a bounding box, the hit fraction times the box volume estimates V(E)
  Eigen::MatrixXd S(2, 2);
  S << 1.3, 0.4, 0.4, 0.9;
  Ellipsoid e(Eigen::VectorXd::Zero(2), S, 1.2);
  double half = 1.2 * std::sqrt(S.diagonal().maxCoeff()) * 2.0;
  Rng rng(21);
  const int N = 100000;
  int hits = 0;
  for (int j = 0; j < N; ++j) {
    Eigen::VectorXd x(2);
    x << (2.0 * rng.uniform() - 1.0) * half, (2.0 * rng.uniform() - 1.0) * half;
    if (e.contains(x)) ++hits;
  }
  double box = (2.0 * half) * (2.0 * half);
  double frac = hits / static_cast<double>(N);
  double est = box * frac;
  double se = box * std::sqrt(frac * (1.0 - frac) / N);
  CHECK(std::fabs(est - e.volume()) < 3.0 * se);
}

TEST_CASE("hyperplane crossing on closed-form cases") {
  BlockLayout l = scalar_layout(2);
  Eigen::VectorXd center(2);
  center << 0.0, 10.0;
  Ellipsoid e(center, Eigen::MatrixXd::Identity(2, 2), 1.0);
  // constrained optimum at the midpoint: (0-5)^2 + (10-5)^2 = 50
  CHECK(hyperplane_min_mahalanobis2(e, l, 0, 1) == Catch::Approx(50.0).epsilon(1e-12));
  CHECK_FALSE(hyperplane_crosses(e, l, 0, 1));

  Eigen::VectorXd same(2);
  same << 3.0, 3.0;
  Ellipsoid e2(same, Eigen::MatrixXd::Identity(2, 2), 0.5);
  CHECK(hyperplane_min_mahalanobis2(e2, l, 0, 1) == Catch::Approx(0.0).margin(1e-12));
  CHECK(hyperplane_crosses(e2, l, 0, 1));
}

TEST_CASE("hyperplane minimum matches a dense grid search", "[mc]") {
  // 2-D toy: blocks are scalars, grid over the constraint line xi_1 = xi_2
  BlockLayout l = scalar_layout(2);
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd center = rng.normal_vector(2) * 2.0;
    Eigen::MatrixXd A(2, 2);
    A << 1.0 + rng.uniform(), 0.3 * rng.normal(), 0.3 * rng.normal(), 1.0 + rng.uniform();
    Eigen::MatrixXd S = A * A.transpose();
    Ellipsoid e(center, S, 1.0);
    double best = std::numeric_limits<double>::infinity();
    for (double x = -30.0; x <= 30.0; x += 0.001) {
      Eigen::VectorXd p(2);
      p << x, x;
      best = std::min(best, e.mahalanobis2(p));
    }
    double kkt = hyperplane_min_mahalanobis2(e, l, 0, 1);
    CHECK(kkt == Catch::Approx(best).margin(1e-4));
    CHECK(kkt <= best + 1e-12);
    // symmetry in the pair
    CHECK(hyperplane_min_mahalanobis2(e, l, 1, 0) == Catch::Approx(kkt).epsilon(1e-12));
  }
}

TEST_CASE("overlap graph edges and greedy independent set") {
  // far-apart components: no edges
  BlockLayout l = scalar_layout(3);
  Eigen::VectorXd center(3);
  center << 0.0, 100.0, 200.0;
  Ellipsoid far(center, Eigen::MatrixXd::Identity(3, 3), 2.0);
  OverlapGraph g = build_overlap_graph(far, l, 3);
  CHECK(g.edges().empty());
  CHECK(max_independent_set_greedy(g) == std::vector<int>{0, 1, 2});

  // single component
  Ellipsoid one(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 1.0);
  OverlapGraph g1 = build_overlap_graph(one, scalar_layout(1), 1);
  CHECK(g1.edges().empty());
  CHECK(max_independent_set_greedy(g1).size() == 1);
}

TEST_CASE("four-cycle graph reproduces the documented independent set") {
  // edges (1,2),(2,4),(4,3),(3,1): at most two non-overlapping components
  OverlapGraph g;
  g.G = 4;
  g.adj.setConstant(4, 4, false);
  auto link = [&](int a, int b) {
    g.adj(a, b) = true;
    g.adj(b, a) = true;
  };
  link(0, 1);
  link(1, 3);
  link(3, 2);
  link(2, 0);
  auto iset = max_independent_set_greedy(g);
  CHECK(iset.size() == 2);
  CHECK(iset == std::vector<int>{0, 3});  // components 1 and 4
  CHECK(criterion_of_overlap(static_cast<int>(iset.size()), 4) == 0);

  // complete graph collapses to the lowest label
  OverlapGraph k4;
  k4.G = 4;
  k4.adj.setConstant(4, 4, true);
  k4.adj.diagonal().setConstant(false);
  CHECK(max_independent_set_greedy(k4) == std::vector<int>{0});
}

TEST_CASE("greedy MIS always returns an independent set", "[property]") {
  Rng rng(17);
  for (int rep = 0; rep < 300; ++rep) {
    int G = 2 + static_cast<int>(rng.uniform() * 8);
    OverlapGraph g;
    g.G = G;
    g.adj.setConstant(G, G, false);
    for (int a = 0; a < G; ++a)
      for (int b = a + 1; b < G; ++b)
        if (rng.uniform() < 0.35) {
          g.adj(a, b) = true;
          g.adj(b, a) = true;
        }
    auto iset = max_independent_set_greedy(g);
    REQUIRE(!iset.empty());
    for (size_t x = 0; x < iset.size(); ++x)
      for (size_t y = x + 1; y < iset.size(); ++y) CHECK_FALSE(g.adj(iset[x], iset[y]));
  }
}

TEST_CASE("criterion of overlap arithmetic") {
  CHECK(criterion_of_overlap(3, 3) == 3);   // I = G
  CHECK(criterion_of_overlap(3, 6) == 0);
  CHECK(criterion_of_overlap(1, 4) == -2);
}

TEST_CASE("DOT export is stable") {
  OverlapGraph g;
  g.G = 3;
  g.adj.setConstant(3, 3, false);
  g.adj(0, 1) = g.adj(1, 0) = true;
  CHECK(overlap_graph_to_dot(g) ==
        "graph overlap_G3 {\n  1;\n  2;\n  3;\n  1 -- 2;\n}\n");
}
