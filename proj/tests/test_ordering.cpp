#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "thames/ordering.hpp"
#include "thames/sampler.hpp"

using namespace thames;

namespace {

ModelSpec toy_spec(int G) {
  ModelSpec s;
  s.family = Family::UniFixedSigma;
  s.G = G;
  s.d = 1;
  s.hyper.e = Eigen::VectorXd::Ones(G);
  return s;
}

// scalar-block draws with per-component means
Eigen::MatrixXd scalar_draws(int T, const std::vector<double>& means, double sd, Rng& rng) {
  Eigen::MatrixXd X(T, means.size());
  for (int t = 0; t < T; ++t)
    for (size_t g = 0; g < means.size(); ++g) X(t, g) = means[g] + sd * rng.normal();
  return X;
}

OverlapGraph no_overlap(int G) {
  OverlapGraph g;
  g.G = G;
  g.adj.setConstant(G, G, false);
  return g;
}

// brute-force filter: all slot sequences compatible with the precedences
std::vector<std::vector<int>> filter_orderings(const DeltaMatrix& dm) {
  int G = dm.G();
  std::vector<int> seq(G);
  std::iota(seq.begin(), seq.end(), 0);
  std::vector<std::vector<int>> keep;
  do {
    std::vector<int> pos(G);
    for (int k = 0; k < G; ++k) pos[seq[k]] = k;
    bool ok = true;
    for (int a = 0; a < G && ok; ++a)
      for (int b = 0; b < G && ok; ++b)
        if (dm.delta(a, b) && pos[a] > pos[b]) ok = false;
    if (ok) keep.push_back(seq);
  } while (std::next_permutation(seq.begin(), seq.end()));
  return keep;
}

DeltaMatrix random_dag(int G, double p, Rng& rng) {
  std::vector<int> order(G);
  std::iota(order.begin(), order.end(), 0);
  for (int i = G - 1; i > 0; --i)
    std::swap(order[i], order[std::min(static_cast<int>(rng.uniform() * (i + 1)), i)]);
  DeltaMatrix dm;
  dm.delta.setZero(G, G);
  dm.min_margin.setConstant(G, G, 1.0);
  for (int i = 0; i < G; ++i)
    for (int j = i + 1; j < G; ++j)
      if (rng.uniform() < p) dm.delta(order[i], order[j]) = 1;
  return dm;
}

}  // namespace

TEST_CASE("fit_qda on constant and sampled blocks") {
  BlockLayout l;
  l.G = 2;
  l.u = 1;
  l.tau_dim = 0;
  l.R = 2;
  Eigen::MatrixXd constant(8, 2);
  constant.col(0).setConstant(1.5);
  constant.col(1).setConstant(-2.0);
  QdaModel q = fit_qda(constant, l);
  CHECK(q.means[0][0] == Catch::Approx(1.5));
  CHECK(q.means[1][0] == Catch::Approx(-2.0));
  CHECK(q.chol[0](0, 0) > 0.0);  // ridge keeps the factor usable

  Rng rng(31);
  Eigen::MatrixXd sampled = scalar_draws(20000, {0.0, 10.0}, 1.0, rng);
  QdaModel qs = fit_qda(sampled, l);
  double se = 1.0 / std::sqrt(20000.0);
  CHECK(std::fabs(qs.means[0][0] - 0.0) < 3.0 * se);
  CHECK(std::fabs(qs.means[1][0] - 10.0) < 3.0 * se);
  // restricting to all rows matches the unrestricted fit
  std::vector<int> all(20000);
  std::iota(all.begin(), all.end(), 0);
  QdaModel qr = fit_qda(sampled, l, &all);
  CHECK(qr.means[0][0] == qs.means[0][0]);
  CHECK(qr.chol[1](0, 0) == qs.chol[1](0, 0));
}

TEST_CASE("qda_assign probabilities and tie-breaks") {
  BlockLayout l;
  l.G = 2;
  l.u = 1;
  l.tau_dim = 0;
  l.R = 2;
  Rng rng(7);
  Eigen::MatrixXd sampled = scalar_draws(50000, {0.0, 10.0}, 1.0, rng);
  QdaModel q = fit_qda(sampled, l);
  std::vector<int> iset{0, 1};

  auto at_mean = qda_assign(Eigen::VectorXd::Constant(1, 0.0), q, iset);
  CHECK(at_mean.g_hat == 0);
  CHECK(at_mean.w_hat == Catch::Approx(1.0).margin(1e-6));

  // exact class models: equidistant point ties at 1/2, lowest label wins
  QdaModel exact;
  exact.u = 1;
  exact.means = {Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 10.0)};
  exact.chol = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
  auto mid = qda_assign(Eigen::VectorXd::Constant(1, 5.0), exact, iset);
  CHECK(mid.w_hat == Catch::Approx(0.5));
  CHECK(mid.g_hat == 0);
  // renormalization over the candidate set sums to one
  auto other = qda_assign(Eigen::VectorXd::Constant(1, 5.0), exact, std::vector<int>{1});
  CHECK(other.w_hat == Catch::Approx(1.0));
}

TEST_CASE("summary measure W lands in the assigned unit interval") {
  BlockLayout l;
  l.G = 3;
  l.u = 1;
  l.tau_dim = 0;
  l.R = 3;
  Rng rng(13);
  Eigen::MatrixXd sampled = scalar_draws(30000, {0.0, 10.0, 20.0}, 1.0, rng);
  QdaModel q = fit_qda(sampled, l);
  std::vector<int> iset{0, 1, 2};
  // near-certain assignment to component 2 (1-based) gives W ~ 2
  CHECK(summary_w(Eigen::VectorXd::Constant(1, 10.0), q, iset) ==
        Catch::Approx(2.0).margin(1e-4));
  // ambiguous point between the first two components: W ~ 1.5
  CHECK(summary_w(Eigen::VectorXd::Constant(1, 5.0), q, iset) ==
        Catch::Approx(1.5).margin(0.05));
  for (double x : {-3.0, 1.0, 8.0, 14.0, 22.0}) {
    auto a = qda_assign(Eigen::VectorXd::Constant(1, x), q, iset);
    double w = summary_w(Eigen::VectorXd::Constant(1, x), q, iset);
    CHECK(w >= a.g_hat + 1);
    CHECK(w < a.g_hat + 2);
  }
  // confident assignments to distinct members live in disjoint unit intervals
  double w0 = summary_w(Eigen::VectorXd::Constant(1, 0.0), q, iset);
  double w1 = summary_w(Eigen::VectorXd::Constant(1, 10.0), q, iset);
  CHECK(std::floor(w0) != std::floor(w1));
}

TEST_CASE("delta matrix from separated and overlapping components") {
  BlockLayout l;
  l.G = 2;
  l.u = 1;
  l.tau_dim = 0;
  l.R = 2;
  Rng rng(3);
  Eigen::MatrixXd sampled = scalar_draws(5000, {0.0, 100.0}, 1.0, rng);
  QdaModel q = fit_qda(sampled, l);
  std::vector<int> iset{0, 1};
  Eigen::VectorXd center(2);
  center << 0.0, 100.0;
  Ellipsoid e(center, Eigen::MatrixXd::Identity(2, 2), 2.0);
  Eigen::MatrixXd mc = e.sample_uniform(2000, rng);
  DeltaMatrix dm = build_delta(w_matrix(mc, l, q, iset), no_overlap(2));
  CHECK(dm.delta(0, 1) == 1);
  CHECK(dm.delta(1, 0) == 0);

  // an overlap edge forces both directions to zero
  OverlapGraph og = no_overlap(2);
  og.adj(0, 1) = og.adj(1, 0) = true;
  DeltaMatrix dm2 = build_delta(w_matrix(mc, l, q, iset), og);
  CHECK(dm2.delta(0, 1) == 0);
  CHECK(dm2.delta(1, 0) == 0);

  // G = 1 degenerates to a 1x1 zero matrix
  BlockLayout l1;
  l1.G = 1;
  l1.u = 1;
  l1.tau_dim = 0;
  l1.R = 1;
  Eigen::MatrixXd one = scalar_draws(100, {0.0}, 1.0, rng);
  QdaModel q1 = fit_qda(one, l1);
  DeltaMatrix dm1 = build_delta(w_matrix(one, l1, q1, {0}), no_overlap(1));
  CHECK(dm1.delta(0, 0) == 0);
}

TEST_CASE("ordering bound identities") {
  DeltaMatrix chain;
  chain.delta.setZero(4, 4);
  chain.min_margin.setConstant(4, 4, 1.0);
  chain.delta(0, 1) = chain.delta(1, 2) = chain.delta(2, 3) = 1;
  CHECK(ordering_bound(chain) == 1);

  DeltaMatrix empty;
  empty.delta.setZero(4, 4);
  empty.min_margin.setConstant(4, 4, 1.0);
  CHECK(ordering_bound(empty) == 24);

  DeltaMatrix g5;
  g5.delta.setZero(5, 5);
  g5.min_margin.setConstant(5, 5, 1.0);
  g5.delta(0, 1) = g5.delta(1, 2) = 1;  // 3-vertex chain
  CHECK(ordering_bound(g5) == 20);      // 120 / 3!
}

TEST_CASE("enumerate_orderings matches brute-force filtering") {
  DeltaMatrix empty;
  empty.delta.setZero(3, 3);
  empty.min_margin.setConstant(3, 3, 1.0);
  OrderingSet all = enumerate_orderings(empty, 100);
  CHECK(all.omega.size() == 6);

  DeltaMatrix chain;
  chain.delta.setZero(3, 3);
  chain.min_margin.setConstant(3, 3, 1.0);
  chain.delta(0, 1) = chain.delta(1, 2) = 1;
  CHECK(enumerate_orderings(chain, 100).omega.size() == 1);

  DeltaMatrix one_edge;
  one_edge.delta.setZero(3, 3);
  one_edge.min_margin.setConstant(3, 3, 1.0);
  one_edge.delta(0, 1) = 1;
  OrderingSet constrained = enumerate_orderings(one_edge, 100);
  CHECK(constrained.omega.size() == 3);
  CHECK(constrained.omega == filter_orderings(one_edge));

  // random acyclic precedence matrices, G <= 5
  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    int G = 2 + static_cast<int>(rng.uniform() * 4);
    DeltaMatrix dm = random_dag(G, 0.4, rng);
    OrderingSet os = enumerate_orderings(dm, 1000);
    auto brute = filter_orderings(dm);
    REQUIRE(os.omega.size() == brute.size());
    CHECK(os.omega == brute);  // lexicographic emission matches the filter order
    CHECK(static_cast<long long>(os.omega.size()) <= ordering_bound(dm));
  }
}

TEST_CASE("apply_ordering realizes the requested constraint") {
  ModelSpec spec = toy_spec(3);
  BlockLayout l = layout(spec);
  Rng rng(41);
  Eigen::MatrixXd sampled = scalar_draws(20000, {0.0, 10.0, 20.0}, 1.0, rng);
  QdaModel q = fit_qda(sampled, l);
  std::vector<int> iset{0, 1, 2};

  TransformedParameterVector v;
  v.values.resize(3);
  v.values << 1.0, 9.5, 21.0;  // already W-sorted
  v.log_jacobian = 0.0;
  auto id = apply_ordering(spec, v, {0, 1, 2}, q, iset);
  CHECK(id.values == v.values);

  TransformedParameterVector shuffled;
  shuffled.values.resize(3);
  shuffled.values << 21.0, 1.0, 9.5;
  shuffled.log_jacobian = 0.0;
  auto sorted = apply_ordering(spec, shuffled, {0, 1, 2}, q, iset);
  CHECK(sorted.values[0] == 1.0);
  CHECK(sorted.values[1] == 9.5);
  CHECK(sorted.values[2] == 21.0);

  // the two G=2 ordering maps emit label swaps of each other
  ModelSpec spec2 = toy_spec(2);
  BlockLayout l2 = layout(spec2);
  Eigen::MatrixXd s2 = scalar_draws(20000, {0.0, 10.0}, 1.0, rng);
  QdaModel q2 = fit_qda(s2, l2);
  TransformedParameterVector w;
  w.values.resize(2);
  w.values << 8.0, 3.0;
  w.log_jacobian = 0.0;
  auto psi1 = apply_ordering(spec2, w, {0, 1}, q2, {0, 1});
  auto psi2 = apply_ordering(spec2, w, {1, 0}, q2, {0, 1});
  CHECK(psi1.values[0] == psi2.values[1]);
  CHECK(psi1.values[1] == psi2.values[0]);
}

TEST_CASE("permutation-sum identity for ordering maps", "[property]") {
  // counting in-ellipsoid images over all ordering maps equals the same count
  // over plain label permutations; exhaustive over G! for G <= 4
  Rng rng(59);
  for (int G : {2, 3, 4}) {
    ModelSpec spec = toy_spec(G);
    BlockLayout l = layout(spec);
    std::vector<double> means(G);
    for (int g = 0; g < G; ++g) means[g] = 3.0 * g;
    Eigen::MatrixXd sampled = scalar_draws(4000, means, 1.0, rng);
    QdaModel q = fit_qda(sampled, l);
    std::vector<int> iset(G);
    std::iota(iset.begin(), iset.end(), 0);

    for (int rep = 0; rep < 40; ++rep) {
      Eigen::VectorXd center = rng.normal_vector(G) * 3.0;
      Eigen::MatrixXd A(G, G);
      for (int c = 0; c < G; ++c) A.col(c) = rng.normal_vector(G) * 0.5;
      Eigen::MatrixXd S = A * A.transpose() + Eigen::MatrixXd::Identity(G, G);
      Ellipsoid e(center, S, 1.0 + 2.0 * rng.uniform());

      TransformedParameterVector v;
      v.values = rng.normal_vector(G) * 4.0;
      v.log_jacobian = 0.0;

      std::vector<int> sigma(G);
      std::iota(sigma.begin(), sigma.end(), 0);
      int count_plain = 0, count_ordered = 0;
      do {
        if (e.contains(permute_components(spec, v, sigma).values)) ++count_plain;
        if (e.contains(apply_ordering(spec, v, sigma, q, iset).values)) ++count_ordered;
      } while (std::next_permutation(sigma.begin(), sigma.end()));
      CHECK(count_plain == count_ordered);
    }
  }
}

TEST_CASE("enumerated orderings are valid topological orders", "[property]") {
  Rng rng(71);
  for (int rep = 0; rep < 50; ++rep) {
    int G = 2 + static_cast<int>(rng.uniform() * 5);
    DeltaMatrix dm = random_dag(G, 0.3, rng);
    OrderingSet os = enumerate_orderings(dm, 100000);
    for (const auto& o : os.omega) {
      std::vector<int> pos(G);
      for (int k = 0; k < G; ++k) pos[o[k]] = k;
      for (int a = 0; a < G; ++a)
        for (int b = 0; b < G; ++b)
          if (dm.delta(a, b)) CHECK(pos[a] < pos[b]);
    }
  }
}

TEST_CASE("cycle resolution drops the smallest-margin edge") {
  DeltaMatrix dm;
  dm.delta.setZero(3, 3);
  dm.delta(0, 1) = dm.delta(1, 2) = dm.delta(2, 0) = 1;
  dm.min_margin.setConstant(3, 3, 1.0);
  dm.min_margin(2, 0) = 0.01;
  warn_sink() = [](const std::string&) {};
  resolve_cycles(dm);
  warn_sink() = nullptr;
  CHECK(dm.delta(2, 0) == 0);
  CHECK(dm.delta(0, 1) == 1);
  CHECK(dm.delta(1, 2) == 1);
}

TEST_CASE("shrinkage: tractable inputs pass through unchanged") {
  ModelSpec spec = toy_spec(3);
  BlockLayout l = layout(spec);
  Rng rng(87);
  Eigen::MatrixXd draws = scalar_draws(400, {0.0, 10.0, 20.0}, 1.0, rng);
  Eigen::VectorXd lp = -Eigen::VectorXd::Random(400).cwiseAbs();
  Ellipsoid e0 = fit_ellipsoid(draws.topRows(200), default_radius(3));
  QdaModel q = fit_qda(draws.bottomRows(200), l);
  ShrinkResult res = shrink_until_tractable(spec, e0, draws.bottomRows(200), lp.tail(200),
                                            q, {0, 1, 2}, 50000, 2000, Rng(3));
  CHECK(res.e.radius() == e0.radius());
  CHECK(res.halvings == 0);
  CHECK_FALSE(res.recentered);
  CHECK(ordering_bound(res.delta) <= 50000);
}

TEST_CASE("shrinkage orders a pathologically overlapping posterior") {
  // nine near-identical blocks in two loose clusters: the initial bound is
  // 9!/2! = 181440, so halving must engage; termination requires recentering
  // because the ellipsoid quickly loses all sample points
  const int G = 9;
  ModelSpec spec = toy_spec(G);
  BlockLayout l = layout(spec);
  Rng rng(15);
  // two loose clusters far enough apart not to overlap, with within-cluster
  // gaps far below the draw spread so the initial precedences cannot resolve
  std::vector<double> means(G);
  for (int g = 0; g < G; ++g) means[g] = (g < 5 ? 0.0 : 5.0) + 0.3 * (g % 5);
  Eigen::MatrixXd draws = scalar_draws(600, means, 1.0, rng);
  Eigen::VectorXd lp = -Eigen::VectorXd::Random(600).cwiseAbs();
  Ellipsoid e0 = fit_ellipsoid(draws.topRows(300), default_radius(G));
  OverlapGraph og = build_overlap_graph(e0, l, G);
  auto iset = max_independent_set_greedy(og);
  REQUIRE(iset.size() == 2);  // one representative per cluster
  QdaModel q = fit_qda(draws.bottomRows(300), l);

  DeltaMatrix initial = build_delta(
      w_matrix(e0.sample_uniform(2000, Rng(4)), l, q, iset), og);
  long long initial_bound = ordering_bound(initial);
  REQUIRE(initial_bound > 50000);

  warn_sink() = [](const std::string&) {};
  ShrinkResult res = shrink_until_tractable(spec, e0, draws.bottomRows(300), lp.tail(300),
                                            q, iset, 50000, 2000, Rng(5));
  warn_sink() = nullptr;
  CHECK(res.e.radius() < e0.radius());
  CHECK(ordering_bound(res.delta) <= 50000);
  CHECK(static_cast<long long>(ordering_bound(res.delta)) <= initial_bound);
  if (res.recentered) {
    int inside = 0;
    for (int t = 0; t < 300; ++t)
      if (res.e.contains(draws.bottomRows(300).row(t).transpose())) ++inside;
    CHECK(inside >= 1);  // at least the MAP draw
  }
}

TEST_CASE("shrinkage refuses a singleton candidate set it cannot order") {
  const int G = 9;
  ModelSpec spec = toy_spec(G);
  BlockLayout l = layout(spec);
  Rng rng(16);
  std::vector<double> means(G, 0.0);
  Eigen::MatrixXd draws = scalar_draws(200, means, 0.05, rng);
  Eigen::VectorXd lp = -Eigen::VectorXd::Random(200).cwiseAbs();
  Ellipsoid e0 = fit_ellipsoid(draws.topRows(100), default_radius(G));
  QdaModel q = fit_qda(draws.bottomRows(100), l);
  CHECK_THROWS_AS(shrink_until_tractable(spec, e0, draws.bottomRows(100), lp.tail(100), q,
                                         {0}, 50000, 500, Rng(6)),
                  numerical_error);
}
