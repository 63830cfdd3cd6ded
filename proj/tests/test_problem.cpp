#include "dhpr/problem.hpp"

#include <gtest/gtest.h>

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <set>

#include "dhpr/bundle.hpp"
#include "dhpr/eigensolve.hpp"
#include "dhpr/libsvm.hpp"

namespace {

namespace fs = std::filesystem;

TEST(LambdaMax, FrozenExamples) {
  EXPECT_NEAR(dhpr::lambda_max_AAT(Eigen::MatrixXd::Identity(3, 3)),
              1.0 + 1e-6, 1e-12);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 2.0;
  EXPECT_NEAR(dhpr::lambda_max_AAT(d), 4.0 * (1.0 + 1e-6), 4e-11);
  EXPECT_THROW(dhpr::lambda_max_AAT(Eigen::MatrixXd::Zero(3, 2)),
               std::invalid_argument);
}

TEST(LambdaMax, MatchesJacobiEigensolve) {
  dhpr::CounterRng rng(31);
  Eigen::MatrixXd a(10, 20);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 20; ++c) a(r, c) = rng.normal();
  const double lam = dhpr::lambda_max_AAT(a);
  const auto es = dhpr::jacobi_eigensystem(Eigen::MatrixXd(a * a.transpose()));
  const double exact = es.values[es.values.size() - 1];
  EXPECT_NEAR(lam, exact * (1.0 + 1e-6), 1e-6 * exact);
  EXPECT_GE(lam, exact);  // the inflation's whole point
}

TEST(GenRegression, NoiselessAndReproducible) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kLine, 4, 1.0, 0);
  const auto prob = dhpr::gen_regression(4, 6, 10, 0.0, dhpr::RegularizerKind::kL1, g, 7);
  ASSERT_EQ(prob.n_agents(), 4);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(10);
  for (const auto& ag : prob.agents) {
    EXPECT_EQ((ag.A * ones - ag.loss.b).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_DOUBLE_EQ(ag.reg.theta1, dhpr::default_theta(ag.A, ag.loss.b));
  }
  const auto again = dhpr::gen_regression(4, 6, 10, 0.0, dhpr::RegularizerKind::kL1, g, 7);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ((prob.agents[i].A - again.agents[i].A).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ(prob.agents[i].lambda_A, again.agents[i].lambda_A);
  }
}

TEST(GenRegression, GroupStructure) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kComplete, 3, 1.0, 0);
  const auto prob = dhpr::gen_regression(3, 5, 50, 1e-2,
                                         dhpr::RegularizerKind::kSparseGroup, g, 11);
  const auto& reg = prob.agents[0].reg;
  EXPECT_EQ(reg.groups.size(), 5u);  // round(50/10)
  int covered = 0;
  int expect_start = 0;
  for (std::size_t l = 0; l < reg.groups.size(); ++l) {
    ASSERT_FALSE(reg.groups[l].empty());
    EXPECT_EQ(reg.groups[l].front(), expect_start);  // contiguous blocks
    for (std::size_t q = 1; q < reg.groups[l].size(); ++q)
      EXPECT_EQ(reg.groups[l][q], reg.groups[l][q - 1] + 1);
    expect_start = reg.groups[l].back() + 1;
    covered += static_cast<int>(reg.groups[l].size());
    EXPECT_DOUBLE_EQ(reg.group_weights[l],
                     std::sqrt(static_cast<double>(reg.groups[l].size())));
  }
  EXPECT_EQ(covered, 50);
  // Groups coincide across agents; thetas are per-agent.
  for (const auto& ag : prob.agents) {
    EXPECT_EQ(ag.reg.groups, reg.groups);
    EXPECT_DOUBLE_EQ(ag.reg.theta1, ag.reg.theta2);
  }
}

TEST(GenRegression, RayleighBound) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kLine, 3, 1.0, 0);
  const auto prob = dhpr::gen_regression(3, 8, 12, 1e-2, dhpr::RegularizerKind::kL1, g, 3);
  dhpr::CounterRng rng(5);
  for (const auto& ag : prob.agents)
    for (int probe = 0; probe < 100; ++probe) {
      Eigen::VectorXd v(12);
      for (int c = 0; c < 12; ++c) v[c] = rng.normal();
      EXPECT_LE((ag.A * v).squaredNorm(), ag.lambda_A * v.squaredNorm());
    }
}

TEST(GenLogistic, LabelsBalancedAndBounded) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kComplete, 4, 1.0, 0);
  for (int m : {6, 7}) {
    const auto prob = dhpr::gen_logistic(4, m, 9, g, 13);
    for (const auto& ag : prob.agents) {
      int pos = 0, neg = 0;
      for (int r = 0; r < m; ++r) {
        ASSERT_TRUE(ag.loss.b[r] == 1.0 || ag.loss.b[r] == -1.0);
        (ag.loss.b[r] > 0 ? pos : neg) += 1;
      }
      EXPECT_LE(std::abs(pos - neg), 1);
    }
  }
}

TEST(GenLogistic, RayleighSpotCheck) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kLine, 2, 1.0, 0);
  const auto prob = dhpr::gen_logistic(2, 20, 15, g, 1);
  dhpr::CounterRng rng(2);
  for (const auto& ag : prob.agents)
    for (int probe = 0; probe < 100; ++probe) {
      Eigen::VectorXd v(15);
      for (int c = 0; c < 15; ++c) v[c] = rng.normal();
      EXPECT_LE((ag.A * v).squaredNorm(), ag.lambda_A * v.squaredNorm());
    }
}

TEST(Partition, SizesAndUnion) {
  dhpr::Dataset data;
  data.features.resize(10, 2);
  data.labels.resize(10);
  for (int r = 0; r < 10; ++r) {
    data.features(r, 0) = r;
    data.features(r, 1) = -r;
    data.labels[r] = r;
  }
  const auto parts = dhpr::partition(data, 3, 99);
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[0].size(), 4);
  EXPECT_EQ(parts[1].size(), 3);
  EXPECT_EQ(parts[2].size(), 3);
  std::set<double> seen;
  for (const auto& part : parts)
    for (int r = 0; r < part.size(); ++r) {
      seen.insert(part.labels[r]);
      EXPECT_EQ(part.features(r, 0), part.labels[r]);
    }
  EXPECT_EQ(seen.size(), 10u);
  const auto same = dhpr::partition(data, 3, 99);
  for (int i = 0; i < 3; ++i)
    EXPECT_EQ((parts[i].labels - same[i].labels).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_THROW(dhpr::partition(data, 11, 0), std::invalid_argument);
}

TEST(Libsvm, ParsesReferenceSnippet) {
  const auto path = fs::path(::testing::TempDir()) / "snippet.libsvm";
  std::ofstream(path) << "+1 1:0.5 3:2\n-1 2:1\n";
  const auto data = dhpr::load_libsvm(path.string());
  ASSERT_EQ(data.features.rows(), 2);
  ASSERT_EQ(data.features.cols(), 3);
  Eigen::MatrixXd expect(2, 3);
  expect << 0.5, 0, 2, 0, 1, 0;
  EXPECT_EQ((data.features - expect).lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ(data.labels[0], 1.0);
  EXPECT_EQ(data.labels[1], -1.0);
}

TEST(Libsvm, ErrorsNameTheLine) {
  const auto dir = fs::path(::testing::TempDir());
  const auto empty = dir / "empty.libsvm";
  std::ofstream(empty) << "";
  EXPECT_THROW(dhpr::load_libsvm(empty.string()), std::runtime_error);

  const auto bad = dir / "bad.libsvm";
  std::ofstream(bad) << "1 2:a\n";
  try {
    dhpr::load_libsvm(bad.string());
    FAIL() << "expected parse error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos);
  }

  const auto mono = dir / "mono.libsvm";
  std::ofstream(mono) << "1 1:1 2:2\n-1 3:1 3:2\n";
  try {
    dhpr::load_libsvm(mono.string());
    FAIL() << "expected monotonicity error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }

  EXPECT_THROW(dhpr::load_libsvm((dir / "missing.libsvm").string()),
               std::runtime_error);
}

TEST(Libsvm, ColumnScaling) {
  dhpr::Dataset data;
  data.features.resize(2, 3);
  data.features << 2.0, 0.0, -8.0, -4.0, 0.0, 2.0;
  data.labels.resize(2);
  data.labels << 1.0, -1.0;
  dhpr::scale_columns_to_unit(data);
  EXPECT_DOUBLE_EQ(data.features(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(data.features(1, 0), -1.0);
  EXPECT_DOUBLE_EQ(data.features(0, 1), 0.0);  // zero column untouched
  EXPECT_DOUBLE_EQ(data.features(0, 2), -1.0);
  EXPECT_DOUBLE_EQ(data.features(1, 2), 0.25);
}

TEST(Bundle, ExactRoundTrip) {
  const auto g = dhpr::make_graph(dhpr::TopologyKind::kRandom, 3, 0.8, 5);
  const auto prob = dhpr::gen_regression(3, 4, 7, 1e-2,
                                         dhpr::RegularizerKind::kSparseGroup, g, 21);
  const auto dir = (fs::path(::testing::TempDir()) / "bundle_rt").string();
  dhpr::save_problem(prob, dir);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "problem.json"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "agent_1.csv"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "agent_3.csv"));

  const auto back = dhpr::load_problem(dir);
  ASSERT_EQ(back.n_agents(), 3);
  EXPECT_EQ(back.p, prob.p);
  EXPECT_EQ((back.graph.weights - prob.graph.weights).lpNorm<Eigen::Infinity>(), 0.0);
  for (int i = 0; i < 3; ++i) {
    const auto& a = prob.agents[i];
    const auto& b = back.agents[i];
    EXPECT_EQ((a.A - b.A).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ((a.loss.b - b.loss.b).lpNorm<Eigen::Infinity>(), 0.0);
    EXPECT_EQ(a.loss.kind, b.loss.kind);
    EXPECT_EQ(a.lambda_A, b.lambda_A);
    EXPECT_EQ(a.reg.groups, b.reg.groups);
    EXPECT_EQ(a.reg.theta1, b.reg.theta1);
    EXPECT_EQ(a.reg.theta2, b.reg.theta2);
  }
}

TEST(Bundle, ZeroLossAgentRoundTrip) {
  dhpr::DistributedProblem prob;
  prob.p = 4;
  prob.graph = dhpr::make_graph(dhpr::TopologyKind::kLine, 2, 1.0, 0);
  dhpr::LossSpec zero;
  zero.kind = dhpr::LossKind::kZero;
  prob.agents.push_back(dhpr::make_agent(Eigen::MatrixXd::Zero(0, 4), zero,
                                         dhpr::RegularizerSpec::l1(0.3)));
  dhpr::LossSpec ls;
  ls.kind = dhpr::LossKind::kLeastSquares;
  ls.b = Eigen::VectorXd::Ones(2);
  prob.agents.push_back(dhpr::make_agent(Eigen::MatrixXd::Identity(2, 4).eval(), ls,
                                         dhpr::RegularizerSpec::l1(0.1)));
  prob.validate();
  const auto dir = (fs::path(::testing::TempDir()) / "bundle_zero").string();
  dhpr::save_problem(prob, dir);
  const auto back = dhpr::load_problem(dir);
  EXPECT_EQ(back.agents[0].m(), 0);
  EXPECT_EQ(back.agents[0].loss.kind, dhpr::LossKind::kZero);
  EXPECT_EQ(back.agents[1].m(), 2);
}

}  // namespace
