#include "microgrid/lmi.h"

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "microgrid/errors.h"
#include "test_scenarios.h"

namespace microgrid {
namespace {

using testing::IdentifyFor;
using testing::LinearMarket;
using testing::ProblemFor;
using testing::SymmetricBox;

bool NegativeDefinite(const Matrix8d& m) {
  Eigen::LLT<Matrix8d> llt(-m);
  return llt.info() == Eigen::Success;
}

LmiProblem SingleRule(const Eigen::Matrix3d& A, double gamma_sq = 2.0) {
  return LmiProblem::From({A}, assemble_system_matrices(MarketParams{}), gamma_sq);
}

// Linear-market rule base and a solution of it, shared by several tests.
class LinearRuleBaseTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    model_ = new IdentifiedModel(IdentifyFor(LinearMarket(), SymmetricBox(), 3));
    problem_ = new LmiProblem(ProblemFor(*model_, LinearMarket(), 2.0));
    auto result = solve_feasibility(*problem_, 1e-6, 1e-8);
    ASSERT_TRUE(std::holds_alternative<LmiSolution>(result));
    solution_ = new LmiSolution(std::get<LmiSolution>(result));
  }
  static void TearDownTestSuite() {
    delete solution_;
    delete problem_;
    delete model_;
  }
  static IdentifiedModel* model_;
  static LmiProblem* problem_;
  static LmiSolution* solution_;
};

IdentifiedModel* LinearRuleBaseTest::model_ = nullptr;
LmiProblem* LinearRuleBaseTest::problem_ = nullptr;
LmiSolution* LinearRuleBaseTest::solution_ = nullptr;

GTEST_TEST(AssembleRuleLmiTest, SymmetricEightByEight) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Eigen::Matrix3d A, Q;
  for (int i = 0; i < 9; ++i) A(i / 3, i % 3) = n(rng);
  for (int i = 0; i < 9; ++i) Q(i / 3, i % 3) = n(rng);
  Q = Q * Q.transpose() + Eigen::Matrix3d::Identity();
  const Eigen::RowVector3d Y(n(rng), n(rng), n(rng));
  const Matrix8d m = assemble_rule_lmi(SingleRule(A), 0, Q, Y);
  EXPECT_EQ(m, m.transpose());
  EXPECT_EQ((m.block<3, 3>(3, 3)), (-2.0 * Eigen::Matrix3d::Identity()).eval());
  EXPECT_EQ((m.block<2, 2>(6, 6)), (-Eigen::Matrix2d::Identity()).eval());
}

GTEST_TEST(AssembleRuleLmiTest, StableRuleWithIdentityQ) {
  const Matrix8d m = assemble_rule_lmi(SingleRule(-10.0 * Eigen::Matrix3d::Identity()), 0,
                                       Eigen::Matrix3d::Identity(), Eigen::RowVector3d::Zero());
  EXPECT_TRUE(NegativeDefinite(m));
  EXPECT_LT(max_eigenvalue(m), 0.0);
}

GTEST_TEST(AssembleRuleLmiTest, UnstableRuleIsNotNegative) {
  const Matrix8d m = assemble_rule_lmi(SingleRule(Eigen::Matrix3d::Identity()), 0,
                                       Eigen::Matrix3d::Identity(), Eigen::RowVector3d::Zero());
  EXPECT_EQ((m.block<3, 3>(0, 0)), (2.0 * Eigen::Matrix3d::Identity()).eval());
  EXPECT_FALSE(NegativeDefinite(m));
}

GTEST_TEST(AssembleRuleLmiTest, BadRuleIndex) {
  const LmiProblem p = SingleRule(Eigen::Matrix3d::Identity());
  EXPECT_THROW(assemble_rule_lmi(p, 1, Eigen::Matrix3d::Identity(), Eigen::RowVector3d::Zero()),
               AssemblyError);
}

GTEST_TEST(SolveFeasibilityTest, SingleStableRule) {
  const auto result =
      solve_feasibility(SingleRule(-10.0 * Eigen::Matrix3d::Identity()), 1e-6, 1e-8);
  ASSERT_TRUE(std::holds_alternative<LmiSolution>(result));
  const auto& s = std::get<LmiSolution>(result);
  EXPECT_GE(s.q_margin, 1e-6);
  ASSERT_EQ(s.block_margins.size(), 1u);
  EXPECT_LE(s.block_margins[0], -1e-6);
  EXPECT_DOUBLE_EQ(s.gamma, std::sqrt(2.0));
}

GTEST_TEST(SolveFeasibilityTest, RejectsBadArguments) {
  const LmiProblem p = SingleRule(-Eigen::Matrix3d::Identity());
  EXPECT_THROW(solve_feasibility(p, 0.0, 1e-8), ParameterError);
  EXPECT_THROW(solve_feasibility(p, 1e-6, -1.0), ParameterError);
  LmiProblem empty = p;
  empty.rule_matrices.clear();
  EXPECT_THROW(solve_feasibility(empty, 1e-6, 1e-8), AssemblyError);
}

GTEST_TEST(SolveFeasibilityTest, TinyGammaIsInfeasible) {
  const IdentifiedModel model = IdentifyFor(LinearMarket(), SymmetricBox(), 3);
  const auto result = solve_feasibility(ProblemFor(model, LinearMarket(), 1e-8), 1e-6, 1e-8);
  ASSERT_TRUE(std::holds_alternative<Infeasible>(result));
  const auto& bad = std::get<Infeasible>(result);
  EXPECT_FALSE(bad.reason.empty());
  EXPECT_EQ(bad.block_margins.size(), 64u);
}

// The offset-bearing reference market: its rule base admits no common
// certificate, and the solver must say so with a positive shift bound.
GTEST_TEST(SolveFeasibilityTest, ReferenceRuleBaseReportsBound) {
  const IdentifiedModel model = IdentifyFor(MarketParams{}, FuzzyBox{}, 1);
  const auto result = solve_feasibility(ProblemFor(model, MarketParams{}, 2.0), 1e-6, 1e-8);
  ASSERT_TRUE(std::holds_alternative<Infeasible>(result));
  const auto& bad = std::get<Infeasible>(result);
  EXPECT_GT(bad.stats.lower_bound, 0.0);
  EXPECT_EQ(bad.block_margins.size(), 64u);
  EXPECT_EQ(bad.Y.size(), 64u);
}

TEST_F(LinearRuleBaseTest, CertificateHolds) {
  EXPECT_GE(solution_->q_margin, 1e-6);
  for (int m = 0; m < problem_->rule_count(); ++m) {
    const Matrix8d block = assemble_rule_lmi(*problem_, m, solution_->Q, solution_->Y[m]);
    EXPECT_LE(max_eigenvalue(block), -1e-6);
    EXPECT_DOUBLE_EQ(max_eigenvalue(block), solution_->block_margins[m]);
  }
}

TEST_F(LinearRuleBaseTest, DeterministicSolve) {
  const auto again = solve_feasibility(*problem_, 1e-6, 1e-8);
  ASSERT_TRUE(std::holds_alternative<LmiSolution>(again));
  EXPECT_EQ(std::get<LmiSolution>(again).Q, solution_->Q);
}

TEST_F(LinearRuleBaseTest, MonotoneInGamma) {
  for (double gamma_sq : {2.5, 4.0, 10.0}) {
    LmiProblem wider = *problem_;
    wider.gamma_sq = gamma_sq;
    EXPECT_TRUE(std::holds_alternative<LmiSolution>(solve_feasibility(wider, 1e-6, 1e-8)))
        << "gamma^2 = " << gamma_sq;
  }
}

TEST_F(LinearRuleBaseTest, GainRoundTrip) {
  const GainSet gains = recover_gains(*solution_);
  ASSERT_EQ(gains.K.size(), 64u);
  for (std::size_t m = 0; m < gains.K.size(); ++m) {
    EXPECT_TRUE(gains.K[m].allFinite());
    EXPECT_LT((gains.K[m] * solution_->Q - solution_->Y[m]).cwiseAbs().maxCoeff(),
              1e-10 * std::max(1.0, solution_->Y[m].cwiseAbs().maxCoeff()));
  }
}

TEST_F(LinearRuleBaseTest, CongruenceEquivalence) {
  const GainSet gains = recover_gains(*solution_);
  const Eigen::Matrix3d P = solution_->Q.inverse();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int m = 0; m < problem_->rule_count(); ++m) {
    const bool q_form = max_eigenvalue(assemble_rule_lmi(*problem_, m, solution_->Q,
                                                         solution_->Y[m])) < 0.0;
    const bool p_form = max_eigenvalue(assemble_p_form_lmi(*problem_, m, P, gains.K[m])) < 0.0;
    EXPECT_TRUE(q_form);
    EXPECT_EQ(q_form, p_form);
    // Corrupted gains: both forms must still agree.
    const Eigen::RowVector3d Kbad = gains.K[m] + Eigen::RowVector3d(n(rng), n(rng), n(rng));
    const bool q_bad =
        max_eigenvalue(assemble_rule_lmi(*problem_, m, solution_->Q, Kbad * solution_->Q)) < 0.0;
    const bool p_bad = max_eigenvalue(assemble_p_form_lmi(*problem_, m, P, Kbad)) < 0.0;
    EXPECT_EQ(q_bad, p_bad);
  }
}

TEST_F(LinearRuleBaseTest, VerifySolution) {
  const GainSet gains = recover_gains(*solution_);
  const VerificationReport report =
      verify_solution(*problem_, gains, solution_->Q, 10000, 7, SymmetricBox());
  EXPECT_TRUE(report.feasible());
  EXPECT_EQ(report.samples_used, 10000);
  EXPECT_LT(report.phi_sample_max, 0.0);
  EXPECT_LT((report.p_matrix * solution_->Q - Eigen::Matrix3d::Identity()).norm(), 1e-8);
  for (double margin : report.p_form_margins) EXPECT_LT(margin, 0.0);
  const VerificationReport again =
      verify_solution(*problem_, gains, solution_->Q, 10000, 7, SymmetricBox());
  EXPECT_EQ(report.phi_sample_max, again.phi_sample_max);
}

TEST_F(LinearRuleBaseTest, PhiNegativeAtRandomPoints) {
  const GainSet gains = recover_gains(*solution_);
  const Eigen::Matrix3d P = solution_->Q.inverse();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::uniform_real_distribution<double> uw(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const MarketState x{u(rng), u(rng), u(rng)};
    const Disturbance w{uw(rng), uw(rng), uw(rng)};
    EXPECT_LT(phi_quadratic_form(*problem_, gains, P, x, w, SymmetricBox()), 0.0);
  }
}

TEST_F(LinearRuleBaseTest, ZeroGainsOnUnstableRulesFail) {
  LmiProblem unstable = *problem_;
  for (auto& A : unstable.rule_matrices) A += 3.0 * Eigen::Matrix3d::Identity();
  GainSet zero;
  zero.K.assign(64, Eigen::RowVector3d::Zero());
  const VerificationReport report =
      verify_solution(unstable, zero, solution_->Q, 100, 1, SymmetricBox());
  EXPECT_FALSE(report.feasible());
  EXPECT_GE(*std::max_element(report.p_form_margins.begin(), report.p_form_margins.end()), 0.0);
}

GTEST_TEST(MinimizeGammaTest, LinearRuleBase) {
  const IdentifiedModel model = IdentifyFor(LinearMarket(), SymmetricBox(), 3);
  const LmiProblem problem = ProblemFor(model, LinearMarket(), 2.0);
  const GammaSearchResult r = minimize_gamma(problem, 0.1, std::sqrt(2.0), 1e-3, 1e-6, 1e-8);
  EXPECT_LE(r.gamma_best, std::sqrt(2.0));
  EXPECT_GT(r.gamma_best, 0.1);
  EXPECT_DOUBLE_EQ(r.solution.gamma, r.gamma_best);
  LmiProblem at_best = problem;
  at_best.gamma_sq = r.gamma_best * r.gamma_best;
  for (int m = 0; m < problem.rule_count(); ++m) {
    EXPECT_LE(max_eigenvalue(assemble_rule_lmi(at_best, m, r.solution.Q, r.solution.Y[m])),
              -1e-6);
  }
  // Just below the reported value the problem is infeasible (within bisect_tol).
  LmiProblem below = problem;
  below.gamma_sq = std::pow(r.gamma_best - 2e-3, 2);
  EXPECT_TRUE(std::holds_alternative<Infeasible>(solve_feasibility(below, 1e-6, 1e-8)));
}

GTEST_TEST(MinimizeGammaTest, FeasibleLowerEnd) {
  const IdentifiedModel model = IdentifyFor(LinearMarket(), SymmetricBox(), 3);
  const LmiProblem problem = ProblemFor(model, LinearMarket(), 2.0);
  const GammaSearchResult r = minimize_gamma(problem, 1.5, 3.0, 1e-3, 1e-6, 1e-8);
  EXPECT_DOUBLE_EQ(r.gamma_best, 1.5);
  EXPECT_EQ(r.feasibility_calls, 2);
}

GTEST_TEST(MinimizeGammaTest, InfeasibleUpperEnd) {
  const IdentifiedModel model = IdentifyFor(LinearMarket(), SymmetricBox(), 3);
  const LmiProblem problem = ProblemFor(model, LinearMarket(), 2.0);
  EXPECT_THROW(minimize_gamma(problem, 0.01, 0.02, 1e-3, 1e-6, 1e-8), BracketError);
  EXPECT_THROW(minimize_gamma(problem, 2.0, 1.0, 1e-3, 1e-6, 1e-8), BracketError);
}

GTEST_TEST(RecoverGainsTest, ScalarCases) {
  LmiSolution s;
  s.Q = Eigen::Matrix3d::Identity();
  s.Y = {Eigen::RowVector3d(1.0, -2.0, 3.5)};
  EXPECT_EQ(recover_gains(s).K[0], s.Y[0]);
  s.Q = 2.0 * Eigen::Matrix3d::Identity();
  s.Y = {Eigen::RowVector3d(2.0, 4.0, 6.0)};
  EXPECT_LT((recover_gains(s).K[0] - Eigen::RowVector3d(1.0, 2.0, 3.0)).norm(), 1e-15);
}

GTEST_TEST(RecoverGainsTest, IllConditionedQ) {
  LmiSolution s;
  s.Q = Eigen::Vector3d(1.0, 1.0, 1e-12).asDiagonal();
  s.Y = {Eigen::RowVector3d::Ones()};
  EXPECT_THROW(recover_gains(s), ConditioningError);
  s.Q = -Eigen::Matrix3d::Identity();
  EXPECT_THROW(recover_gains(s), ConditioningError);
}

GTEST_TEST(PhiQuadraticFormTest, OriginAndHomogeneity) {
  const MarketParams params = LinearMarket();
  const FuzzyBox box = SymmetricBox();
  Eigen::Matrix3d A = assemble_system_matrices(params).A;
  const LmiProblem problem =
      LmiProblem::From(std::vector<Eigen::Matrix3d>(64, A), assemble_system_matrices(params), 2.0);
  GainSet gains;
  gains.K.assign(64, Eigen::RowVector3d(-0.3, 0.4, -2.0));
  Eigen::Matrix3d P;
  P << 2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0;
  EXPECT_EQ(phi_quadratic_form(problem, gains, P, {}, {}, box), 0.0);

  const MarketState x{1.0, -2.0, 0.5};
  const Disturbance w{0.2, -0.1, 0.4};
  const double base = phi_quadratic_form(problem, gains, P, x, w, box);
  for (double c : {0.5, 3.0, -2.0}) {
    const MarketState cx = MarketState::FromVector(c * x.vector());
    const Disturbance cw = Disturbance::FromVector(c * w.vector());
    EXPECT_NEAR(phi_quadratic_form(problem, gains, P, cx, cw, box), c * c * base,
                1e-10 * std::abs(c * c * base));
  }
}

GTEST_TEST(PhiQuadraticFormTest, MatchesDissipationIdentity) {
  // Single rule: the form equals V' + z'z - gamma^2 w'w with V = x'Px along
  // x' = (A + tau K) x + B w and z = (C + D K) x.
  const MarketParams params = LinearMarket();
  const SystemMatrices sys = assemble_system_matrices(params);
  FuzzyBox box;
  for (auto& axis : box.axes) axis = AxisPartition(-1.0, 1.0, 1);
  const LmiProblem problem = LmiProblem::From({sys.A}, sys, 2.0);
  GainSet gains;
  gains.K = {Eigen::RowVector3d(0.1, -0.2, 0.3)};
  const Eigen::Matrix3d P = Eigen::Vector3d(1.0, 2.0, 3.0).asDiagonal();
  const Eigen::Vector3d x(0.4, -0.7, 1.1);
  const Eigen::Vector3d w(0.3, 0.2, -0.5);
  const Eigen::Vector3d xdot = (sys.A + sys.tau * gains.K[0]) * x + sys.B * w;
  const Eigen::Vector2d z = (sys.C + sys.D * gains.K[0]) * x;
  const double expected = 2.0 * x.dot(P * xdot) + z.squaredNorm() - 2.0 * w.squaredNorm();
  EXPECT_NEAR(phi_quadratic_form(problem, gains, P, MarketState::FromVector(x),
                                 Disturbance::FromVector(w), box),
              expected, 1e-12);
}

}  // namespace
}  // namespace microgrid
