#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "critlab/fiber.hpp"
#include "critlab/spectral.hpp"
#include "support.hpp"

using namespace critlab;
using namespace testing_support;

TEST(Jacobi, MatchesReferenceSolverAndHasSmallResiduals) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const MatrixXd a = random_matrix(12, 12, seed);
    const MatrixXd h = a + a.transpose();
    const EigenDecomposition e = jacobi_eigen(h);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> ref(h);
    EXPECT_LE((e.values - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12 * h.norm());
    const double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
    for (int i = 0; i < 12; ++i) {
      EXPECT_LE((h * e.vectors.col(i) - e.values[i] * e.vectors.col(i)).norm(), 1e-8 * scale);
    }
    EXPECT_LE((e.vectors.transpose() * e.vectors - MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 1; i < 12; ++i) EXPECT_LE(e.values[i - 1], e.values[i]);
  }
}

TEST(Jacobi, ResidualsOnNetworkHessians) {
  const ParamVector p = random_params(net_r(), 31);
  const MatrixXd h = hessian(p, d0(), Activation());
  const EigenDecomposition e = jacobi_eigen(h);
  const double scale = std::max(1.0, e.values.cwiseAbs().maxCoeff());
  for (int i = 0; i < h.rows(); ++i) {
    EXPECT_LE((h * e.vectors.col(i) - e.values[i] * e.vectors.col(i)).norm(), 1e-8 * scale);
  }
}

TEST(Jacobi, Errors) {
  EXPECT_THROW(jacobi_eigen(MatrixXd::Zero(2, 3)), ShapeError);
  MatrixXd bad = MatrixXd::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(jacobi_eigen(bad), NumericError);
}

TEST(Spectrum, SaddleAndZeroMatrix) {
  const HessianSpectrum s = spectrum(MatrixXd{{2, 0}, {0, -2}});
  EXPECT_EQ(s.zero_count, 0);
  EXPECT_EQ(s.positive_count, 1);
  EXPECT_EQ(s.negative_count, 1);
  EXPECT_EQ(spectrum(MatrixXd::Zero(5, 5)).zero_count, 5);
}

TEST(Spectrum, CountsPartitionAndAreMonotoneInTau) {
  const MatrixXd a = random_matrix(10, 10, 3);
  const VectorXd lambda{{-1e-3, -1e-9, 0.0, 1e-11, 1e-6, 0.5, 2.0, -4.0, 1e-4, 3e-8}};
  const MatrixXd q = random_orthogonal(10, 5);
  const MatrixXd h = q * lambda.asDiagonal() * q.transpose();
  int previous = -1;
  for (double tau : {1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2}) {
    SpectrumOptions opt;
    opt.tau_zero = tau;
    const HessianSpectrum s = spectrum(h, opt);
    EXPECT_EQ(s.zero_count + s.positive_count + s.negative_count, 10);
    EXPECT_GE(s.zero_count, previous);
    previous = s.zero_count;
  }
  (void)a;
}

TEST(Spectrum, CorePointOfReferenceNet) {
  const auto spec = make_locus(net_r(), d0(), LocusKind::core({2, 3}));
  const ParamVector p = sample_locus(spec, 1, 7).front();
  const HessianSpectrum s = spectrum(hessian(p, d0(), Activation()));
  EXPECT_NEAR(s.max(), 4.0, 1e-8);
  EXPECT_EQ(s.zero_count, 36);
  for (int i = 0; i < 36; ++i) EXPECT_LE(std::abs(s.eigenvalues[i]), 1e-8);
}

TEST(Rank, Basics) {
  EXPECT_EQ(rank_of(MatrixXd::Zero(3, 4)).rank, 0);
  EXPECT_EQ(rank_of(phi_matrix(ParamVector(net_r()), d0(), Activation()).augmented).rank, 1);
  const MatrixXd low = random_matrix(6, 2, 1) * random_matrix(2, 5, 2);
  const RankResult r = rank_of(low);
  EXPECT_EQ(r.rank, 2);
  EXPECT_DOUBLE_EQ(r.tau_rank, 6 * std::numeric_limits<double>::epsilon());
  for (int i = 1; i < r.singular_values.size(); ++i) EXPECT_GE(r.singular_values[i - 1], r.singular_values[i]);
}

TEST(Rank, MonotoneInTolerance) {
  const VectorXd s{{1.0, 1e-3, 1e-6, 1e-9, 1e-12}};
  const MatrixXd m = random_orthogonal(5, 1) * s.asDiagonal() * random_orthogonal(5, 2);
  int previous = 6;
  for (double tau : {1e-14, 1e-10, 1e-7, 1e-4, 1e-1}) {
    const int r = rank_of(m, tau).rank;
    EXPECT_LE(r, previous);
    EXPECT_LE(r, 5);
    previous = r;
  }
}

TEST(Rank, InvariantUnderPermutationAndOrthogonalTransforms) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int k = 1 + static_cast<int>(seed % 4);
    const MatrixXd m = random_matrix(7, k, seed) * random_matrix(k, 6, seed + 100);
    const int r = rank_of(m).rank;
    ASSERT_EQ(r, k);
    const MatrixXd u = random_orthogonal(7, seed + 200);
    const MatrixXd v = random_orthogonal(6, seed + 300);
    EXPECT_EQ(rank_of(u * m * v).rank, r);
    Eigen::PermutationMatrix<Eigen::Dynamic> pr(7), pc(6);
    pr.setIdentity();
    pc.setIdentity();
    std::mt19937_64 gen(seed);
    std::shuffle(pr.indices().data(), pr.indices().data() + 7, gen);
    std::shuffle(pc.indices().data(), pc.indices().data() + 6, gen);
    EXPECT_EQ(rank_of(pr * m * pc).rank, r);
    const VectorXd s0 = rank_of(m).singular_values;
    EXPECT_LE((rank_of(u * m * v).singular_values - s0).cwiseAbs().maxCoeff(), 1e-10 * s0[0]);
  }
}

TEST(Rank, FullRankFeaturesOnReferenceData) {
  const FullRankReport r = full_rank_fraction(net_r(), d0(), Activation(), 1000, 3);
  EXPECT_EQ(r.expected_rank, 2);
  EXPECT_EQ(r.full_rank, 1000);
  const Dataset dup(MatrixXd{{1, 1}, {0, 0}}, MatrixXd{{1, 3}});
  EXPECT_THROW(full_rank_fraction(net_r(), dup, Activation(), 10, 0), PreconditionError);
}

TEST(VerifyStar, ReferenceExamples) {
  for (int k = 1; k <= 3; ++k) {
    const StarReport r = verify_star(net_r(), d0(), Activation(), k, 100, 1);
    EXPECT_TRUE(r.pass) << k;
    EXPECT_LE(r.max_grad_inf, 1e-10);
  }
  const NetworkShape minimal({2, 3, 3, 1});
  EXPECT_TRUE(verify_star(minimal, d0(), Activation(), 1, 20, 1).pass);
  EXPECT_TRUE(verify_star(minimal, d0(), Activation(), 2, 20, 1).pass);
}

TEST(VerifyStar, SumTargetFailsWithBiasGradientEight) {
  StarOptions opt;
  opt.bias_target = BiasTarget::Sum;
  const StarReport r = verify_star(net_r(), d0(), Activation(), 3, 10, 1, opt);
  EXPECT_FALSE(r.pass);
  // b_ℓ = Σy = 4 gives dL/db_ℓ = 2(n·Σy − Σy) = 2(8 − 4) = 8 on D0.
  EXPECT_NEAR(r.output_bias_grad_inf, 8.0, 1e-12);
}

TEST(VerifyStar, NeedsDepthThree) {
  EXPECT_THROW(verify_star(NetworkShape({2, 3}), d0(), Activation(), 1, 1, 0), ShapeError);
  EXPECT_THROW(verify_star(NetworkShape({2, 3, 1}), d0(), Activation(), 1, 1, 0), HypothesisError);
}

TEST(VerifyCore, ReferenceAndMultiOutput) {
  const CoreReport r = verify_core(net_r(), d0(), Activation(), {2, 3}, 20, 1);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.expected_copies, 1);
  EXPECT_DOUBLE_EQ(r.expected_eigenvalue, 4.0);
  const NetworkShape two({2, 3, 3, 3, 2});
  const Dataset d = random_dataset(2, 2, 2, 5);
  const CoreReport r2 = verify_core(two, d, Activation(), {2, 3}, 10, 1);
  EXPECT_TRUE(r2.pass);
  for (const auto& s : r2.samples) {
    EXPECT_EQ(s.near_2n_count, 2);
    EXPECT_NEAR(s.top_eigenvalues[0], 4.0, 1e-9);
    EXPECT_NEAR(s.top_eigenvalues[1], 4.0, 1e-9);
  }
}

TEST(VerifyCore, ZeroCountIsStableAcrossTauSweep) {
  const auto spec = make_locus(net_r(), d0(), LocusKind::core({1, 2}));
  const ParamVector p = sample_locus(spec, 1, 9).front();
  const VectorXd values = jacobi_eigen(hessian(p, d0(), Activation())).values;
  for (double tau : {1e-12, 1e-10, 1e-8, 1e-6, 1e-4}) {
    SpectrumOptions opt;
    opt.tau_zero = tau;
    EXPECT_EQ(classify_spectrum(values, opt).zero_count, 36) << tau;
  }
}

TEST(VerifyCore, Hypotheses) {
  EXPECT_THROW(verify_core(NetworkShape({2, 3, 3, 1}), d0(), Activation(), {1, 2}, 1, 0), HypothesisError);
  EXPECT_THROW(verify_core(net_r(), d0(), Activation(), {2}, 1, 0), ArgumentError);
}

TEST(ZeroEig, CorePointBounds) {
  const auto spec = make_locus(net_r(), d0(), LocusKind::core({2, 3}));
  const ZeroEigReport z = zero_eig_bound_check(sample_locus(spec, 1, 2).front(), d0(), Activation());
  EXPECT_EQ(z.spectrum.zero_count, 36);
  EXPECT_EQ(z.rank_phi, 0);
  EXPECT_EQ(z.rank_phi_hat, 1);
  EXPECT_EQ(z.bound_r, 4);
  EXPECT_EQ(z.bound_r_hat, 3);
  EXPECT_EQ(z.uniform_bound, 2);
  EXPECT_TRUE(z.satisfied && z.satisfied_r && z.satisfied_uniform);
}

TEST(ZeroEig, GlobalMinimumHasManyZeros) {
  // Solve the last layer exactly on a full-rank slice.
  const ParamVector p = random_params(net_r(), 5);
  const FiberQuadratic fq = build_fiber(p, d0(), Activation());
  const FiberMinimum m = fiber_minimize(fq);
  const ParamVector g = fq.with_final_layer(m.layer);
  const ZeroEigReport z = zero_eig_bound_check(g, d0(), Activation());
  EXPECT_GE(z.spectrum.zero_count, 35);
  EXPECT_TRUE(z.satisfied_uniform);
}

TEST(ZeroEig, RejectsNonCriticalPoints) {
  EXPECT_THROW(zero_eig_bound_check(random_params(net_r(), 1), d0(), Activation()), NotCriticalError);
}
