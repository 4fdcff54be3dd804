#include <gtest/gtest.h>

#include "critlab/deriv.hpp"
#include "critlab/loci.hpp"
#include "support.hpp"

using namespace critlab;
using namespace testing_support;

namespace {

bool fixed_subset(const LocusSpec& small, const LocusSpec& big) {
  for (std::size_t c = 0; c < small.fixed_mask().size(); ++c) {
    if (small.fixed_mask()[c] && !big.fixed_mask()[c]) return false;
  }
  return true;
}

}  // namespace

TEST(Locus, StarDimensionsOnReferenceNet) {
  const NetworkShape r = net_r();
  const std::map<int, int> expected = {{1, 18}, {2, 18}, {3, 21}};
  for (const auto& [k, dim] : expected) {
    const LocusSpec s = make_locus(r, d0(), LocusKind::star(k));
    EXPECT_EQ(s.free_count(), dim) << k;
    EXPECT_EQ(s.analytic_dimension(), dim) << k;
  }
}

TEST(Locus, CoreDimensions) {
  const NetworkShape r = net_r();
  EXPECT_EQ(make_locus(r, d0(), LocusKind::core({2, 3})).free_count(), 9);
  const LocusSpec deepest = make_locus(r, d0(), LocusKind::core({1, 2, 3}));
  EXPECT_EQ(deepest.free_count(), 0);
  const auto pts = sample_locus(deepest, 1, 0);
  ParamVector expect(r);
  expect.bias(4)[0] = 2.0;
  EXPECT_EQ(pts.front().data(), expect.data());
}

TEST(Locus, FreeCountEqualsAnalyticDimensionEverywhere) {
  for (const auto& widths : std::vector<std::vector<int>>{{2, 3, 3, 3, 1}, {2, 4, 4, 4, 4, 2}, {3, 5, 5, 1}, {1, 2, 5, 3, 2, 4}}) {
    const NetworkShape s(widths);
    const VectorXd bias = VectorXd::Zero(s.output_dim());
    const int l = s.depth();
    for (int k = 1; k < l; ++k) {
      const LocusSpec st(s, LocusKind::star(k), bias, BiasTarget::Mean);
      EXPECT_EQ(st.free_count(), st.analytic_dimension());
      for (int j = k + 1; j < l; ++j) {
        const LocusSpec c(s, LocusKind::core({k, j}), bias, BiasTarget::Mean);
        EXPECT_EQ(c.free_count(), c.analytic_dimension());
      }
    }
  }
}

TEST(Locus, CoreMasksNestInsideStarMasks) {
  const NetworkShape s({2, 4, 4, 4, 4, 2});
  const Dataset d = random_dataset(2, 2, 3, 0);
  for (int i = 1; i <= 4; ++i) {
    const LocusSpec star = make_locus(s, d, LocusKind::star(i));
    for (int j = i + 1; j <= 4; ++j) {
      const LocusSpec pair = make_locus(s, d, LocusKind::core({i, j}));
      EXPECT_TRUE(fixed_subset(star, pair));
      for (int k = j + 1; k <= 4; ++k) {
        EXPECT_TRUE(fixed_subset(pair, make_locus(s, d, LocusKind::core({i, j, k}))));
      }
    }
  }
}

TEST(Locus, IndexValidation) {
  const NetworkShape r = net_r();
  EXPECT_THROW(make_locus(r, d0(), LocusKind::star(0)), ArgumentError);
  EXPECT_THROW(make_locus(r, d0(), LocusKind::star(4)), ArgumentError);
  EXPECT_THROW(make_locus(r, d0(), LocusKind::core({2, 2})), ArgumentError);
  EXPECT_THROW(make_locus(r, d0(), LocusKind::core({})), ArgumentError);
  EXPECT_EQ(make_locus(r, d0(), LocusKind::core({3, 1})).indices(), (std::vector<int>{1, 3}));
}

TEST(Locus, ShallowNetsCarryWarnings) {
  const NetworkShape s({2, 3, 1});
  const Dataset d = random_dataset(2, 1, 2, 0);
  const LocusSpec st = make_locus(s, d, LocusKind::star(1));
  EXPECT_FALSE(st.guaranteed());
  EXPECT_FALSE(st.warnings().empty());
  EXPECT_FALSE(make_locus(NetworkShape({2, 3, 3, 1}), d, LocusKind::core({1, 2})).guaranteed());
  EXPECT_TRUE(make_locus(net_r(), d0(), LocusKind::core({1, 2})).guaranteed());
}

TEST(SampleLocus, DeterministicAndScaleZero) {
  const LocusSpec s = make_locus(net_r(), d0(), LocusKind::star(2));
  const auto a = sample_locus(s, 5, 1);
  const auto b = sample_locus(s, 5, 1);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(a[i].data(), b[i].data());
  for (const auto& p : sample_locus(s, 3, 1, 0.0)) EXPECT_EQ(p.data(), s.base_point().data());
  EXPECT_THROW(sample_locus(s, 0, 1), ArgumentError);
  EXPECT_THROW(sample_locus(s, 1, 1, -1.0), ArgumentError);
}

TEST(SampleLocus, PointsLieOnTheMask) {
  const LocusSpec s = make_locus(net_r(), d0(), LocusKind::core({1, 3}));
  for (const auto& p : sample_locus(s, 20, 4)) {
    EXPECT_EQ(s.residual(p), 0.0);
    EXPECT_EQ(p.bias(4)[0], 2.0);
  }
}

TEST(SampleLocus, StarPointsComputeTheConstantMean) {
  const Dataset d = random_dataset(2, 1, 5, 8);
  const LocusSpec s = make_locus(net_r(), d, LocusKind::star(2));
  const Dataset probes = random_dataset(2, 1, 10, 99);
  for (const auto& p : sample_locus(s, 10, 2)) {
    for (int k = 0; k < probes.size(); ++k) {
      EXPECT_EQ(forward(p, probes.input(k), Activation())[0], d.target_mean()[0]);
    }
  }
}

TEST(SampleLocus, StarPointsAreCritical) {
  const LocusSpec s = make_locus(net_r(), d0(), LocusKind::star(2));
  for (const auto& p : sample_locus(s, 100, 1)) {
    ASSERT_LE(gradient(p, d0(), Activation()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Locus, ProjectAndResidual) {
  const LocusSpec s = make_locus(net_r(), d0(), LocusKind::star(3));
  const ParamVector p = random_params(net_r(), 3);
  const ParamVector q = s.project(p);
  EXPECT_EQ(s.residual(q), 0.0);
  EXPECT_GT(s.residual(p), 0.0);
  for (int c : s.free_coordinates()) EXPECT_EQ(q[c], p[c]);
}

TEST(Dimensions, ReferenceNetTable) {
  const DimensionReport r = dimensions(net_r(), 2);
  EXPECT_EQ(r.param_count, 37);
  EXPECT_EQ(r.param_count_closed_form, 37);
  EXPECT_EQ(r.global_min_dim, 35);
  EXPECT_EQ(r.global_min_closed_form, 35);
  EXPECT_EQ(r.star.at(1), 18);
  EXPECT_EQ(r.star.at(2), 18);
  EXPECT_EQ(r.star.at(3), 21);
  EXPECT_EQ(r.star_max, 21);
  EXPECT_EQ(r.star_closed_form, 18);
  EXPECT_TRUE(r.star_discrepancy());
  EXPECT_EQ(r.core_max, 9);
  EXPECT_EQ(r.core_closed_form, 9);
  EXPECT_FALSE(r.core_discrepancy());
  EXPECT_EQ(r.core_zero_eigs_closed_form, 36);
  EXPECT_EQ(r.core_zero_eigs, 36);
  EXPECT_EQ(r.global_min_zero_eigs, 35);
  EXPECT_EQ(r.other_zero_eigs_bound, 2);
}

TEST(Dimensions, MaxDominatesEntries) {
  const DimensionReport r = dimensions(NetworkShape({2, 4, 4, 4, 4, 2}), 5);
  for (const auto& [k, v] : r.star) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, r.star_max);
  }
  for (const auto& [ij, v] : r.core) {
    EXPECT_GE(v, 0);
    EXPECT_LE(v, *r.core_max);
  }
}

TEST(Dimensions, CoreClosedFormOnlyFromDepthFour) {
  EXPECT_FALSE(dimensions(NetworkShape({2, 3, 3, 1}), 2).core_closed_form.has_value());
  EXPECT_TRUE(dimensions(NetworkShape({2, 3, 3, 3, 1}), 2).core_closed_form.has_value());
  EXPECT_TRUE(dimensions(NetworkShape({2, 4, 4, 4, 1}), 2).core_discrepancy());
}
