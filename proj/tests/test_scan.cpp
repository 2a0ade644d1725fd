#include <gtest/gtest.h>

#include <cmath>

#include "resmamba/ops.hpp"
#include "resmamba/scan.hpp"
#include "support/oracles.hpp"

namespace rmb {
namespace {

using testing::ScanCase;

SSMParams params_from(const ScanCase& s, bool requires_grad = false)
{
    SSMParams p;
    p.delta = Tensor({s.length, s.channels}, s.delta, requires_grad);
    p.a = Tensor({s.channels, s.state}, s.a, requires_grad);
    p.b = Tensor({s.length, s.state}, s.b, requires_grad);
    p.c = Tensor({s.length, s.state}, s.c, requires_grad);
    p.d_skip = Tensor({s.channels}, s.d_skip, requires_grad);
    return p;
}

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

TEST(SelectiveScan, NoDecayDegeneratesToPrefixSum)
{
    ScanCase s{3, 1, 1, {1, 2, 3}, {1, 1, 1}, {-1e-9}, {1, 1, 1}, {1, 1, 1}, {0}};
    for (auto mode : {ScanMode::Sequential, ScanMode::Parallel}) {
        const auto y = vec(selective_scan(Tensor({3, 1}, s.u), params_from(s), mode));
        EXPECT_NEAR(y[0], 1.0, 1e-8);
        EXPECT_NEAR(y[1], 3.0, 1e-8);
        EXPECT_NEAR(y[2], 6.0, 1e-8);
    }
}

TEST(SelectiveScan, ZeroReadoutLeavesSkipPath)
{
    Rng rng(1);
    auto s = testing::random_scan_case(rng, 9, 3, 4);
    std::fill(s.c.begin(), s.c.end(), 0.0);
    const auto y = vec(selective_scan_par(Tensor({9, 3}, s.u), params_from(s)));
    for (std::size_t t = 0; t < 9; ++t)
        for (std::size_t d = 0; d < 3; ++d) EXPECT_DOUBLE_EQ(y[t * 3 + d], s.d_skip[d] * s.u[t * 3 + d]);
}

TEST(SelectiveScan, MatchesPlainLoopRecurrence)
{
    Rng rng(2);
    const auto s = testing::random_scan_case(rng, 16, 2, 4);
    const auto expected = testing::naive_scan(s);
    for (auto mode : {ScanMode::Sequential, ScanMode::Parallel}) {
        const auto y = vec(selective_scan(Tensor({16, 2}, s.u), params_from(s), mode));
        for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], expected[i], 1e-12);
    }
}

TEST(SelectiveScan, SingleStepByHand)
{
    ScanCase s{1, 1, 2, {2.0}, {0.5}, {-1.0, -2.0}, {0.3, -0.4}, {1.5, 0.5}, {0.25}};
    const double h0 = 0.5 * 0.3 * 2.0, h1 = 0.5 * -0.4 * 2.0;
    const double expected = 1.5 * h0 + 0.5 * h1 + 0.25 * 2.0;
    EXPECT_DOUBLE_EQ(selective_scan_par(Tensor({1, 1}, s.u), params_from(s)).item(), expected);
    EXPECT_DOUBLE_EQ(selective_scan_seq(Tensor({1, 1}, s.u), params_from(s)).item(), expected);
}

TEST(SelectiveScan, ParallelMatchesSequentialOnFuzzLengths)
{
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const auto s = testing::random_scan_case(rng, 1 + rng.below(257), 1 + rng.below(4), 1 + rng.below(4));
        const Tensor u({s.length, s.channels}, s.u);
        const auto ys = vec(selective_scan_seq(u, params_from(s)));
        const auto yp = vec(selective_scan_par(u, params_from(s)));
        for (std::size_t k = 0; k < ys.size(); ++k) ASSERT_NEAR(ys[k], yp[k], 1e-10) << "case " << i;
    }
}

TEST(SelectiveScan, BatchedEqualsPerItem)
{
    Rng rng(4);
    const auto s0 = testing::random_scan_case(rng, 7, 2, 3);
    auto s1 = testing::random_scan_case(rng, 7, 2, 3);
    s1.a = s0.a;
    s1.d_skip = s0.d_skip;
    auto cat = [](std::vector<double> a, const std::vector<double>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    SSMParams p;
    p.delta = Tensor({2, 7, 2}, cat(s0.delta, s1.delta));
    p.a = Tensor({2, 3}, s0.a);
    p.b = Tensor({2, 7, 3}, cat(s0.b, s1.b));
    p.c = Tensor({2, 7, 3}, cat(s0.c, s1.c));
    p.d_skip = Tensor({2}, s0.d_skip);
    const auto y = vec(selective_scan_par(Tensor({2, 7, 2}, cat(s0.u, s1.u)), p));
    const auto y0 = testing::naive_scan(s0), y1 = testing::naive_scan(s1);
    for (std::size_t i = 0; i < 14; ++i) {
        EXPECT_NEAR(y[i], y0[i], 1e-12);
        EXPECT_NEAR(y[14 + i], y1[i], 1e-12);
    }
}

TEST(SelectiveScan, NonPositiveDeltaThrows)
{
    Rng rng(5);
    auto s = testing::random_scan_case(rng, 4, 1, 2);
    s.delta[2] = 0.0;
    EXPECT_THROW(selective_scan_par(Tensor({4, 1}, s.u), params_from(s)), std::invalid_argument);
    s.delta[2] = -0.1;
    EXPECT_THROW(selective_scan_seq(Tensor({4, 1}, s.u), params_from(s)), std::invalid_argument);
}

TEST(SelectiveScan, InconsistentShapesThrow)
{
    Rng rng(6);
    const auto s = testing::random_scan_case(rng, 4, 2, 2);
    EXPECT_THROW(selective_scan_par(Tensor({5, 2}, std::vector<double>(10)), params_from(s)), std::invalid_argument);
}

TEST(AffinePrefixScan, MatchesRecurrenceForAllLengths)
{
    Rng rng(7);
    for (std::size_t length = 1; length <= 40; ++length) {
        std::vector<double> a(length * 3), b(length * 3);
        for (auto& v : a) v = rng.uniform(0.0, 1.0);
        for (auto& v : b) v = rng.normal();
        std::vector<double> expected(b.size());
        for (std::size_t k = 0; k < 3; ++k) {
            double h = 0.0;
            for (std::size_t t = 0; t < length; ++t) expected[t * 3 + k] = h = a[t * 3 + k] * h + b[t * 3 + k];
        }
        affine_prefix_scan(a, b, length, 3);
        for (std::size_t i = 0; i < b.size(); ++i) EXPECT_NEAR(b[i], expected[i], 1e-12) << "length " << length;
    }
}

TEST(ScanGradcheck, SmallInstanceWithinTolerance)
{
    for (auto mode : {ScanMode::Sequential, ScanMode::Parallel}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto report = scan_gradcheck(seed, 5, 1, 2, mode);
            EXPECT_LE(report.max, 1e-4) << "seed " << seed;
        }
    }
    const auto wide = scan_gradcheck(99, 9, 3, 4, ScanMode::Parallel);
    EXPECT_LE(wide.max, 1e-4);
    EXPECT_LE(wide.a, 1e-4);
    EXPECT_LE(wide.delta, 1e-4);
}

TEST(ScanGradients, ZeroInputGivesZeroReadoutGradient)
{
    Rng rng(8);
    auto s = testing::random_scan_case(rng, 6, 2, 3);
    std::fill(s.u.begin(), s.u.end(), 0.0);
    const auto p = params_from(s, true);
    const Tensor u({6, 2}, s.u, true);
    sum(selective_scan_par(u, p)).backward();
    for (double g : p.c.grad()) EXPECT_EQ(g, 0.0);
}

TEST(ScanGradients, CausalJacobian)
{
    Rng rng(9);
    const auto s = testing::random_scan_case(rng, 8, 2, 3);
    const auto p = params_from(s);
    for (std::size_t t = 0; t < 8; ++t) {
        const Tensor u({8, 2}, s.u, true);
        const Tensor y = selective_scan_par(u, p);
        std::vector<double> pick(16, 0.0);
        pick[t * 2] = 1.0;
        sum(mul(y, Tensor({8, 2}, pick))).backward();
        for (std::size_t later = t + 1; later < 8; ++later) {
            EXPECT_EQ(u.grad()[later * 2], 0.0);
            EXPECT_EQ(u.grad()[later * 2 + 1], 0.0);
        }
        EXPECT_NE(u.grad()[t * 2], 0.0);
    }
}

TEST(ScanGradients, ParallelAndSequentialBackwardAgree)
{
    Rng rng(10);
    const auto s = testing::random_scan_case(rng, 33, 3, 4);
    const Tensor w = testing::random_tensor(rng, {33, 3});
    std::vector<std::vector<double>> grads[2];
    int slot = 0;
    for (auto mode : {ScanMode::Sequential, ScanMode::Parallel}) {
        const auto p = params_from(s, true);
        const Tensor u({33, 3}, s.u, true);
        sum(mul(selective_scan(u, p, mode), w)).backward();
        for (const Tensor* t : {&u, &p.delta, &p.a, &p.b, &p.c, &p.d_skip})
            grads[slot].emplace_back(t->grad().begin(), t->grad().end());
        ++slot;
    }
    for (std::size_t k = 0; k < grads[0].size(); ++k)
        for (std::size_t i = 0; i < grads[0][k].size(); ++i) EXPECT_NEAR(grads[0][k][i], grads[1][k][i], 1e-10);
}

}  // namespace
}  // namespace rmb
