#include <gtest/gtest.h>

#include <random>

#include "ballistic/discrete_ot.hpp"
#include "ballistic/measures.hpp"

using namespace ballistic;

TEST(Measure, ValidatesWeights) {
    EXPECT_THROW(DiscreteMeasure({{0.0}, {1.0}}, {0.5, 0.6}), Error);
    EXPECT_THROW(DiscreteMeasure({{0.0}, {1.0}}, {1.5, -0.5}), Error);
    EXPECT_THROW(DiscreteMeasure({{0.0}, {1.0, 2.0}}, {0.5, 0.5}), Error);
    EXPECT_NO_THROW(DiscreteMeasure({{0.0}, {1.0}}, {0.5, 0.5}));
}

TEST(PushForward, Identity) {
    auto m = DiscreteMeasure::on_line({0.0, 1.0, 2.5}, {0.2, 0.3, 0.5});
    auto p = push_forward(m, [](const Point& x) { return std::optional<Point>(x); });
    EXPECT_EQ(p, m);
}

TEST(PushForward, Rescaling) {
    auto m = DiscreteMeasure::on_line({0.0, 1.0}, {0.5, 0.5});
    auto p = push_forward(m, [](const Point& x) { return std::optional<Point>(Point{2 * x[0]}); });
    EXPECT_EQ(p, DiscreteMeasure::on_line({0.0, 2.0}, {0.5, 0.5}));
}

TEST(PushForward, ConstantMapMerges) {
    auto m = DiscreteMeasure::on_line({0.0, 1.0}, {0.5, 0.5});
    auto p = push_forward(m, [](const Point&) { return std::optional<Point>(Point{0.0}); });
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p.weight(0), 1.0);
    EXPECT_EQ(p.atom(0)[0], 0.0);
}

TEST(PushForward, UndefinedMapNamesTheAtom) {
    auto m = DiscreteMeasure::on_line({0.0, 1.0}, {0.5, 0.5});
    try {
        push_forward(m, [](const Point& x) -> std::optional<Point> {
            if (x[0] > 0.5) return std::nullopt;
            return x;
        });
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("atom 1"), std::string::npos);
    }
}

TEST(PushForward, PreservesMassAndScalesMoment) {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        auto m = random_measure(rng, 9, 1, -3, 3, SpaceTag::state, true);
        double c = -1.75 + 0.25 * rep;
        auto p = push_forward(m, [&](const Point& x) { return std::optional<Point>(Point{c * x[0]}); });
        double tot = 0.0;
        for (double w : p.weights()) tot += w;
        EXPECT_NEAR(tot, 1.0, 1e-15);
        EXPECT_NEAR(p.first_moment(), std::abs(c) * m.first_moment(), 1e-12);
    }
}

TEST(Moments, DiracMoment) { EXPECT_EQ(DiscreteMeasure::dirac({3.0}).first_moment(), 3.0); }

TEST(Quantile, TwoAtomSteps) {
    auto q = quantile(DiscreteMeasure::on_line({0.0, 1.0}, {0.5, 0.5}));
    EXPECT_EQ(q(0.25), 0.0);
    EXPECT_EQ(q(0.5), 0.0);
    EXPECT_EQ(q(0.75), 1.0);
    EXPECT_EQ(q(1.0), 1.0);
    EXPECT_THROW(quantile(DiscreteMeasure::dirac({0.0, 1.0})), Error);
}

TEST(Quantile, NonDecreasing) {
    std::mt19937_64 rng(3);
    auto q = quantile(random_measure(rng, 11, 1, -2, 2, SpaceTag::state, true));
    double prev = -1e300;
    for (int k = 1; k <= 1000; ++k) {
        double g = q(k / 1000.0);
        EXPECT_GE(g, prev);
        prev = g;
    }
}

// G_nu o F_mu pushes mu to nu when both have n equal weights
TEST(Quantile, MonotoneRearrangement) {
    std::mt19937_64 rng(11);
    auto mu = random_measure(rng, 6, 1, -1, 1);
    auto nu = random_measure(rng, 6, 1, 2, 5);
    auto Qnu = quantile(nu), Qmu = quantile(mu);
    auto p = push_forward(mu, [&](const Point& x) {
        double F = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i)
            if (mu.atom(i)[0] <= x[0]) F += mu.weight(i);
        return std::optional<Point>(Point{Qnu(std::min(F, 1.0))});
    });
    EXPECT_TRUE(p.approx_equal(nu, 1e-14, 1e-12));
    (void)Qmu;
}

TEST(MeasureFile, RoundTripIsBitExact) {
    std::mt19937_64 rng(5);
    auto m = random_measure(rng, 5, 2, -3, 3, SpaceTag::costate, true);
    auto back = from_text(to_text(m));
    EXPECT_EQ(back, m);
    const std::string path = ::testing::TempDir() + "/m.txt";
    to_file(m, path);
    EXPECT_EQ(from_file(path), m);
}

TEST(MeasureFile, MalformedInputsReportLines) {
    EXPECT_THROW(from_text("0.5 1\n"), Error);
    try {
        from_text("# d=1 space=state\n0.5 1\n0.5 x\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
    }
    EXPECT_THROW(from_text("# d=2 space=state\n1 0\n"), Error);
    EXPECT_THROW(from_text("# d=1 space=state\n0.4 0\n"), Error);
}
