#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace gcntsp;

namespace {

TspInstance unit_square() { return TspInstance({{0, 0}, {1, 0}, {1, 1}, {0, 1}}); }

} // namespace

TEST(TourLength, UnitSquarePerimeter) {
    EXPECT_DOUBLE_EQ(tour_length(unit_square(), Tour({0, 1, 2, 3})), 4.0);
}

TEST(TourLength, ScaledThreeFourFiveTriangle) {
    TspInstance tri({{0, 0}, {0.3, 0}, {0.3, 0.4}});
    EXPECT_NEAR(tour_length(tri, Tour({0, 1, 2})), 1.2, 1e-12);
}

TEST(TourLength, MatchesIndependentRecomputation) {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = oracles::random_instance(8, rng);
        std::vector<int> order(8);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const Tour t(order);
        EXPECT_NEAR(tour_length(inst, t), oracles::recompute_length(inst, order), 1e-12);
        EXPECT_NEAR(tour_length(pairwise_distances(inst), t), tour_length(inst, t), 1e-12);
    }
}

TEST(TourLength, InvariantUnderRotationAndReversal) {
    Rng rng(3);
    const auto inst = oracles::random_instance(9, rng);
    std::vector<int> order(9);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const double base = tour_length(inst, Tour(order));
    for (int r = 0; r < 9; ++r) {
        std::rotate(order.begin(), order.begin() + 1, order.end());
        EXPECT_NEAR(tour_length(inst, Tour(order)), base, 1e-12);
    }
    std::reverse(order.begin(), order.end());
    EXPECT_NEAR(tour_length(inst, Tour(order)), base, 1e-12);
}

TEST(TourLength, SizeMismatchIsInvalidArgument) {
    EXPECT_THROW(tour_length(unit_square(), Tour({0, 1, 2})), InvalidArgument);
}

TEST(Tour, RejectsNonPermutations) {
    EXPECT_THROW(Tour({0, 1, 1}), InvalidArgument);
    EXPECT_THROW(Tour({0, 1, 3}), InvalidArgument);
    EXPECT_THROW(Tour({-1, 0, 1}), InvalidArgument);
    EXPECT_NO_THROW(Tour({2, 0, 1}));
}

TEST(Tour, NormalizedStartsAtZeroAndSameCycle) {
    const Tour t({2, 3, 0, 1});
    EXPECT_EQ(t.normalized(), Tour({0, 1, 2, 3}));
    EXPECT_TRUE(t.same_cycle(Tour({0, 3, 2, 1})));
    EXPECT_FALSE(t.same_cycle(Tour({0, 2, 1, 3})));
}

TEST(TspInstance, Validation) {
    EXPECT_THROW(TspInstance({{0, 0}, {1, 1}}), InvalidArgument);
    EXPECT_THROW(TspInstance({{0, 0}, {1, 1}, {1.5, 0}}), InvalidArgument);
    EXPECT_THROW(TspInstance({{0, 0}, {1, 1}, {0, -0.1}}), InvalidArgument);
    EXPECT_NO_THROW(TspInstance({{0, 0}, {1, 1}, {1, 0}}));
}

TEST(PairwiseDistances, DiagonalSymmetryAndSqrtTwo) {
    TspInstance inst({{0, 0}, {1, 1}, {0.5, 0.25}});
    const auto d = pairwise_distances(inst);
    EXPECT_NEAR(d(0, 1), 1.414214, 1e-6);
    Rng rng(1);
    const auto r = oracles::random_instance(12, rng);
    const auto dr = pairwise_distances(r);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(dr(i, i), 0.0);
        for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(dr(i, j), dr(j, i));
    }
}

TEST(KnnIndicator, HandTracedRow) {
    TspInstance inst({{0, 0}, {0.1, 0}, {0.9, 0}});
    const auto ind = knn_indicator(inst, 1);
    EXPECT_EQ(ind(1, 0), 1);
    EXPECT_EQ(ind(1, 2), 0);
    EXPECT_EQ(ind(1, 1), 2);
}

TEST(KnnIndicator, FullNeighbourhood) {
    Rng rng(2);
    const auto inst = oracles::random_instance(7, rng);
    const auto ind = knn_indicator(inst, 6);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j) EXPECT_EQ(ind(i, j), i == j ? 2 : 1);
}

TEST(KnnIndicator, MatchesSortOracle) {
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const auto inst = oracles::random_instance(10, rng);
        const auto ind = knn_indicator(inst, 3);
        const auto oracle = oracles::knn_by_sort(inst, 3);
        for (std::size_t i = 0; i < 10; ++i) {
            std::vector<int> got;
            for (std::size_t j = 0; j < 10; ++j)
                if (ind(i, j) == 1) got.push_back(static_cast<int>(j));
            EXPECT_EQ(got, oracle[i]) << "row " << i;
        }
    }
}

TEST(KnnIndicator, TiesGoToLowerIndex) {
    // Nodes 1 and 2 are equidistant from node 0.
    TspInstance inst({{0.5, 0.5}, {0.5, 0.7}, {0.5, 0.3}, {0.9, 0.9}});
    const auto ind = knn_indicator(inst, 1);
    EXPECT_EQ(ind(0, 1), 1);
    EXPECT_EQ(ind(0, 2), 0);
}

TEST(KnnIndicator, KOutOfRange) {
    EXPECT_THROW(knn_indicator(unit_square(), 0), InvalidArgument);
    EXPECT_THROW(knn_indicator(unit_square(), 4), InvalidArgument);
}

TEST(TourToAdjacency, Triangle) {
    const auto a = tour_to_adjacency(Tour({0, 1, 2}));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(a(i, j), i == j ? 0 : 1);
}

TEST(TourToAdjacency, Square) {
    const auto a = tour_to_adjacency(Tour({0, 1, 2, 3}));
    for (auto [u, v] : {std::pair{0, 1}, {1, 2}, {2, 3}, {3, 0}}) {
        EXPECT_EQ(a(u, v), 1);
        EXPECT_EQ(a(v, u), 1);
    }
    EXPECT_EQ(a(0, 2), 0);
    EXPECT_EQ(a(1, 3), 0);
}

TEST(TourToAdjacency, EveryRowHasDegreeTwo) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> order(11);
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const auto a = tour_to_adjacency(Tour(order));
        for (std::size_t i = 0; i < 11; ++i) {
            int deg = 0;
            for (std::size_t j = 0; j < 11; ++j) {
                deg += a(i, j);
                EXPECT_EQ(a(i, j), a(j, i));
            }
            EXPECT_EQ(deg, 2);
        }
    }
}

TEST(Rng, SameSeedSameStreamAndSubstreamsDiffer) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
    Rng s0 = Rng::substream(42, 0), s1 = Rng::substream(42, 1);
    EXPECT_NE(s0.next(), s1.next());
}

TEST(Rng, BelowStaysInRangeAndUniformInUnitInterval) {
    Rng r(9);
    for (int i = 0; i < 10000; ++i) {
        EXPECT_LT(r.below(7), 7u);
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagatesErrors) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_THROW(parallel_for(10, 3,
                              [](std::size_t i) {
                                  if (i == 5) throw InvalidArgument("boom");
                              }),
                 InvalidArgument);
}
