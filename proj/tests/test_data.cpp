#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace gcntsp;

namespace {

std::string serialize(const Dataset& ds) {
    std::ostringstream out;
    write_dataset(ds, out);
    return out.str();
}

GenerateOptions small_options(std::size_t n, std::size_t count, std::uint64_t seed) {
    GenerateOptions opt;
    opt.n = n;
    opt.count = count;
    opt.seed = seed;
    opt.solver = ReferenceSolver::held_karp;
    return opt;
}

} // namespace

TEST(GenerateInstance, DeterministicAndInsideUnitSquare) {
    Rng a(11), b(11);
    const auto x = generate_instance(10, a);
    const auto y = generate_instance(10, b);
    EXPECT_EQ(x, y);
    for (const auto& p : x.points()) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LE(p.x, 1.0);
        EXPECT_GE(p.y, 0.0);
        EXPECT_LE(p.y, 1.0);
    }
}

TEST(GenerateInstance, CoordinateMeansNearHalf) {
    Rng rng(2024);
    double sx = 0.0, sy = 0.0;
    const int count = 10000;
    for (int i = 0; i < count; ++i) {
        const auto inst = generate_instance(10, rng);
        for (const auto& p : inst.points()) {
            sx += p.x;
            sy += p.y;
        }
    }
    const double mx = sx / (count * 10.0), my = sy / (count * 10.0);
    EXPECT_GE(mx, 0.49);
    EXPECT_LE(mx, 0.51);
    EXPECT_GE(my, 0.49);
    EXPECT_LE(my, 0.51);
}

TEST(GenerateInstance, RejectsTinyN) {
    Rng rng(0);
    EXPECT_THROW(generate_instance(2, rng), InvalidArgument);
}

TEST(GenerateDataset, ByteIdenticalAcrossCallsAndThreadCounts) {
    auto opt = small_options(9, 40, 3);
    const std::string first = serialize(generate_dataset(opt));
    EXPECT_EQ(first, serialize(generate_dataset(opt)));
    opt.threads = 4;
    EXPECT_EQ(first, serialize(generate_dataset(opt)));
}

TEST(GenerateDataset, ToursAreOptimal) {
    const Dataset ds = generate_dataset(small_options(7, 30, 9));
    for (const auto& r : ds.records)
        EXPECT_NEAR(tour_length(r.instance, r.tour), oracles::optimal_length_by_enumeration(r.instance), 1e-12);
}

TEST(GenerateDataset, CoordinatesAreCanonical) {
    const Dataset ds = generate_dataset(small_options(6, 10, 4));
    for (const auto& r : ds.records)
        for (const auto& p : r.instance.points()) {
            EXPECT_EQ(p.x, canonical_coordinate(p.x));
            EXPECT_EQ(p.y, canonical_coordinate(p.y));
        }
}

TEST(GenerateDataset, SolverLimits) {
    auto opt = small_options(12, 2, 0);
    opt.solver = ReferenceSolver::brute;
    EXPECT_THROW(generate_dataset(opt), SizeLimitError);
    opt = small_options(19, 1, 0);
    EXPECT_THROW(generate_dataset(opt), SizeLimitError);
    opt.held_karp_cap = 20;
    EXPECT_EQ(generate_dataset(opt).size(), 1u);
    opt = small_options(30, 3, 0);
    opt.solver = ReferenceSolver::best_known;
    EXPECT_EQ(generate_dataset(opt).size(), 3u);
}

TEST(DatasetFormat, RoundTripEqual) {
    const Dataset ds = generate_dataset(small_options(8, 25, 17));
    std::istringstream in(serialize(ds));
    const Dataset back = read_dataset(in);
    EXPECT_EQ(back, ds);
    EXPECT_EQ(serialize(back), serialize(ds));
}

TEST(DatasetFormat, OneIndexedTourInFile) {
    std::istringstream in("0.1 0.1 0.9 0.1 0.9 0.9 0.1 0.9 output 1 3 2 4 1\n");
    const Dataset ds = read_dataset(in);
    ASSERT_EQ(ds.size(), 1u);
    EXPECT_EQ(ds.n, 4u);
    EXPECT_EQ(ds.records[0].tour, Tour({0, 2, 1, 3}));
    EXPECT_EQ(format_record(ds.records[0]),
              "0.100000 0.100000 0.900000 0.100000 0.900000 0.900000 0.100000 0.900000 output 1 3 2 4 1");
}

TEST(DatasetFormat, ParseErrorsNameTheLine) {
    const std::string good = "0.1 0.1 0.9 0.1 0.9 0.9 output 1 2 3 1\n";
    struct Case {
        std::string bad;
        std::string fragment;
    };
    const std::vector<Case> cases = {
        {"0.1 0.1 0.9 0.1 0.9 0.9 output 1 2 3", "tour indices"},
        {"0.1 0.1 0.9 0.1 0.9", "output"},
        {"0.1 0.1 0.9 0.1 0.9 output 1 2 3 1", "odd number"},
        {"0.1 0.1 0.9 x 0.9 0.9 output 1 2 3 1", "bad coordinate"},
        {"0.1 0.1 0.9 0.1 0.9 0.9 output 1 2 4 1", "bad tour index"},
        {"0.1 0.1 0.9 0.1 0.9 0.9 output 1 2 3 2", "not closed"},
        {"0.1 0.1 0.9 0.1 0.9 0.9 output 1 2 2 1", "permutation"},
        {"0.1 0.1 0.9 0.1 1.9 0.9 output 1 2 3 1", "unit square"},
        {"0.1 0.1 0.9 0.1 0.9 0.9 0.5 0.5 output 1 2 3 4 1", "nodes"},
    };
    for (const auto& c : cases) {
        std::istringstream in(good + "\n" + c.bad + "\n");
        try {
            read_dataset(in);
            FAIL() << "accepted: " << c.bad;
        } catch (const ParseError& e) {
            EXPECT_EQ(e.line(), 3u) << c.bad;
            EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
            EXPECT_NE(std::string(e.what()).find(c.fragment), std::string::npos) << e.what();
        }
    }
}

TEST(DatasetStats, SingleRecordHasZeroStd) {
    const Dataset ds = generate_dataset(small_options(6, 1, 1));
    const auto s = dataset_stats(ds);
    EXPECT_EQ(s.count, 1u);
    EXPECT_EQ(s.std_len, 0.0);
    EXPECT_NEAR(s.mean_len, tour_length(ds.records[0].instance, ds.records[0].tour), 1e-15);
}

TEST(DatasetStats, MatchesDirectComputation) {
    const Dataset ds = generate_dataset(small_options(7, 50, 77));
    const auto s = dataset_stats(ds);
    double sum = 0.0, sq = 0.0;
    for (const auto& r : ds.records) sum += oracles::recompute_length(r.instance, {r.tour.begin(), r.tour.end()});
    const double mean = sum / 50.0;
    for (const auto& r : ds.records) {
        const double l = oracles::recompute_length(r.instance, {r.tour.begin(), r.tour.end()});
        sq += (l - mean) * (l - mean);
    }
    EXPECT_NEAR(s.mean_len, mean, 1e-12);
    EXPECT_NEAR(s.std_len, std::sqrt(sq / 50.0), 1e-12);
    EXPECT_THROW(dataset_stats(Dataset{}), InvalidArgument);
}

TEST(DatasetStats, CsvRow) {
    DatasetStats s;
    s.split = Split::val;
    s.n = 10;
    s.count = 3;
    s.mean_len = 2.5;
    s.std_len = 0.25;
    s.mean_solve_ms = 1.5;
    EXPECT_EQ(stats_csv_row(s), "val,10,3,2.500000,0.250000,1.5000");
    EXPECT_EQ(kStatsCsvHeader, "split,n,count,mean_len,std_len,mean_solve_ms");
}

TEST(Split, NamesRoundTrip) {
    for (auto s : {Split::train, Split::val, Split::test}) EXPECT_EQ(parse_split(to_string(s)), s);
    EXPECT_THROW(parse_split("dev"), InvalidArgument);
}
