#pragma once

/// @file data.hpp
/// @brief Instance/dataset generation, the one-line-per-instance text format and
/// dataset summary statistics.
///
/// Text format, one record per line:
///
///     x1 y1 x2 y2 ... xn yn output i1 i2 ... in i1
///
/// Coordinates use 6 fixed decimals, the tour is 1-indexed and closed (first
/// index repeated at the end). Generated coordinates are rounded to those
/// 6 decimals before solving, so a written dataset reads back bit-identical.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "oracle.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace gcntsp {

enum class Split { train, val, test };

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw InvalidArgument("unknown split '" + std::string(s) + "'");
}

inline std::string_view to_string(Split s) noexcept {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "?";
}

/// How reference tours are produced. `best_known` (farthest insertion followed
/// by 2-opt) is the fallback for sizes beyond the exact solvers.
enum class ReferenceSolver { brute, held_karp, best_known };

inline ReferenceSolver parse_reference_solver(std::string_view s) {
    if (s == "brute") return ReferenceSolver::brute;
    if (s == "held_karp" || s == "held-karp") return ReferenceSolver::held_karp;
    if (s == "best_known" || s == "best-known") return ReferenceSolver::best_known;
    throw InvalidArgument("unknown solver '" + std::string(s) + "'");
}

struct Record {
    TspInstance instance;
    Tour tour;
    friend bool operator==(const Record&, const Record&) = default;
};

struct Dataset {
    Split split = Split::test;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::vector<Record> records;
    /// Wall time of the reference solve per record; empty for datasets read from disk.
    std::vector<double> solve_ms;

    std::size_t size() const noexcept { return records.size(); }
    bool empty() const noexcept { return records.empty(); }

    /// Compares the content that the text format carries.
    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.n == b.n && a.records == b.records;
    }
};

/// Rounds to the 6-decimal value the text format stores.
inline double canonical_coordinate(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::strtod(buf, nullptr);
}

/// n points i.i.d. uniform on [0,1)^2, x then y for each node.
inline TspInstance generate_instance(std::size_t n, Rng& rng) {
    if (n < 3) throw InvalidArgument("n must be >= 3, got " + std::to_string(n));
    std::vector<Point> pts(n);
    for (auto& p : pts) {
        p.x = rng.uniform();
        p.y = rng.uniform();
    }
    return TspInstance(std::move(pts));
}

inline Tour solve_reference(const TspInstance& instance, ReferenceSolver solver,
                            std::size_t held_karp_cap) {
    switch (solver) {
    case ReferenceSolver::brute: return solve_brute_force(instance);
    case ReferenceSolver::held_karp: return solve_held_karp(instance, {held_karp_cap});
    case ReferenceSolver::best_known:
        return two_opt(instance, insertion(instance, InsertionRule::farthest)).normalized();
    }
    throw InvalidArgument("bad solver");
}

struct GenerateOptions {
    std::size_t n = 10;
    std::size_t count = 1000;
    std::uint64_t seed = 0;
    ReferenceSolver solver = ReferenceSolver::held_karp;
    std::size_t held_karp_cap = HeldKarpOptions{}.max_nodes;
    Split split = Split::test;
    unsigned threads = 1;
};

/// Record i is drawn from Rng::substream(seed, i), so the content is independent
/// of the thread count.
inline Dataset generate_dataset(const GenerateOptions& opt) {
    if (opt.n < 3) throw InvalidArgument("n must be >= 3, got " + std::to_string(opt.n));
    if (opt.solver == ReferenceSolver::brute && opt.n > kBruteForceMaxNodes)
        throw SizeLimitError("brute force supports n <= " + std::to_string(kBruteForceMaxNodes));
    if (opt.solver == ReferenceSolver::held_karp &&
        opt.n > std::min(opt.held_karp_cap, kHeldKarpAbsoluteMaxNodes))
        throw SizeLimitError("Held-Karp cap is n <= " + std::to_string(opt.held_karp_cap) +
                             ", got n=" + std::to_string(opt.n));

    Dataset ds;
    ds.split = opt.split;
    ds.n = opt.n;
    ds.seed = opt.seed;
    ds.records.resize(opt.count);
    ds.solve_ms.resize(opt.count);
    parallel_for(opt.count, opt.threads, [&](std::size_t i) {
        Rng rng = Rng::substream(opt.seed, i);
        TspInstance raw = generate_instance(opt.n, rng);
        std::vector<Point> pts(raw.points().begin(), raw.points().end());
        for (auto& p : pts) {
            p.x = canonical_coordinate(p.x);
            p.y = canonical_coordinate(p.y);
        }
        TspInstance inst(std::move(pts));
        const auto t0 = std::chrono::steady_clock::now();
        Tour tour = solve_reference(inst, opt.solver, opt.held_karp_cap);
        const auto t1 = std::chrono::steady_clock::now();
        ds.solve_ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        ds.records[i] = Record{std::move(inst), std::move(tour)};
    });
    return ds;
}

inline std::string format_record(const Record& r) {
    std::string line;
    char buf[32];
    for (const auto& p : r.instance.points()) {
        std::snprintf(buf, sizeof buf, "%.6f %.6f ", p.x, p.y);
        line += buf;
    }
    line += "output";
    for (int v : r.tour) line += " " + std::to_string(v + 1);
    line += " " + std::to_string(r.tour[0] + 1);
    return line;
}

inline void write_dataset(const Dataset& ds, std::ostream& out) {
    for (const auto& r : ds.records) out << format_record(r) << '\n';
}

inline void write_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    write_dataset(ds, out);
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

namespace detail {

template <typename T>
bool parse_number(std::string_view tok, T& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

} // namespace detail

inline Record parse_record(std::string_view line, std::size_t line_no) {
    std::vector<std::string_view> tokens;
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r'))
            ++pos;
        std::size_t end = pos;
        while (end < line.size() && line[end] != ' ' && line[end] != '\t' && line[end] != '\r')
            ++end;
        if (end > pos) tokens.push_back(line.substr(pos, end - pos));
        pos = end;
    }
    std::size_t marker = tokens.size();
    for (std::size_t i = 0; i < tokens.size(); ++i)
        if (tokens[i] == "output") {
            marker = i;
            break;
        }
    if (marker == tokens.size()) throw ParseError(line_no, "missing 'output' marker");
    if (marker % 2 != 0) throw ParseError(line_no, "odd number of coordinate values");
    const std::size_t n = marker / 2;
    if (n < 3) throw ParseError(line_no, "fewer than 3 nodes");
    if (tokens.size() - marker - 1 != n + 1)
        throw ParseError(line_no, "expected " + std::to_string(n + 1) + " tour indices, found " +
                                      std::to_string(tokens.size() - marker - 1));

    std::vector<Point> pts(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!detail::parse_number(tokens[2 * i], pts[i].x) ||
            !detail::parse_number(tokens[2 * i + 1], pts[i].y))
            throw ParseError(line_no, "bad coordinate for node " + std::to_string(i + 1));
    }
    std::vector<int> order(n);
    int closing = 0;
    for (std::size_t i = 0; i <= n; ++i) {
        int v = 0;
        if (!detail::parse_number(tokens[marker + 1 + i], v) || v < 1 || v > static_cast<int>(n))
            throw ParseError(line_no, "bad tour index '" + std::string(tokens[marker + 1 + i]) + "'");
        if (i < n)
            order[i] = v - 1;
        else
            closing = v - 1;
    }
    if (closing != order[0]) throw ParseError(line_no, "tour is not closed");
    try {
        return Record{TspInstance(std::move(pts)), Tour(std::move(order))};
    } catch (const InvalidArgument& e) {
        throw ParseError(line_no, e.what());
    }
}

inline Dataset read_dataset(std::istream& in, Split split = Split::test) {
    Dataset ds;
    ds.split = split;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Record r = parse_record(line, line_no);
        if (ds.n == 0) ds.n = r.instance.size();
        if (r.instance.size() != ds.n)
            throw ParseError(line_no, "instance has " + std::to_string(r.instance.size()) +
                                          " nodes, previous lines have " + std::to_string(ds.n));
        ds.records.push_back(std::move(r));
    }
    return ds;
}

inline Dataset read_dataset(const std::string& path, Split split = Split::test) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return read_dataset(in, split);
}

struct DatasetStats {
    Split split = Split::test;
    std::size_t n = 0;
    std::size_t count = 0;
    double mean_len = 0.0;
    double std_len = 0.0; // population standard deviation
    double mean_solve_ms = 0.0;
};

inline DatasetStats dataset_stats(const Dataset& ds) {
    if (ds.empty()) throw InvalidArgument("dataset_stats on an empty dataset");
    DatasetStats s;
    s.split = ds.split;
    s.n = ds.n;
    s.count = ds.size();
    double sum = 0.0;
    std::vector<double> lens;
    lens.reserve(ds.size());
    for (const auto& r : ds.records) {
        lens.push_back(tour_length(r.instance, r.tour));
        sum += lens.back();
    }
    s.mean_len = sum / static_cast<double>(lens.size());
    double sq = 0.0;
    for (double l : lens) sq += (l - s.mean_len) * (l - s.mean_len);
    s.std_len = std::sqrt(sq / static_cast<double>(lens.size()));
    if (!ds.solve_ms.empty()) {
        double t = 0.0;
        for (double v : ds.solve_ms) t += v;
        s.mean_solve_ms = t / static_cast<double>(ds.solve_ms.size());
    }
    return s;
}

inline constexpr std::string_view kStatsCsvHeader = "split,n,count,mean_len,std_len,mean_solve_ms";

inline std::string stats_csv_row(const DatasetStats& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.6f,%.4f", std::string(to_string(s.split)).c_str(),
                  s.n, s.count, s.mean_len, s.std_len, s.mean_solve_ms);
    return buf;
}

} // namespace gcntsp
