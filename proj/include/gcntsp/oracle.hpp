#pragma once

/// @file oracle.hpp
/// @brief Exact solvers (brute force, Held-Karp) and the classic construction
/// and local-search heuristics used as baselines.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace gcntsp {

/// Length differences below this are treated as ties by the exact solvers and 2-opt.
inline constexpr double kLengthTieTolerance = 1e-12;

inline constexpr std::size_t kBruteForceMaxNodes = 9;

/// Largest table Held-Karp will ever allocate (2^21 * 21 doubles, ~350 MB).
inline constexpr std::size_t kHeldKarpAbsoluteMaxNodes = 22;

struct HeldKarpOptions {
    std::size_t max_nodes = 18;
};

/// Enumerates every tour anchored at node 0 in lexicographic order and keeps the
/// first one of minimal length.
inline Tour solve_brute_force(const TspInstance& instance) {
    const std::size_t n = instance.size();
    if (n > kBruteForceMaxNodes)
        throw SizeLimitError("brute force supports n <= " + std::to_string(kBruteForceMaxNodes) +
                             ", got n=" + std::to_string(n));
    const DistanceMatrix d = pairwise_distances(instance);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<int> best = order;
    double best_len = std::numeric_limits<double>::infinity();
    do {
        double len = d(order[n - 1], order[0]);
        for (std::size_t i = 0; i + 1 < n; ++i) len += d(order[i], order[i + 1]);
        if (len < best_len - kLengthTieTolerance) {
            best_len = len;
            best = order;
        }
    } while (std::next_permutation(order.begin() + 1, order.end()));
    return Tour(std::move(best));
}

/// Bitmask dynamic program. cost[mask][j] is the cheapest way to finish the tour
/// from node j+1 having visited `mask` (bits over nodes 1..n-1) and return to node 0.
/// The tour is rebuilt forwards from node 0, taking the lowest-index successor that
/// attains the optimum, which yields the lexicographically smallest optimal tour.
inline Tour solve_held_karp(const TspInstance& instance, HeldKarpOptions options = {}) {
    const std::size_t n = instance.size();
    const std::size_t cap = std::min(options.max_nodes, kHeldKarpAbsoluteMaxNodes);
    if (n > cap)
        throw SizeLimitError("Held-Karp cap is n <= " + std::to_string(cap) +
                             ", got n=" + std::to_string(n));
    const DistanceMatrix d = pairwise_distances(instance);
    const std::size_t m = n - 1;
    const std::uint32_t full = (1u << m) - 1u;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(static_cast<std::size_t>(full + 1) * m, inf);
    auto at = [&](std::uint32_t mask, std::size_t j) -> double& { return cost[mask * m + j]; };

    for (std::size_t j = 0; j < m; ++j) at(full, j) = d(j + 1, 0);
    for (std::uint32_t mask = full; mask-- > 1;) {
        for (std::size_t j = 0; j < m; ++j) {
            if (!(mask & (1u << j))) continue;
            double best = inf;
            for (std::size_t k = 0; k < m; ++k) {
                if (mask & (1u << k)) continue;
                best = std::min(best, d(j + 1, k + 1) + at(mask | (1u << k), k));
            }
            at(mask, j) = best;
        }
    }

    std::vector<int> order{0};
    order.reserve(n);
    std::uint32_t mask = 0;
    std::size_t current = 0; // node id, not bit index
    for (std::size_t step = 0; step < m; ++step) {
        double best = inf;
        std::vector<double> candidate(m, inf);
        for (std::size_t k = 0; k < m; ++k) {
            if (mask & (1u << k)) continue;
            candidate[k] = d(current, k + 1) + at(mask | (1u << k), k);
            best = std::min(best, candidate[k]);
        }
        std::size_t chosen = 0;
        for (std::size_t k = 0; k < m; ++k) {
            if (!(mask & (1u << k)) && candidate[k] <= best + kLengthTieTolerance) {
                chosen = k;
                break;
            }
        }
        mask |= 1u << chosen;
        current = chosen + 1;
        order.push_back(static_cast<int>(current));
    }
    return Tour(std::move(order));
}

/// Repeatedly moves to the closest unvisited node (ties to the lower index).
inline Tour nearest_neighbor(const TspInstance& instance, std::size_t start = 0) {
    const std::size_t n = instance.size();
    if (start >= n) throw InvalidArgument("start node " + std::to_string(start) + " out of range");
    const DistanceMatrix d = pairwise_distances(instance);
    std::vector<char> visited(n, 0);
    std::vector<int> order{static_cast<int>(start)};
    visited[start] = 1;
    std::size_t current = start;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = n;
        for (std::size_t j = 0; j < n; ++j)
            if (!visited[j] && (next == n || d(current, j) < d(current, next))) next = j;
        visited[next] = 1;
        order.push_back(static_cast<int>(next));
        current = next;
    }
    return Tour(std::move(order));
}

enum class InsertionRule { nearest, random, farthest };

inline InsertionRule parse_insertion_rule(std::string_view name) {
    if (name == "nearest") return InsertionRule::nearest;
    if (name == "random") return InsertionRule::random;
    if (name == "farthest") return InsertionRule::farthest;
    throw InvalidArgument("unknown insertion rule '" + std::string(name) + "'");
}

inline std::string_view to_string(InsertionRule rule) noexcept {
    switch (rule) {
    case InsertionRule::nearest: return "nearest";
    case InsertionRule::random: return "random";
    case InsertionRule::farthest: return "farthest";
    }
    return "?";
}

/// Insertion construction. The node to add next is picked by `rule`
/// (nearest/farthest to the partial tour, or a seeded random order) and placed
/// where it adds the least length. The first node is node 0 (nearest), the
/// node with the largest distance to any other node (farthest), or the first
/// of the shuffled order (random); the first three picks form the initial sub-tour.
inline Tour insertion(const TspInstance& instance, InsertionRule rule, std::uint64_t seed = 0) {
    const std::size_t n = instance.size();
    const DistanceMatrix d = pairwise_distances(instance);

    std::vector<int> random_order;
    if (rule == InsertionRule::random) {
        random_order.resize(n);
        std::iota(random_order.begin(), random_order.end(), 0);
        Rng rng(seed);
        rng.shuffle(random_order);
    }

    std::vector<char> in_tour(n, 0);
    // distance from each node to the closest node already in the tour
    std::vector<double> to_tour(n, std::numeric_limits<double>::infinity());
    std::vector<int> tour;
    tour.reserve(n);

    for (std::size_t step = 0; step < n; ++step) {
        std::size_t pick = n;
        if (rule == InsertionRule::random) {
            pick = static_cast<std::size_t>(random_order[step]);
        } else if (step == 0) {
            pick = 0;
            if (rule == InsertionRule::farthest) {
                double best = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double far = *std::max_element(d.row(i).begin(), d.row(i).end());
                    if (far > best) {
                        best = far;
                        pick = i;
                    }
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (in_tour[i]) continue;
                if (pick == n) {
                    pick = i;
                } else if (rule == InsertionRule::nearest ? to_tour[i] < to_tour[pick]
                                                          : to_tour[i] > to_tour[pick]) {
                    pick = i;
                }
            }
        }

        if (tour.size() < 2) {
            tour.push_back(static_cast<int>(pick));
        } else {
            std::size_t best_pos = 0;
            double best_added = std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < tour.size(); ++p) {
                const int a = tour[p];
                const int b = tour[(p + 1) % tour.size()];
                const double added = d(a, pick) + d(pick, b) - d(a, b);
                if (added < best_added) {
                    best_added = added;
                    best_pos = p;
                }
            }
            tour.insert(tour.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1,
                        static_cast<int>(pick));
        }
        in_tour[pick] = 1;
        for (std::size_t i = 0; i < n; ++i) to_tour[i] = std::min(to_tour[i], d(i, pick));
    }
    return Tour(std::move(tour)).normalized();
}

/// First-improvement 2-opt: scans (i, j) lexicographically, reverses the first
/// segment whose exchange shortens the tour, and restarts until no move helps.
inline Tour two_opt(const TspInstance& instance, const Tour& tour) {
    const std::size_t n = instance.size();
    if (tour.size() != n) throw InvalidArgument("tour size does not match instance");
    const DistanceMatrix d = pairwise_distances(instance);
    std::vector<int> t(tour.begin(), tour.end());
    bool improved = n > 3;
    while (improved) {
        improved = false;
        for (std::size_t i = 0; i + 1 < n && !improved; ++i) {
            for (std::size_t j = i + 2; j < n; ++j) {
                if (i == 0 && j == n - 1) continue; // the two edges share node t[0]
                const int a = t[i], b = t[i + 1], c = t[j], e = t[(j + 1) % n];
                const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
                if (delta < -kLengthTieTolerance) {
                    std::reverse(t.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                                 t.begin() + static_cast<std::ptrdiff_t>(j) + 1);
                    improved = true;
                    break;
                }
            }
        }
    }
    return Tour(std::move(t));
}

} // namespace gcntsp
