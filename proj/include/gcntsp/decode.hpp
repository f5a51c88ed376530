#pragma once

/// @file decode.hpp
/// @brief Turns an edge heat-map into a valid tour: greedy search, beam search,
/// and beam search that keeps the shortest of its final tours.
///
/// Scores are sums of log edge probabilities, with probabilities clamped below
/// at kMinEdgeProbability. Heat-maps are read as directed: the score of moving
/// from i to j is heatmap(i, j). A complete tour is scored including its closing
/// edge back to the start node.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "parallel.hpp"

namespace gcntsp {

inline constexpr double kMinEdgeProbability = 1e-12;

inline double edge_log_prob(double p) noexcept { return std::log(std::max(p, kMinEdgeProbability)); }

/// Sum of log p over consecutive directed edges of the closed tour. A zero
/// probability edge yields -infinity.
inline double tour_probability(const HeatMap& heatmap, const Tour& tour) {
    const std::size_t n = tour.size();
    if (heatmap.size() != n) throw InvalidArgument("heat-map size does not match tour");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double p = heatmap(tour[i], tour[(i + 1) % n]);
        if (!(p > 0.0)) return -std::numeric_limits<double>::infinity();
        total += std::log(p);
    }
    return total;
}

/// (p + p^T) / 2; an alternative reading of the heat-map, not applied by default.
inline HeatMap symmetrized(const HeatMap& heatmap) {
    const std::size_t n = heatmap.size();
    HeatMap out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) out(i, j) = 0.5 * (heatmap(i, j) + heatmap(j, i));
    return out;
}

inline void check_decode_args(const HeatMap& heatmap, std::size_t start) {
    if (heatmap.size() < 3) throw InvalidArgument("decoding needs n >= 3");
    if (start >= heatmap.size()) throw InvalidArgument("start node out of range");
}

/// From `start`, repeatedly appends the unvisited node with the highest edge
/// probability (ties to the lower index).
inline Tour greedy_decode(const HeatMap& heatmap, std::size_t start = 0) {
    check_decode_args(heatmap, start);
    const std::size_t n = heatmap.size();
    std::vector<char> visited(n, 0);
    std::vector<int> order{static_cast<int>(start)};
    visited[start] = 1;
    std::size_t current = start;
    double score = 0.0;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t best = n;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (visited[j]) continue;
            // same accumulation as a width-1 beam so both pick identically
            const double s = score + edge_log_prob(heatmap(current, j));
            if (best == n || s > best_score) {
                best = j;
                best_score = s;
            }
        }
        visited[best] = 1;
        order.push_back(static_cast<int>(best));
        current = best;
        score = best_score;
    }
    return Tour(std::move(order));
}

/// Up to `width` partial tours of equal length, best first.
struct BeamState {
    std::vector<std::vector<int>> orders;
    std::vector<double> log_probs;
    std::vector<std::vector<char>> visited;

    std::size_t size() const noexcept { return orders.size(); }
};

/// Beam search over partial tours from `start`. Each stage extends every beam by
/// every unvisited node and keeps the best `width` candidates, ranked by
/// cumulative log-probability, then lower new node, then lower parent beam.
/// The returned complete tours are sorted by their closed-tour score (best first).
inline BeamState beam_search(const HeatMap& heatmap, std::size_t width, std::size_t start = 0) {
    check_decode_args(heatmap, start);
    if (width < 1) throw InvalidArgument("beam width must be >= 1");
    const std::size_t n = heatmap.size();
    BeamState state;
    state.orders.push_back({static_cast<int>(start)});
    state.log_probs.push_back(0.0);
    state.visited.emplace_back(n, 0);
    state.visited[0][start] = 1;

    struct Candidate {
        double score;
        int node;
        std::size_t parent;
    };
    auto better = [](const Candidate& a, const Candidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.node != b.node) return a.node < b.node;
        return a.parent < b.parent;
    };
    std::vector<Candidate> cands;
    for (std::size_t step = 1; step < n; ++step) {
        cands.clear();
        for (std::size_t bi = 0; bi < state.size(); ++bi) {
            const int last = state.orders[bi].back();
            for (std::size_t j = 0; j < n; ++j)
                if (!state.visited[bi][j])
                    cands.push_back({state.log_probs[bi] + edge_log_prob(heatmap(last, j)),
                                     static_cast<int>(j), bi});
        }
        const std::size_t keep = std::min(width, cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
        BeamState next;
        for (std::size_t c = 0; c < keep; ++c) {
            const auto& cand = cands[c];
            next.orders.push_back(state.orders[cand.parent]);
            next.orders.back().push_back(cand.node);
            next.log_probs.push_back(cand.score);
            next.visited.push_back(state.visited[cand.parent]);
            next.visited.back()[cand.node] = 1;
        }
        state = std::move(next);
    }

    std::vector<double> closed(state.size());
    for (std::size_t bi = 0; bi < state.size(); ++bi)
        closed[bi] = state.log_probs[bi] + edge_log_prob(heatmap(state.orders[bi].back(), start));
    std::vector<std::size_t> rank(state.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return closed[a] > closed[b]; });
    BeamState sorted;
    for (std::size_t r : rank) {
        sorted.orders.push_back(std::move(state.orders[r]));
        sorted.log_probs.push_back(closed[r]);
        sorted.visited.push_back(std::move(state.visited[r]));
    }
    return sorted;
}

/// Highest-probability complete tour found by beam search.
inline Tour beam_decode(const HeatMap& heatmap, std::size_t width, std::size_t start = 0) {
    BeamState s = beam_search(heatmap, width, start);
    return Tour(std::move(s.orders.front()));
}

/// Shortest (by Euclidean length) of the final beam's complete tours; ties go
/// to the more probable tour.
inline Tour beam_decode_shortest(const HeatMap& heatmap, const TspInstance& instance, std::size_t width,
                                 std::size_t start = 0) {
    if (instance.size() != heatmap.size()) throw InvalidArgument("heat-map size does not match instance");
    BeamState s = beam_search(heatmap, width, start);
    const DistanceMatrix d = pairwise_distances(instance);
    std::size_t best = 0;
    double best_len = std::numeric_limits<double>::infinity();
    for (std::size_t bi = 0; bi < s.size(); ++bi) {
        const double len = tour_length(d, Tour(s.orders[bi]));
        if (len < best_len) {
            best_len = len;
            best = bi;
        }
    }
    return Tour(std::move(s.orders[best]));
}

enum class DecoderKind { greedy, beam, beam_shortest };

inline DecoderKind parse_decoder(std::string_view s) {
    if (s == "greedy") return DecoderKind::greedy;
    if (s == "beam") return DecoderKind::beam;
    if (s == "beam-shortest" || s == "beam_shortest") return DecoderKind::beam_shortest;
    throw InvalidArgument("unknown decoder '" + std::string(s) + "'");
}

inline std::string to_string(DecoderKind k) {
    switch (k) {
    case DecoderKind::greedy: return "greedy";
    case DecoderKind::beam: return "beam";
    case DecoderKind::beam_shortest: return "beam-shortest";
    }
    return "?";
}

struct DecodeOptions {
    DecoderKind kind = DecoderKind::greedy;
    std::size_t beam_width = 1;
    std::size_t start = 0;
    bool symmetrize = false;
};

inline Tour decode(const HeatMap& heatmap, const TspInstance& instance, const DecodeOptions& opt) {
    const HeatMap& h = opt.symmetrize ? symmetrized(heatmap) : heatmap;
    switch (opt.kind) {
    case DecoderKind::greedy: return greedy_decode(h, opt.start);
    case DecoderKind::beam: return beam_decode(h, opt.beam_width, opt.start);
    case DecoderKind::beam_shortest: return beam_decode_shortest(h, instance, opt.beam_width, opt.start);
    }
    throw InvalidArgument("bad decoder");
}

/// Decodes a batch, one instance per task; output i belongs to input i.
inline std::vector<Tour> decode_batch(std::span<const HeatMap> heatmaps, std::span<const TspInstance> instances,
                                      const DecodeOptions& opt, unsigned threads) {
    if (heatmaps.size() != instances.size()) throw InvalidArgument("heat-map / instance count mismatch");
    std::vector<Tour> out(heatmaps.size());
    parallel_for(heatmaps.size(), threads, [&](std::size_t i) { out[i] = decode(heatmaps[i], instances[i], opt); });
    return out;
}

} // namespace gcntsp
