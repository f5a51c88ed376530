#pragma once

/// @file evalbench.hpp
/// @brief Optimality gaps, solver benchmarks, sweeps and SVG figures.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "data.hpp"
#include "decode.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "parallel.hpp"

namespace gcntsp {

/// Largest n whose dataset reference tours come from an exact solver. Beyond
/// it the reference is the best-known heuristic tour and reports say so.
inline constexpr std::size_t kExactReferenceMaxNodes = 20;

/// (pred / opt - 1) * 100.
inline double optimality_gap(double pred_len, double opt_len) {
    if (!(opt_len > 0.0)) throw InvalidArgument("optimal length must be positive");
    return (pred_len / opt_len - 1.0) * 100.0;
}

enum class MethodKind {
    exact,
    nearest_neighbor,
    nearest_insertion,
    random_insertion,
    farthest_insertion,
    nearest_neighbor_two_opt,
    model
};

/// What to run. Model methods decode heat-maps with `decoder`.
struct MethodSpec {
    MethodKind kind = MethodKind::exact;
    DecodeOptions decoder{};
    std::uint64_t seed = 0; // random insertion only

    /// Accepts exact, nearest-neighbor, nearest-insertion, random-insertion,
    /// farthest-insertion, nearest-neighbor+2opt, and model:greedy,
    /// model:beam:<width>, model:beam-shortest:<width>.
    static MethodSpec parse(std::string_view s) {
        MethodSpec m;
        if (s == "exact") m.kind = MethodKind::exact;
        else if (s == "nearest-neighbor") m.kind = MethodKind::nearest_neighbor;
        else if (s == "nearest-insertion") m.kind = MethodKind::nearest_insertion;
        else if (s == "random-insertion") m.kind = MethodKind::random_insertion;
        else if (s == "farthest-insertion") m.kind = MethodKind::farthest_insertion;
        else if (s == "nearest-neighbor+2opt") m.kind = MethodKind::nearest_neighbor_two_opt;
        else if (s.starts_with("model:")) {
            m.kind = MethodKind::model;
            std::string_view rest = s.substr(6);
            const auto colon = rest.find(':');
            m.decoder.kind = parse_decoder(rest.substr(0, colon));
            if (m.decoder.kind != DecoderKind::greedy) {
                if (colon == std::string_view::npos) throw InvalidArgument("beam methods need a width: " + std::string(s));
                std::size_t w = 0;
                const auto tail = rest.substr(colon + 1);
                auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), w);
                if (ec != std::errc() || p != tail.data() + tail.size() || w == 0)
                    throw InvalidArgument("bad beam width in '" + std::string(s) + "'");
                m.decoder.beam_width = w;
            }
        } else {
            throw InvalidArgument("unknown method '" + std::string(s) + "'");
        }
        return m;
    }

    std::string name() const {
        switch (kind) {
        case MethodKind::exact: return "exact";
        case MethodKind::nearest_neighbor: return "nearest-neighbor";
        case MethodKind::nearest_insertion: return "nearest-insertion";
        case MethodKind::random_insertion: return "random-insertion";
        case MethodKind::farthest_insertion: return "farthest-insertion";
        case MethodKind::nearest_neighbor_two_opt: return "nearest-neighbor+2opt";
        case MethodKind::model:
            return "model:" + to_string(decoder.kind) +
                   (decoder.kind == DecoderKind::greedy ? "" : ":" + std::to_string(decoder.beam_width));
        }
        return "?";
    }
};

struct BenchmarkReport {
    std::string method;
    std::size_t n = 0;
    std::size_t count = 0;
    std::vector<double> lengths;
    std::vector<double> gaps;
    double mean_len = 0.0;
    double mean_gap_pct = 0.0;
    double total_wall_ms = 0.0;
    unsigned threads = 1;
    bool exact_reference = true;
};

/// Exact tour used by the `exact` method: brute force up to 9 nodes, Held-Karp above.
inline Tour solve_exact(const TspInstance& instance) {
    if (instance.size() <= kBruteForceMaxNodes) return solve_brute_force(instance);
    return solve_held_karp(instance, {kExactReferenceMaxNodes});
}

/// Runs one method on an instance. `model` is required for model methods.
inline Tour run_method(const MethodSpec& method, const TspInstance& instance, std::size_t index,
                       const GcnModel<float>* model, const HeatMap* heatmap = nullptr) {
    switch (method.kind) {
    case MethodKind::exact: return solve_exact(instance);
    case MethodKind::nearest_neighbor: return nearest_neighbor(instance, 0);
    case MethodKind::nearest_insertion: return insertion(instance, InsertionRule::nearest);
    case MethodKind::random_insertion: {
        Rng per_instance = Rng::substream(method.seed, index);
        return insertion(instance, InsertionRule::random, per_instance.next());
    }
    case MethodKind::farthest_insertion: return insertion(instance, InsertionRule::farthest);
    case MethodKind::nearest_neighbor_two_opt: return two_opt(instance, nearest_neighbor(instance, 0));
    case MethodKind::model: {
        if (heatmap) return decode(*heatmap, instance, method.decoder);
        if (!model) throw InvalidArgument("model method '" + method.name() + "' needs a checkpoint");
        return decode(model->predict(instance), instance, method.decoder);
    }
    }
    throw InvalidArgument("bad method");
}

namespace detail {

inline BenchmarkReport summarize(std::string method, const Dataset& ds, std::vector<double> lengths,
                                 double wall_ms, unsigned threads) {
    BenchmarkReport r;
    r.method = std::move(method);
    r.n = ds.n;
    r.count = ds.size();
    r.lengths = std::move(lengths);
    r.gaps.resize(r.count);
    r.total_wall_ms = wall_ms;
    r.threads = threads;
    r.exact_reference = ds.n <= kExactReferenceMaxNodes;
    double sl = 0.0, sg = 0.0;
    for (std::size_t i = 0; i < r.count; ++i) {
        r.gaps[i] = optimality_gap(r.lengths[i], tour_length(ds.records[i].instance, ds.records[i].tour));
        sl += r.lengths[i];
        sg += r.gaps[i];
    }
    if (r.count) {
        r.mean_len = sl / static_cast<double>(r.count);
        r.mean_gap_pct = sg / static_cast<double>(r.count);
    }
    return r;
}

} // namespace detail

/// Solves every record with `method` and compares against the stored reference
/// tours. The wall time covers the whole set, including model inference.
inline BenchmarkReport benchmark(const MethodSpec& method, const Dataset& ds, unsigned threads,
                                 const GcnModel<float>* model = nullptr) {
    if (threads == 0) threads = 1;
    std::vector<double> lengths(ds.size());
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(ds.size(), threads, [&](std::size_t i) {
        const auto& inst = ds.records[i].instance;
        lengths[i] = tour_length(inst, run_method(method, inst, i, model));
    });
    const auto t1 = std::chrono::steady_clock::now();
    return detail::summarize(method.name(), ds, std::move(lengths),
                             std::chrono::duration<double, std::milli>(t1 - t0).count(), threads);
}

inline std::string report_csv_header(bool exact_reference = true) {
    return std::string("method,n,count,mean_len,") +
           (exact_reference ? "mean_gap_pct" : "mean_gap_vs_best_known_pct") + ",total_wall_ms,threads";
}

inline std::string report_csv_row(const BenchmarkReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.4f,%.1f,%u", r.method.c_str(), r.n, r.count, r.mean_len,
                  r.mean_gap_pct, r.total_wall_ms, r.threads);
    return buf;
}

inline std::string report_csv(const std::vector<BenchmarkReport>& rows) {
    std::string out = report_csv_header(rows.empty() || rows.front().exact_reference) + "\n";
    for (const auto& r : rows) out += report_csv_row(r) + "\n";
    return out;
}

enum class SweepAxis { beam_width, l_conv, h };

inline SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "beam_width" || s == "beam-width") return SweepAxis::beam_width;
    if (s == "l_conv" || s == "l-conv") return SweepAxis::l_conv;
    if (s == "h") return SweepAxis::h;
    throw InvalidArgument("unknown sweep axis '" + std::string(s) + "'");
}

/// Beam-width sweep on a trained model. Heat-maps are computed once and every
/// width decodes the same maps. Row names follow `decoder_kind` (beam or
/// beam-shortest); width 1 of plain beam search is the greedy result.
inline std::vector<BenchmarkReport> sweep_beam_width(const GcnModel<float>& model, const Dataset& ds,
                                                     std::span<const std::size_t> widths, unsigned threads,
                                                     DecoderKind decoder_kind = DecoderKind::beam) {
    std::vector<BenchmarkReport> rows;
    if (widths.empty()) return rows;
    std::vector<HeatMap> maps(ds.size());
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(ds.size(), threads, [&](std::size_t i) { maps[i] = model.predict(ds.records[i].instance); });
    const double infer_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    for (std::size_t w : widths) {
        MethodSpec m;
        m.kind = MethodKind::model;
        m.decoder.kind = decoder_kind;
        m.decoder.beam_width = w;
        std::vector<double> lengths(ds.size());
        const auto t1 = std::chrono::steady_clock::now();
        parallel_for(ds.size(), threads, [&](std::size_t i) {
            const auto& inst = ds.records[i].instance;
            lengths[i] = tour_length(inst, run_method(m, inst, i, &model, &maps[i]));
        });
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t1).count();
        rows.push_back(detail::summarize(m.name(), ds, std::move(lengths), ms + infer_ms, threads));
    }
    return rows;
}

/// Three-panel SVG: the instance with its reference tour, the heat-map (edge
/// opacity proportional to probability), and the predicted tour.
inline std::string render_figure_svg(const TspInstance& instance, const HeatMap& heatmap, const Tour& predicted,
                                     const Tour& reference) {
    const std::size_t n = instance.size();
    if (heatmap.size() != n || predicted.size() != n || reference.size() != n)
        throw InvalidArgument("figure inputs disagree on n");
    constexpr double panel = 300.0, pad = 20.0, title = 24.0;
    std::ostringstream svg;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                  3 * panel, panel + title, 3 * panel, panel + title);
    svg << buf;
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    auto px = [&](std::size_t p, double x) { return p * panel + pad + x * (panel - 2 * pad); };
    auto py = [&](double y) { return title + pad + (1.0 - y) * (panel - 2 * pad); };
    auto line = [&](std::size_t p, int a, int b, const char* color, double opacity, double width) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" stroke-opacity=\"%.4f\" "
                      "stroke-width=\"%.1f\"/>\n",
                      px(p, instance[a].x), py(instance[a].y), px(p, instance[b].x), py(instance[b].y), color,
                      opacity, width);
        svg << buf;
    };
    const char* titles[3] = {"Input graph + reference tour", "Edge heat-map", "Predicted tour"};
    for (std::size_t p = 0; p < 3; ++p) {
        svg << "<g class=\"panel\" id=\"panel" << p << "\">\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.2f\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">%s</text>\n",
                      p * panel + panel / 2, titles[p]);
        svg << buf;
        if (p == 0) {
            for (std::size_t i = 0; i < n; ++i) line(p, reference[i], reference[(i + 1) % n], "black", 1.0, 1.5);
        } else if (p == 1) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double prob = std::clamp(heatmap(i, j), 0.0, 1.0);
                    if (i != j && prob > 0.0)
                        line(p, static_cast<int>(i), static_cast<int>(j), "crimson", prob, 2.0);
                }
        } else {
            for (std::size_t i = 0; i < n; ++i) line(p, predicted[i], predicted[(i + 1) % n], "navy", 1.0, 1.5);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof buf, "<circle class=\"node\" cx=\"%.2f\" cy=\"%.2f\" r=\"3.5\" fill=\"%s\"/>\n",
                          px(p, instance[i].x), py(instance[i].y), i == 0 ? "orange" : "black");
            svg << buf;
        }
        svg << "</g>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

inline void export_figure(const TspInstance& instance, const HeatMap& heatmap, const Tour& predicted,
                          const Tour& reference, const std::string& path) {
    const std::string svg = render_figure_svg(instance, heatmap, predicted, reference);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << svg;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

} // namespace gcntsp
