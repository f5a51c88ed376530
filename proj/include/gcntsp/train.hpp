#pragma once

/// @file train.hpp
/// @brief Supervised training loop, validation and learning-rate decay.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "data.hpp"
#include "decode.hpp"
#include "errors.hpp"
#include "evalbench.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace gcntsp {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t subset_per_epoch = 10000;
    std::size_t batch_size = 20;
    double lr_initial = 1e-3;
    double decay_factor = 1.01;
    std::size_t val_interval_epochs = 5;
    std::uint64_t seed = 0;
    GcnConfig model{};

    void validate() const {
        if (epochs == 0 || subset_per_epoch == 0 || batch_size == 0 || val_interval_epochs == 0)
            throw InvalidArgument("training counts must be positive");
        if (!(lr_initial > 0.0)) throw InvalidArgument("lr_initial must be positive");
        if (!(decay_factor > 1.0)) throw InvalidArgument("decay_factor must be > 1");
        model.validate();
    }
};

/// key=value lines; '#' starts a comment. Keys: epochs, subset_per_epoch,
/// batch_size, lr_initial, decay_factor, val_interval_epochs, seed, l_conv,
/// l_mlp, h, k, epsilon_gate.
inline TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto as_u64 = [&] { return detail::to_u64(value, line_no); };
        auto as_f64 = [&] { return detail::to_f64(value, line_no); };
        if (key == "epochs") cfg.epochs = as_u64();
        else if (key == "subset_per_epoch") cfg.subset_per_epoch = as_u64();
        else if (key == "batch_size") cfg.batch_size = as_u64();
        else if (key == "lr_initial") cfg.lr_initial = as_f64();
        else if (key == "decay_factor") cfg.decay_factor = as_f64();
        else if (key == "val_interval_epochs") cfg.val_interval_epochs = as_u64();
        else if (key == "seed") cfg.seed = as_u64();
        else if (key == "l_conv") cfg.model.l_conv = as_u64();
        else if (key == "l_mlp") cfg.model.l_mlp = as_u64();
        else if (key == "h") cfg.model.h = as_u64();
        else if (key == "k") cfg.model.k = as_u64();
        else if (key == "epsilon_gate") cfg.model.epsilon_gate = as_f64();
        else throw ParseError(line_no, "unknown key '" + key + "'");
    }
    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(0, e.what());
    }
    return cfg;
}

inline TrainConfig read_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return parse_train_config(in);
}

/// Divides lr by `factor` unless the validation loss dropped by at least 1%
/// (current < 0.99 * previous).
inline double maybe_decay_lr(double current_val_loss, double previous_val_loss, double lr, double factor = 1.01) {
    if (current_val_loss >= 0.99 * previous_val_loss) return lr / factor;
    return lr;
}

/// Indices of one epoch: a random subset without replacement, or draws with
/// replacement when the dataset is smaller than the subset.
inline std::vector<std::size_t> sample_epoch(std::size_t dataset_size, std::size_t subset, Rng& rng) {
    std::vector<std::size_t> idx;
    if (dataset_size >= subset) {
        idx.resize(dataset_size);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        rng.shuffle(idx);
        idx.resize(subset);
    } else {
        idx.resize(subset);
        for (auto& i : idx) i = static_cast<std::size_t>(rng.below(dataset_size));
    }
    return idx;
}

/// One forward/backward/Adam step on a mini-batch; returns the batch loss.
template <typename T>
double train_step(GcnModel<T>& model, std::span<const TspInstance> instances, std::span<const Tour> tours,
                  double lr) {
    ad::Tape<T> tape;
    GraphBatch<T> g(instances, model.config());
    auto logits = model.forward(tape, g, true);
    auto loss = model.loss(tape, logits, tours, g.n);
    tape.backward(loss);
    ad::adam_step(model.params(), lr);
    return static_cast<double>(loss.item());
}

/// Samples `subset_per_epoch` records, splits them into mini-batches and takes
/// one optimizer step per batch. Returns the mean batch loss.
template <typename T>
double train_epoch(GcnModel<T>& model, const Dataset& ds, const TrainConfig& cfg, Rng& rng, double lr) {
    if (ds.empty()) throw InvalidArgument("training dataset is empty");
    const auto idx = sample_epoch(ds.size(), cfg.subset_per_epoch, rng);
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<TspInstance> insts;
    std::vector<Tour> tours;
    for (std::size_t start = 0; start < idx.size(); start += cfg.batch_size) {
        insts.clear();
        tours.clear();
        for (std::size_t k = start; k < std::min(idx.size(), start + cfg.batch_size); ++k) {
            insts.push_back(ds.records[idx[k]].instance);
            tours.push_back(ds.records[idx[k]].tour);
        }
        total += train_step(model, insts, tours, lr);
        ++batches;
    }
    return total / static_cast<double>(batches);
}

struct ValidationResult {
    double loss = 0.0;
    double greedy_gap_pct = 0.0;
};

/// Mean loss and mean greedy-decoding gap given a per-record evaluator that
/// returns (heat-map, loss). Results are reduced in record order.
template <typename Evaluator>
ValidationResult validate_with(Evaluator&& evaluate, const Dataset& ds, unsigned threads) {
    if (ds.empty()) throw InvalidArgument("validation dataset is empty");
    std::vector<double> losses(ds.size()), gaps(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) {
        const auto& r = ds.records[i];
        auto [heatmap, loss] = evaluate(r);
        losses[i] = loss;
        gaps[i] = optimality_gap(tour_length(r.instance, greedy_decode(heatmap)), tour_length(r.instance, r.tour));
    });
    ValidationResult out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out.loss += losses[i];
        out.greedy_gap_pct += gaps[i];
    }
    out.loss /= static_cast<double>(ds.size());
    out.greedy_gap_pct /= static_cast<double>(ds.size());
    return out;
}

/// Evaluation-mode validation: frozen batch-norm statistics, one instance per
/// forward pass, so the numbers do not depend on `threads`.
template <typename T>
ValidationResult validate(const GcnModel<T>& model, const Dataset& ds, unsigned threads = 1) {
    return validate_with(
        [&](const Record& r) {
            auto ev = model.evaluate(r.instance, &r.tour);
            return std::pair<HeatMap, double>(std::move(ev.heatmap), ev.loss);
        },
        ds, threads);
}

struct EpochLog {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> val_loss;
    std::optional<double> val_gap;
    double lr = 0.0;
};

inline constexpr std::string_view kTrainLogHeader = "epoch,mean_loss,val_loss,val_gap,lr";

inline std::string train_log_row(const EpochLog& e) {
    char buf[200];
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string();
        char b[40];
        std::snprintf(b, sizeof b, "%.6f", *v);
        return std::string(b);
    };
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%s,%s,%.8g", e.epoch, e.mean_loss, opt(e.val_loss).c_str(),
                  opt(e.val_gap).c_str(), e.lr);
    return buf;
}

struct TrainCallbacks {
    /// Called after every epoch.
    std::function<void(const EpochLog&)> on_epoch;
    /// Called at every validation event; `best` is true for a new lowest val loss.
    std::function<void(const GcnModel<float>&, const EpochLog&, bool best)> on_validation;
};

struct TrainResult {
    std::vector<EpochLog> log;
    double final_lr = 0.0;
    std::optional<double> best_val_loss;
};

/// Full schedule: model initialised from cfg.seed, epochs sampled from
/// Rng::substream(cfg.seed, 1), validation every val_interval_epochs epochs
/// (and after the last epoch) with lr decay against the previous validation loss.
inline TrainResult train(GcnModel<float>& model, const Dataset& train_ds, const Dataset& val_ds,
                         const TrainConfig& cfg, unsigned threads = 1, TrainCallbacks callbacks = {}) {
    cfg.validate();
    Rng rng = Rng::substream(cfg.seed, 1);
    TrainResult result;
    double lr = cfg.lr_initial;
    std::optional<double> previous_val;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochLog row;
        row.epoch = epoch;
        row.mean_loss = train_epoch(model, train_ds, cfg, rng, lr);
        row.lr = lr;
        const bool validate_now = epoch % cfg.val_interval_epochs == 0 || epoch == cfg.epochs;
        bool best = false;
        if (validate_now && !val_ds.empty()) {
            const auto v = validate(model, val_ds, threads);
            row.val_loss = v.loss;
            row.val_gap = v.greedy_gap_pct;
            if (previous_val) lr = maybe_decay_lr(v.loss, *previous_val, lr, cfg.decay_factor);
            previous_val = v.loss;
            if (!result.best_val_loss || v.loss < *result.best_val_loss) {
                result.best_val_loss = v.loss;
                best = true;
            }
        }
        result.log.push_back(row);
        if (callbacks.on_epoch) callbacks.on_epoch(row);
        if (row.val_loss && callbacks.on_validation) callbacks.on_validation(model, row, best);
    }
    result.final_lr = lr;
    return result;
}

/// Capacity sweep: trains a fresh model per value of l_conv or h (all other
/// settings from `cfg`) and reports its greedy benchmark on `eval_ds`.
inline std::vector<BenchmarkReport> sweep_capacity(SweepAxis axis, std::span<const std::size_t> values,
                                                   const Dataset& train_ds, const Dataset& eval_ds,
                                                   const TrainConfig& cfg, unsigned threads) {
    if (axis == SweepAxis::beam_width) throw InvalidArgument("beam_width is not a capacity axis");
    std::vector<BenchmarkReport> rows;
    for (std::size_t v : values) {
        TrainConfig c = cfg;
        (axis == SweepAxis::l_conv ? c.model.l_conv : c.model.h) = v;
        GcnModel<float> model(c.model, c.seed);
        train(model, train_ds, Dataset{}, c, threads);
        auto report = benchmark(MethodSpec::parse("model:greedy"), eval_ds, threads, &model);
        report.method = std::string(axis == SweepAxis::l_conv ? "l_conv=" : "h=") + std::to_string(v);
        rows.push_back(std::move(report));
    }
    return rows;
}

} // namespace gcntsp
