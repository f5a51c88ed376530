#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <gcntsp/gcntsp.hpp>

namespace {

using namespace gcntsp;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

/// Thrown for flag combinations CLI11 cannot express; maps to the usage exit code.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    return out;
}

/// Writes `text` to `path`, or to stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    auto out = open_out(path);
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<std::size_t> parse_values(const std::string& csv) {
    std::vector<std::size_t> values;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(tok, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != tok.size() || v == 0) throw UsageError("--values expects positive integers, got '" + tok + "'");
        values.push_back(static_cast<std::size_t>(v));
    }
    return values;
}

struct GenerateArgs {
    std::size_t n = 10;
    std::size_t count = 1000;
    std::uint64_t seed = 0;
    std::string out;
    std::string solver = "auto";
    std::size_t exact_cap = HeldKarpOptions{}.max_nodes;
    std::string split = "test";
    std::string stats;
};

int run_generate(const GenerateArgs& a, unsigned threads) {
    GenerateOptions opt;
    opt.n = a.n;
    opt.count = a.count;
    opt.seed = a.seed;
    opt.held_karp_cap = a.exact_cap;
    opt.split = parse_split(a.split);
    opt.threads = threads;
    if (a.solver == "auto") {
        opt.solver = a.n <= kBruteForceMaxNodes ? ReferenceSolver::brute
                     : a.n <= a.exact_cap       ? ReferenceSolver::held_karp
                                                : ReferenceSolver::best_known;
    } else {
        opt.solver = parse_reference_solver(a.solver);
    }
    const Dataset ds = generate_dataset(opt);
    write_dataset(ds, a.out);
    if (!a.stats.empty()) {
        emit(a.stats, std::string(kStatsCsvHeader) + "\n" + stats_csv_row(dataset_stats(ds)) + "\n");
    }
    return kExitOk;
}

struct TrainArgs {
    std::string config;
    std::string data;
    std::string val_data;
    std::string out_checkpoint;
    std::string log;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_train(const TrainArgs& a, unsigned threads) {
    TrainConfig cfg = read_train_config(a.config);
    if (a.seed_given) cfg.seed = a.seed;
    const Dataset train_ds = read_dataset(a.data, Split::train);
    const Dataset val_ds = a.val_data.empty() ? Dataset{} : read_dataset(a.val_data, Split::val);

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!a.log.empty() && a.log != "-") {
        log_file = open_out(a.log);
        log = &log_file;
    }
    *log << kTrainLogHeader << "\n";

    const std::map<std::string, std::string> meta = {{"train_n", std::to_string(train_ds.n)},
                                                     {"seed", std::to_string(cfg.seed)}};
    GcnModel<float> model(cfg.model, cfg.seed);
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochLog& row) { *log << train_log_row(row) << std::endl; };
    cb.on_validation = [&](const GcnModel<float>& m, const EpochLog&, bool best) {
        save_checkpoint(a.out_checkpoint, m, meta);
        if (best) save_checkpoint(a.out_checkpoint + ".best", m, meta);
    };
    train(model, train_ds, val_ds, cfg, threads, cb);
    save_checkpoint(a.out_checkpoint, model, meta);
    return kExitOk;
}

struct SolveArgs {
    std::string checkpoint;
    std::string data;
    std::string decoder = "greedy";
    std::size_t beam_width = 1;
    bool symmetrize = false;
    std::string out;
};

DecodeOptions decode_options(const std::string& decoder, std::size_t width, bool symmetrize) {
    DecodeOptions opt;
    opt.kind = parse_decoder(decoder);
    opt.beam_width = opt.kind == DecoderKind::greedy ? 1 : width;
    opt.symmetrize = symmetrize;
    return opt;
}

int run_solve(const SolveArgs& a, unsigned threads) {
    const DecodeOptions opt = decode_options(a.decoder, a.beam_width, a.symmetrize);
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    Dataset ds = read_dataset(a.data);
    std::vector<TspInstance> instances;
    for (const auto& r : ds.records) instances.push_back(r.instance);
    std::vector<HeatMap> heatmaps(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) { heatmaps[i] = ckpt.model.predict(instances[i]); });
    const auto tours = decode_batch(heatmaps, instances, opt, threads);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.records[i].tour = tours[i];
    std::ostringstream text;
    write_dataset(ds, text);
    emit(a.out, text.str());
    return kExitOk;
}

struct BenchmarkArgs {
    std::vector<std::string> methods;
    std::string data;
    std::string checkpoint;
    std::string out;
    std::string per_instance;
    std::uint64_t seed = 0;
};

int run_benchmark(const BenchmarkArgs& a, unsigned threads) {
    const Dataset ds = read_dataset(a.data);
    std::optional<Checkpoint> ckpt;
    if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
    std::vector<BenchmarkReport> rows;
    std::string per_instance = "method,index,length,gap_pct\n";
    for (const auto& name : a.methods) {
        MethodSpec method;
        try {
            method = MethodSpec::parse(name);
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        }
        method.seed = a.seed;
        if (method.kind == MethodKind::model && !ckpt)
            throw UsageError("method '" + name + "' needs --checkpoint");
        rows.push_back(benchmark(method, ds, threads, ckpt ? &ckpt->model : nullptr));
        const auto& r = rows.back();
        for (std::size_t i = 0; i < r.lengths.size(); ++i) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.4f\n", r.method.c_str(), i, r.lengths[i], r.gaps[i]);
            per_instance += buf;
        }
    }
    emit(a.out, report_csv(rows));
    if (!a.per_instance.empty()) emit(a.per_instance, per_instance);
    return kExitOk;
}

struct SweepArgs {
    std::string axis;
    std::string values;
    std::string checkpoint;
    std::string data;
    std::string decoder = "beam";
    std::string config;
    std::string train_data;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

int run_sweep(const SweepArgs& a, unsigned threads) {
    const SweepAxis axis = parse_sweep_axis(a.axis);
    const auto values = parse_values(a.values);
    const Dataset ds = read_dataset(a.data);
    std::vector<BenchmarkReport> rows;
    if (axis == SweepAxis::beam_width) {
        if (a.checkpoint.empty()) throw UsageError("--axis beam_width needs --checkpoint");
        const Checkpoint ckpt = load_checkpoint(a.checkpoint);
        rows = sweep_beam_width(ckpt.model, ds, values, threads, parse_decoder(a.decoder));
    } else {
        if (a.config.empty() || a.train_data.empty())
            throw UsageError("capacity sweeps need --config and --train-data");
        TrainConfig cfg = read_train_config(a.config);
        if (a.seed_given) cfg.seed = a.seed;
        rows = sweep_capacity(axis, values, read_dataset(a.train_data, Split::train), ds, cfg, threads);
    }
    emit(a.out, report_csv(rows));
    return kExitOk;
}

struct RenderArgs {
    std::string checkpoint;
    std::string data;
    std::size_t index = 0;
    std::string decoder = "greedy";
    std::size_t beam_width = 1;
    std::string out;
};

int run_render(const RenderArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Dataset ds = read_dataset(a.data);
    if (a.index >= ds.size())
        throw InvalidArgument("--index " + std::to_string(a.index) + " out of range for " +
                              std::to_string(ds.size()) + " records");
    const Record& r = ds.records[a.index];
    const HeatMap hm = ckpt.model.predict(r.instance);
    const Tour pred = decode(hm, r.instance, decode_options(a.decoder, a.beam_width, false));
    export_figure(r.instance, hm, pred, r.tour, a.out);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph ConvNet heat-map pipeline for 2-D Euclidean TSP"};
    app.require_subcommand(1);
    app.fallthrough();
    unsigned threads = default_thread_count();
    app.add_option("--threads", threads, "worker threads (default: logical cores)")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "random instances with reference tours");
    g->add_option("--n", gen.n, "nodes per instance")->required();
    g->add_option("--count", gen.count, "number of instances")->required();
    g->add_option("--seed", gen.seed, "random seed")->capture_default_str();
    g->add_option("--out", gen.out, "dataset file")->required();
    g->add_option("--solver", gen.solver, "reference solver")
        ->check(CLI::IsMember({"auto", "brute", "held_karp", "best_known"}))
        ->capture_default_str();
    g->add_option("--exact-cap", gen.exact_cap, "largest n solved with Held-Karp")->capture_default_str();
    g->add_option("--split", gen.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
    g->add_option("--stats", gen.stats, "also write the statistics CSV row here ('-' for stdout)");

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "supervised training from a config file");
    t->add_option("--config", tr.config, "key=value training config")->required();
    t->add_option("--data", tr.data, "training dataset")->required();
    t->add_option("--val-data", tr.val_data, "validation dataset");
    t->add_option("--out-checkpoint", tr.out_checkpoint, "checkpoint path; best-so-far goes to <path>.best")
        ->required();
    t->add_option("--log", tr.log, "training log CSV (default stdout)");
    auto* train_seed = t->add_option("--seed", tr.seed, "overrides the config seed");

    SolveArgs so;
    auto* s = app.add_subcommand("solve", "decode model heat-maps into tours");
    s->add_option("--checkpoint", so.checkpoint)->required();
    s->add_option("--data", so.data)->required();
    s->add_option("--decoder", so.decoder)
        ->check(CLI::IsMember({"greedy", "beam", "beam-shortest"}))
        ->capture_default_str();
    s->add_option("--beam-width", so.beam_width)->check(CLI::PositiveNumber)->capture_default_str();
    s->add_flag("--symmetrize", so.symmetrize, "average p_ij and p_ji before decoding");
    s->add_option("--out", so.out, "dataset file with predicted tours ('-' for stdout)")->required();

    BenchmarkArgs be;
    auto* b = app.add_subcommand("benchmark", "tour quality and wall time per method");
    b->add_option("--method", be.methods,
                  "exact, nearest-neighbor, nearest-insertion, random-insertion, farthest-insertion, "
                  "nearest-neighbor+2opt, model:greedy, model:beam:<w>, model:beam-shortest:<w>; repeatable")
        ->required();
    b->add_option("--data", be.data)->required();
    b->add_option("--checkpoint", be.checkpoint, "needed by model methods");
    b->add_option("--seed", be.seed, "random insertion seed")->capture_default_str();
    b->add_option("--out", be.out, "report CSV (default stdout)");
    b->add_option("--per-instance", be.per_instance, "per-instance lengths and gaps CSV");

    SweepArgs sw;
    auto* w = app.add_subcommand("sweep", "one benchmark row per beam width or model capacity");
    w->add_option("--axis", sw.axis)->check(CLI::IsMember({"beam_width", "l_conv", "h"}))->required();
    w->add_option("--values", sw.values, "comma-separated positive integers")->required();
    w->add_option("--checkpoint", sw.checkpoint, "trained model (beam_width axis)");
    w->add_option("--data", sw.data, "evaluation dataset")->required();
    w->add_option("--decoder", sw.decoder, "beam or beam-shortest")
        ->check(CLI::IsMember({"beam", "beam-shortest"}))
        ->capture_default_str();
    w->add_option("--config", sw.config, "training config (capacity axes)");
    w->add_option("--train-data", sw.train_data, "training dataset (capacity axes)");
    auto* sweep_seed = w->add_option("--seed", sw.seed, "overrides the config seed");
    w->add_option("--out", sw.out, "report CSV (default stdout)");

    RenderArgs re;
    auto* r = app.add_subcommand("render", "three-panel SVG of one instance");
    r->add_option("--checkpoint", re.checkpoint)->required();
    r->add_option("--data", re.data)->required();
    r->add_option("--index", re.index)->capture_default_str();
    r->add_option("--decoder", re.decoder)
        ->check(CLI::IsMember({"greedy", "beam", "beam-shortest"}))
        ->capture_default_str();
    r->add_option("--beam-width", re.beam_width)->check(CLI::PositiveNumber)->capture_default_str();
    r->add_option("--out", re.out, "SVG file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*g) return run_generate(gen, threads);
        if (*t) {
            tr.seed_given = train_seed->count() > 0;
            return run_train(tr, threads);
        }
        if (*s) return run_solve(so, threads);
        if (*b) return run_benchmark(be, threads);
        if (*w) {
            sw.seed_given = sweep_seed->count() > 0;
            return run_sweep(sw, threads);
        }
        if (*r) return run_render(re);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
