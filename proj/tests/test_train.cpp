#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace gcntsp;

namespace {

Dataset make_dataset(std::size_t n, std::size_t count, std::uint64_t seed) {
    GenerateOptions opt;
    opt.n = n;
    opt.count = count;
    opt.seed = seed;
    opt.solver = n <= kBruteForceMaxNodes ? ReferenceSolver::brute : ReferenceSolver::held_karp;
    return generate_dataset(opt);
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.subset_per_epoch = 40;
    cfg.batch_size = 10;
    cfg.val_interval_epochs = 2;
    cfg.seed = 3;
    cfg.model.l_conv = 2;
    cfg.model.l_mlp = 2;
    cfg.model.h = 16;
    return cfg;
}

std::string checkpoint_bytes(const GcnModel<float>& m) {
    std::ostringstream out(std::ios::binary);
    save_checkpoint(out, m, {{"note", "x"}});
    return out.str();
}

} // namespace

TEST(LrDecay, Rule) {
    EXPECT_NEAR(maybe_decay_lr(0.995, 1.0, 0.001), 0.0009901, 1e-7);
    EXPECT_DOUBLE_EQ(maybe_decay_lr(0.995, 1.0, 0.001), 0.001 / 1.01);
    EXPECT_EQ(maybe_decay_lr(0.98, 1.0, 0.001), 0.001);
    EXPECT_DOUBLE_EQ(maybe_decay_lr(0.99, 1.0, 0.001), 0.001 / 1.01);
    EXPECT_DOUBLE_EQ(maybe_decay_lr(1.2, 1.0, 0.001, 2.0), 0.0005);
}

TEST(TrainConfigFile, ParsesKeysAndComments) {
    std::istringstream in("# desk config\nepochs = 12\nsubset_per_epoch=500\n\nbatch_size=25 # trailing\n"
                          "lr_initial=0.002\ndecay_factor=1.05\nval_interval_epochs=3\nseed=9\n"
                          "l_conv=4\nl_mlp=2\nh=32\nk=5\nepsilon_gate=1e-10\n");
    const TrainConfig cfg = parse_train_config(in);
    EXPECT_EQ(cfg.epochs, 12u);
    EXPECT_EQ(cfg.subset_per_epoch, 500u);
    EXPECT_EQ(cfg.batch_size, 25u);
    EXPECT_DOUBLE_EQ(cfg.lr_initial, 0.002);
    EXPECT_DOUBLE_EQ(cfg.decay_factor, 1.05);
    EXPECT_EQ(cfg.val_interval_epochs, 3u);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.model.l_conv, 4u);
    EXPECT_EQ(cfg.model.l_mlp, 2u);
    EXPECT_EQ(cfg.model.h, 32u);
    EXPECT_EQ(cfg.model.k, 5u);
    EXPECT_DOUBLE_EQ(cfg.model.epsilon_gate, 1e-10);
}

TEST(TrainConfigFile, Defaults) {
    std::istringstream in("");
    const TrainConfig cfg = parse_train_config(in);
    EXPECT_EQ(cfg.subset_per_epoch, 10000u);
    EXPECT_EQ(cfg.batch_size, 20u);
    EXPECT_DOUBLE_EQ(cfg.lr_initial, 0.001);
    EXPECT_DOUBLE_EQ(cfg.decay_factor, 1.01);
    EXPECT_EQ(cfg.val_interval_epochs, 5u);
}

TEST(TrainConfigFile, Errors) {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_train_config(in);
    };
    try {
        parse("epochs=3\nlearning_rate=0.1\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(parse("epochs\n"), ParseError);
    EXPECT_THROW(parse("epochs=abc\n"), ParseError);
    EXPECT_THROW(parse("decay_factor=1.0\n"), ParseError);
    EXPECT_THROW(parse("batch_size=0\n"), ParseError);
    EXPECT_THROW(parse("h=7\n"), ParseError);
}

TEST(SampleEpoch, WithoutAndWithReplacement) {
    Rng rng(1);
    auto idx = sample_epoch(100, 30, rng);
    ASSERT_EQ(idx.size(), 30u);
    std::sort(idx.begin(), idx.end());
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    const auto more = sample_epoch(5, 40, rng);
    EXPECT_EQ(more.size(), 40u);
    for (auto i : more) EXPECT_LT(i, 5u);
}

TEST(TrainEpoch, DeterministicForSameSeed) {
    const Dataset ds = make_dataset(8, 60, 1);
    const TrainConfig cfg = tiny_train_config();
    auto run = [&] {
        GcnModel<float> model(cfg.model, cfg.seed);
        Rng rng = Rng::substream(cfg.seed, 1);
        std::vector<double> losses;
        for (int e = 0; e < 2; ++e) losses.push_back(train_epoch(model, ds, cfg, rng, cfg.lr_initial));
        return losses;
    };
    EXPECT_EQ(run(), run());
    GcnModel<float> model(cfg.model, 0);
    Rng rng(0);
    EXPECT_THROW(train_epoch(model, Dataset{}, cfg, rng, 1e-3), InvalidArgument);
}

TEST(TrainEpoch, SmokeTrainingReducesLoss) {
    const Dataset ds = make_dataset(10, 50, 2);
    TrainConfig cfg = tiny_train_config();
    cfg.subset_per_epoch = 50;
    GcnModel<float> model(cfg.model, 4);
    Rng rng(4);
    const double first = train_epoch(model, ds, cfg, rng, cfg.lr_initial);
    double last = first;
    for (int e = 1; e < 30; ++e) last = train_epoch(model, ds, cfg, rng, cfg.lr_initial);
    EXPECT_LT(last, first);
}

TEST(TrainStep, FrozenBatchLossDecreasesForFiveSteps) {
    const Dataset ds = make_dataset(10, 20, 5);
    GcnModel<float> model(tiny_train_config().model, 5);
    std::vector<TspInstance> insts;
    std::vector<Tour> tours;
    for (const auto& r : ds.records) {
        insts.push_back(r.instance);
        tours.push_back(r.tour);
    }
    std::vector<double> losses;
    for (int s = 0; s < 6; ++s) losses.push_back(train_step(model, insts, tours, 1e-4));
    for (std::size_t s = 1; s < losses.size(); ++s) EXPECT_LT(losses[s], losses[s - 1]) << "step " << s;
}

TEST(Validate, PerfectPredictionHasZeroGap) {
    const Dataset ds = make_dataset(9, 15, 6);
    const auto res = validate_with(
        [](const Record& r) {
            const auto adj = tour_to_adjacency(r.tour);
            HeatMap hm(r.tour.size(), 0.0);
            for (std::size_t i = 0; i < hm.size(); ++i)
                for (std::size_t j = 0; j < hm.size(); ++j) hm(i, j) = adj(i, j);
            return std::pair<HeatMap, double>(hm, 0.0);
        },
        ds, 2);
    EXPECT_NEAR(res.greedy_gap_pct, 0.0, 1e-9);
}

TEST(Validate, UntrainedModelFiniteRepeatableThreadIndependent) {
    const Dataset ds = make_dataset(10, 12, 7);
    GcnModel<float> model(tiny_train_config().model, 7);
    const auto a = validate(model, ds, 1);
    const auto b = validate(model, ds, 1);
    const auto c = validate(model, ds, 4);
    EXPECT_TRUE(std::isfinite(a.greedy_gap_pct));
    EXPECT_GE(a.greedy_gap_pct, 0.0);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.greedy_gap_pct, b.greedy_gap_pct);
    EXPECT_EQ(a.loss, c.loss);
    EXPECT_EQ(a.greedy_gap_pct, c.greedy_gap_pct);
    EXPECT_THROW(validate(model, Dataset{}, 1), InvalidArgument);
}

TEST(Train, ScheduleLogAndCallbacks) {
    const Dataset train_ds = make_dataset(8, 60, 8);
    const Dataset val_ds = make_dataset(8, 10, 9);
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 5;
    cfg.lr_initial = 0.05; // large enough that validation loss stalls and lr decays
    GcnModel<float> model(cfg.model, cfg.seed);
    std::vector<std::size_t> validated;
    std::size_t epochs_seen = 0;
    TrainCallbacks cb;
    cb.on_epoch = [&](const EpochLog&) { ++epochs_seen; };
    cb.on_validation = [&](const GcnModel<float>&, const EpochLog& row, bool) { validated.push_back(row.epoch); };
    const auto result = train(model, train_ds, val_ds, cfg, 1, cb);
    EXPECT_EQ(epochs_seen, 5u);
    EXPECT_EQ(validated, (std::vector<std::size_t>{2, 4, 5}));
    ASSERT_EQ(result.log.size(), 5u);
    for (std::size_t e = 1; e < result.log.size(); ++e) EXPECT_LE(result.log[e].lr, result.log[e - 1].lr);
    EXPECT_LE(result.final_lr, cfg.lr_initial);
    EXPECT_TRUE(result.best_val_loss.has_value());
    EXPECT_FALSE(result.log[0].val_loss.has_value());
    EXPECT_TRUE(result.log[1].val_loss.has_value());
}

TEST(Train, SameSeedSameCheckpointBytes) {
    const Dataset train_ds = make_dataset(8, 40, 10);
    const Dataset val_ds = make_dataset(8, 8, 11);
    const TrainConfig cfg = tiny_train_config();
    GcnModel<float> a(cfg.model, cfg.seed), b(cfg.model, cfg.seed);
    train(a, train_ds, val_ds, cfg, 1);
    train(b, train_ds, val_ds, cfg, 3);
    EXPECT_EQ(checkpoint_bytes(a), checkpoint_bytes(b));
}

TEST(TrainLog, CsvRow) {
    EXPECT_EQ(kTrainLogHeader, "epoch,mean_loss,val_loss,val_gap,lr");
    EpochLog row;
    row.epoch = 3;
    row.mean_loss = 0.5;
    row.lr = 0.001;
    EXPECT_EQ(train_log_row(row), "3,0.500000,,,0.001");
    row.val_loss = 0.25;
    row.val_gap = 1.5;
    EXPECT_EQ(train_log_row(row), "3,0.500000,0.250000,1.500000,0.001");
}

TEST(Checkpoint, RoundTripIsBitIdentical) {
    const Dataset train_ds = make_dataset(8, 30, 12);
    const Dataset val_ds = make_dataset(8, 8, 13);
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 2;
    GcnModel<float> model(cfg.model, cfg.seed);
    train(model, train_ds, val_ds, cfg, 1);
    const std::string bytes = checkpoint_bytes(model);
    std::istringstream in(bytes, std::ios::binary);
    const Checkpoint loaded = load_checkpoint(in);
    EXPECT_EQ(loaded.meta.at("note"), "x");
    EXPECT_EQ(loaded.model.config(), model.config());
    EXPECT_EQ(loaded.model.params().step(), model.params().step());
    EXPECT_EQ(checkpoint_bytes(loaded.model), bytes);
    const auto v1 = validate(model, val_ds, 1);
    const auto v2 = validate(loaded.model, val_ds, 1);
    EXPECT_EQ(v1.loss, v2.loss);
    EXPECT_EQ(v1.greedy_gap_pct, v2.greedy_gap_pct);
}

TEST(Checkpoint, CorruptInputsAreParseErrors) {
    GcnModel<float> model(tiny_train_config().model, 1);
    const std::string good = checkpoint_bytes(model);
    auto load = [](const std::string& s) {
        std::istringstream in(s, std::ios::binary);
        return load_checkpoint(in);
    };
    EXPECT_THROW(load("not a checkpoint\n"), ParseError);
    EXPECT_THROW(load(good.substr(0, good.size() - 7)), ParseError);
    EXPECT_THROW(load(good + "xx"), ParseError);
    std::string bad_version = good;
    bad_version.replace(bad_version.find(" 1\n"), 3, " 9\n");
    EXPECT_THROW(load(bad_version), ParseError);
    std::string bad_shape = good;
    const auto pos = bad_shape.find("embed.A1 f32 2 16 2");
    ASSERT_NE(pos, std::string::npos);
    bad_shape.replace(pos, 19, "embed.A1 f32 2 16 3");
    EXPECT_THROW(load(bad_shape), ParseError);
    std::string unknown = good;
    unknown.replace(unknown.find("tensor param embed.b1"), 21, "tensor param embed.zz");
    EXPECT_THROW(load(unknown), ParseError);
    std::string config_mismatch = good;
    config_mismatch.replace(config_mismatch.find("h=16"), 4, "h=18");
    EXPECT_THROW(load(config_mismatch), ParseError);
    EXPECT_THROW(save_checkpoint(std::cout, model, {{"bad key", "v"}}), InvalidArgument);
}

TEST(CapacitySweep, OneRowPerValue) {
    const Dataset train_ds = make_dataset(7, 20, 14);
    const Dataset eval_ds = make_dataset(7, 6, 15);
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 1;
    cfg.subset_per_epoch = 20;
    const std::vector<std::size_t> widths{4, 8};
    const auto rows = sweep_capacity(SweepAxis::h, widths, train_ds, eval_ds, cfg, 1);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].method, "h=4");
    EXPECT_EQ(rows[1].method, "h=8");
    EXPECT_EQ(rows[0].count, 6u);
    EXPECT_THROW(sweep_capacity(SweepAxis::beam_width, widths, train_ds, eval_ds, cfg, 1), InvalidArgument);
}
