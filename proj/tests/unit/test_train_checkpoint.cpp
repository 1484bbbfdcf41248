#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "digits.hpp"
#include "oracles.hpp"
#include "sculpt/checkpoint.hpp"
#include "sculpt/errors.hpp"
#include "sculpt/pipelines.hpp"
#include "sculpt/train.hpp"

using namespace sculpt;

namespace {

Checkpoint sample_checkpoint() {
    Checkpoint c;
    c.spec.widths = {3, 5, 2};
    const Model m = build_model(c.spec);
    c.seed = 42;
    c.params = sculpt::testing::random_params(m.layout, 1);
    std::vector<std::uint8_t> bits(m.layout.total(), 1);
    bits[2] = bits[7] = bits[21] = 0;
    c.mask = Mask::from_bits(m.layout, bits);
    c.params = apply_mask(c.params, c.mask);
    c.velocity.assign(c.params.size(), 0.25);
    c.epoch = 40;
    c.cycle = 1;
    c.schedule = "cyclic:20x2";
    c.criterion = "magnitude";
    return c;
}

TrainTest small_moons() {
    TrainTest tt = split_train_test(gen_two_moons(200, 0.1, 3), 0.25, 4);
    const Standardizer s = fit_standardizer(tt.train);
    s.apply(tt.train);
    s.apply(tt.test);
    return tt;
}

}  // namespace

TEST(Sgd, MomentumAndWeightDecayUpdate) {
    ModelSpec spec;
    spec.widths = {1, 2};
    spec.bias = false;
    const Model m = build_model(spec);
    ParamVector p(m.layout, {1.0, -2.0});
    const ParamVector g(m.layout, {0.5, 0.5});
    OptimizerState st;
    st.velocity = {0.1, 0.2};
    OptimizerConfig cfg;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.01;
    sgd_step(p, g, Mask::ones(m.layout), st, cfg, 0.1);
    const double v0 = 0.9 * 0.1 + 0.5 + 0.01 * 1.0, v1 = 0.9 * 0.2 + 0.5 + 0.01 * -2.0;
    EXPECT_DOUBLE_EQ(st.velocity[0], v0);
    EXPECT_DOUBLE_EQ(st.velocity[1], v1);
    EXPECT_DOUBLE_EQ(p.values[0], 1.0 - 0.1 * v0);
    EXPECT_DOUBLE_EQ(p.values[1], -2.0 - 0.1 * v1);
}

TEST(Sgd, MaskedCoordinatesStayZero) {
    ModelSpec spec;
    spec.widths = {1, 2};
    spec.bias = false;
    const Model m = build_model(spec);
    const Mask mk = Mask::from_bits(m.layout, {1, 0});
    ParamVector p(m.layout, {1.0, 0.0});
    OptimizerState st;
    st.velocity = {0.0, 0.0};
    sgd_step(p, ParamVector(m.layout, {1.0, 3.0}), mk, st, {}, 0.1);
    EXPECT_EQ(p.values[1], 0.0);
    EXPECT_EQ(st.velocity[1], 0.0);
    EXPECT_THROW(sgd_step(p, ParamVector(m.layout, {std::nan(""), 0.0}), mk, st, {}, 0.1, 7), DivergenceError);
}

TEST(Train, LearnsTwoMoonsAndIsDeterministic) {
    const TrainTest data = small_moons();
    ModelSpec spec;
    spec.widths = {2, 16, 16, 2};
    const Model m = build_model(spec);
    const ParamVector p0 = initial_params(m.layout, 0);
    const TrainResult a = train_cycles(m, p0, Mask::ones(m.layout), default_cycle(), data, {}, 0);
    const TrainResult b = train_cycles(m, p0, Mask::ones(m.layout), default_cycle(), data, {}, 0);
    ASSERT_EQ(a.record.rows.size(), 20u);
    EXPECT_GT(a.record.rows.back().test_acc, 0.85);
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.record, b.record);
    ASSERT_EQ(a.checkpoints.size(), 1u);
    EXPECT_EQ(a.checkpoints[0].epoch, 20u);
    EXPECT_EQ(a.checkpoints[0].cycle, 0u);
}

TEST(Train, EpochOffsetsAndSnapshots) {
    const TrainTest data = small_moons();
    ModelSpec spec;
    spec.widths = {2, 8, 2};
    const Model m = build_model(spec);
    LrSchedule s = default_cycle();
    s.kind = ScheduleKind::cyclic;
    s.n_cycles = 2;
    TrainOptions o;
    o.epoch_offset = 100;
    o.cycle_offset = 5;
    o.snapshot_after = {0, 3};
    std::size_t states = 0;
    o.on_epoch_state = [&](const Checkpoint&) { ++states; };
    const ParamVector p0 = initial_params(m.layout, 1);
    const TrainResult r = train_cycles(m, p0, Mask::ones(m.layout), s, data, {}, 1, o);
    EXPECT_EQ(states, 40u);
    EXPECT_EQ(r.record.rows.front().epoch, 100u);
    EXPECT_EQ(r.record.rows.back().cycle, 6u);
    ASSERT_EQ(r.checkpoints.size(), 2u);
    EXPECT_EQ(r.checkpoints[1].cycle, 6u);
    EXPECT_EQ(r.snapshots.at(0), p0);
    EXPECT_NE(r.snapshots.at(3), p0);
    TrainOptions none;
    none.max_epochs = 0;
    EXPECT_EQ(train_cycles(m, p0, Mask::ones(m.layout), s, data, {}, 1, none).params, p0);
}

TEST(Train, DivergenceIsReported) {
    const TrainTest data = small_moons();
    ModelSpec spec;
    spec.widths = {2, 8, 2};
    const Model m = build_model(spec);
    LrSchedule s = default_cycle();
    s.peak_lr = 1e200;
    EXPECT_THROW(train_cycles(m, initial_params(m.layout, 1), Mask::ones(m.layout), s, data, {}, 1), Error);
}

TEST(Metrics, CsvRoundTrip) {
    TrainRecord rec;
    rec.rows.push_back({0, 0, 0.05, 0.69314718055994529, 0.5, 0.7, 0.49, 0.0, 0});
    rec.rows.push_back({1, 0, 0.1, 0.3, 0.875, 0.31, 0.86, 0.2, 17});
    const auto dir = sculpt::testing::scratch_dir("unit_metrics");
    write_metrics_csv(dir / "m.csv", rec);
    EXPECT_EQ(read_metrics_csv(dir / "m.csv"), rec);
    EXPECT_EQ(std::string(kMetricsHeader), "epoch,cycle,lr,train_loss,train_acc,test_loss,test_acc,sparsity,sign_flips");
}

TEST(Checkpoint, RoundTripIsExact) {
    const Checkpoint c = sample_checkpoint();
    const auto bytes = encode_checkpoint(c);
    const Checkpoint d = decode_checkpoint(bytes);
    EXPECT_EQ(d.spec, c.spec);
    EXPECT_EQ(d.seed, c.seed);
    EXPECT_EQ(d.params, c.params);
    EXPECT_EQ(d.mask, c.mask);
    EXPECT_EQ(d.velocity, c.velocity);
    EXPECT_EQ(d.epoch, c.epoch);
    EXPECT_EQ(d.cycle, c.cycle);
    EXPECT_EQ(d.schedule, c.schedule);
    EXPECT_EQ(d.criterion, c.criterion);
    EXPECT_EQ(encode_checkpoint(d), bytes);
    EXPECT_EQ(std::memcmp(bytes.data(), "SCLPCKPT", 8), 0);
}

TEST(Checkpoint, CnnSpecRoundTrip) {
    Checkpoint c;
    c.spec.kind = ModelKind::cnn;
    c.spec.in_channels = 1;
    c.spec.in_height = 8;
    c.spec.in_width = 8;
    c.spec.conv_channels = {2};
    c.spec.widths = {5, 3};
    const Model m = build_model(c.spec);
    c.params = sculpt::testing::random_params(m.layout, 2);
    c.mask = Mask::ones(m.layout);
    const Checkpoint d = decode_checkpoint(encode_checkpoint(c));
    EXPECT_EQ(d.spec, c.spec);
    EXPECT_EQ(d.params, c.params);
}

TEST(Checkpoint, CorruptionIsDetected) {
    const auto bytes = encode_checkpoint(sample_checkpoint());
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
    bad = bytes;
    bad[8] = 9;  // version
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
    bad.assign(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
    EXPECT_THROW(decode_checkpoint(bad), FormatError);

    // Flip one packed mask bit so the stored nonzero count no longer matches.
    const Checkpoint c = sample_checkpoint();
    const std::string tag = "mask";
    auto it = std::search(bytes.begin(), bytes.end(), tag.begin(), tag.end());
    ASSERT_NE(it, bytes.end());
    const std::size_t body = static_cast<std::size_t>(it - bytes.begin()) + 4 + 1 + 8;
    bad = bytes;
    bad[body + 4 + 16] ^= 0x01;
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
    EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), FormatError);
}

TEST(Checkpoint, LayoutMismatchOnEncode) {
    Checkpoint c = sample_checkpoint();
    ModelSpec other;
    other.widths = {3, 4, 2};
    c.mask = Mask::ones(build_model(other).layout);
    EXPECT_THROW(encode_checkpoint(c), ContractError);
}
