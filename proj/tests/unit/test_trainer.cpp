#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "mvgs/trainer.hpp"
#include "oracles.hpp"

using namespace mvgs;

namespace {

struct Toy {
    SceneDataset data;
    TrainConfig cfg;
};

Toy small_toy(BatchStrategy strategy) {
    Toy t;
    const SyntheticScene gt = make_synthetic(21, 40, 8, CameraLayout::orbit, {32, 32});
    t.data = render_dataset(gt.gaussians, gt.cameras);
    t.cfg.iterations = 120;
    t.cfg.seed = 5;
    t.cfg.eval_every = 40;
    t.cfg.init_gaussians = 30;
    t.cfg.record_timing = false;
    t.cfg.batch.strategy = strategy;
    t.cfg.batch.views_per_batch = strategy == BatchStrategy::multi_view ? 4 : 1;
    t.cfg.adc.metric_mode = strategy == BatchStrategy::multi_view ? MetricMode::multi_view : MetricMode::e_old;
    t.cfg.adc.start_iter = 20;
    t.cfg.adc.interval = 20;
    t.cfg.adc.stop_iter = 100;
    t.cfg.adc.grad_threshold = 1e-4;
    t.cfg.adc.opacity_reset_interval = 60;
    t.cfg.adc.max_gaussians = 60;
    return t;
}

}  // namespace

TEST(Adam, ZeroGradientKeepsParameters) {
    double x = 0.7, m = 0.2, v = 0.3;
    adam_update(x, 0.0, m, v, 0.1, 3);
    EXPECT_NE(x, 0.7);
    x = 0.7;
    m = 0.0;
    v = 0.0;
    adam_update(x, 0.0, m, v, 0.1, 1);
    EXPECT_EQ(x, 0.7);
    EXPECT_EQ(m, 0.0);

    std::vector<Gaussian3D> gs = init_gaussians(1, 5);
    const std::vector<Gaussian3D> before = gs;
    AdamState st;
    st.resize(gs.size() * kParamsPerGaussian);
    st.m.assign(st.m.size(), 0.5);
    adam_step(gs, ParamGrads(gs.size()), st, {}, 1e-3);
    EXPECT_DOUBLE_EQ(st.m[0], 0.45);
    EXPECT_EQ(flatten_params(gs).size(), flatten_params(before).size());
}

TEST(Adam, FirstStepIsLearningRate) {
    double x = 0.0, m = 0.0, v = 0.0;
    adam_update(x, 1.0, m, v, 0.1, 1);
    EXPECT_NEAR(x, -0.1, 1e-12);
}

TEST(Adam, MatchesScalarReference) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        double x = rng.normal(), m = 0.0, v = 0.0;
        oracle::ScalarAdam ref;
        double y = x;
        const double lr = rng.uniform(1e-4, 1e-1);
        for (long t = 1; t <= 200; ++t) {
            const double g = rng.normal() * 0.1 + 0.05;
            adam_update(x, g, m, v, lr, t);
            y = ref.step(y, g, lr);
        }
        EXPECT_NEAR(x, y, 1e-12);
    }
}

TEST(Adam, QuaternionsRenormalized) {
    std::vector<Gaussian3D> gs = init_gaussians(2, 4);
    ParamGrads grads(gs.size());
    for (auto& q : grads.d_quat) q = {0.3, -0.2, 0.5, 0.1};
    AdamState st;
    st.resize(gs.size() * kParamsPerGaussian);
    LearningRates lr;
    lr.quat = 0.2;
    adam_step(gs, grads, st, lr, 1e-3);
    for (const Gaussian3D& g : gs) {
        const Quat q = g.rotation;
        EXPECT_NEAR(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z, 1.0, 1e-14);
    }
}

TEST(Adam, FlattenRoundTrip) {
    std::vector<Gaussian3D> gs = init_gaussians(4, 6);
    const std::vector<double> flat = flatten_params(gs);
    ASSERT_EQ(flat.size(), 6 * kParamsPerGaussian);
    std::vector<Gaussian3D> back(6);
    unflatten_params(flat, back);
    EXPECT_EQ(flatten_params(back), flat);
}

TEST(LearningRate, ExponentialDecay) {
    LearningRates lr;
    EXPECT_DOUBLE_EQ(lr.mean_at(0, 1000), 1.6e-4);
    EXPECT_NEAR(lr.mean_at(1000, 1000), 1.6e-6, 1e-18);
    EXPECT_NEAR(lr.mean_at(500, 1000), 1.6e-5, 1e-17);
}

TEST(Metrics, Psnr) {
    Rng rng(1);
    const Image a = oracle::random_image(rng, 16, 16);
    EXPECT_EQ(psnr(a, a), 99.0);
    EXPECT_EQ(ssim(a, a), 1.0);
    Image b = a;
    for (double& p : b.pixels) p += 0.1;
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
    const Image c = oracle::random_image(rng, 16, 16);
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) mse += (a.pixels[i] - c.pixels[i]) * (a.pixels[i] - c.pixels[i]);
    mse /= static_cast<double>(a.pixels.size());
    EXPECT_NEAR(psnr(a, c), 10.0 * std::log10(1.0 / mse), 1e-10);
}

TEST(Config, ParseAndResolve) {
    TrainConfig cfg;
    for (const auto& [k, v] : parse_config_text("# toy\niterations = 50\n\nbatch.strategy = multi_view # four views\n"
                                                "batch.views=4\nadc.metric = multi_view\n"))
        set_config_key(cfg, k, v);
    EXPECT_EQ(cfg.iterations, 50);
    EXPECT_EQ(cfg.batch.strategy, BatchStrategy::multi_view);
    EXPECT_EQ(cfg.batch.views_per_batch, 4);
    const std::map<std::string, std::string> kv = config_to_map(cfg);
    EXPECT_EQ(kv.at("batch.strategy"), "multi_view");
    const std::string text = format_resolved_config(kv);
    EXPECT_NE(text.find("batch.strategy = multi_view\n"), std::string::npos);
    std::string prev;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        EXPECT_LT(prev, line);
        prev = line;
    }
    TrainConfig again;
    for (const auto& [k, v] : parse_config_text(text)) set_config_key(again, k, v);
    EXPECT_EQ(config_hash(again), config_hash(cfg));
    EXPECT_EQ(format_resolved_config(config_to_map(again)), text);
}

TEST(Config, RejectsUnknownAndMalformed) {
    TrainConfig cfg;
    EXPECT_THROW(set_config_key(cfg, "batch.colour", "1"), UnknownKeyError);
    EXPECT_THROW(set_config_key(cfg, "iterations", "ten"), Error);
    EXPECT_THROW(set_config_key(cfg, "loss.mode", "lpips"), Error);
    EXPECT_THROW(parse_config_text("iterations 10\n"), ParseError);
    cfg.objective.lambda = 1.0;
    EXPECT_THROW(cfg.validate(), Error);
}

TEST(Split, HoldoutEveryEighth) {
    EXPECT_EQ(holdout_views(16, 8), (std::vector<int>{0, 8}));
    EXPECT_EQ(train_views(10, 8).size(), 8u);
    EXPECT_EQ(train_views(5, 0).size(), 5u);
}

TEST(Train, ZeroIterationsReturnsInitialState) {
    Toy t = small_toy(BatchStrategy::single_view);
    t.cfg.iterations = 0;
    TrainState st = init_state(t.cfg, init_gaussians(t.cfg.seed, t.cfg.init_gaussians));
    const std::vector<double> before = flatten_params(st.gaussians);
    train(st, t.cfg, t.data);
    EXPECT_EQ(flatten_params(st.gaussians), before);
    EXPECT_TRUE(st.history.empty());
    EXPECT_EQ(st.iteration, 0);
}

TEST(Train, ResumeIsBitIdentical) {
    for (BatchStrategy strategy : {BatchStrategy::single_view, BatchStrategy::multi_view}) {
        Toy t = small_toy(strategy);
        TrainState full = init_state(t.cfg, init_gaussians(t.cfg.seed, t.cfg.init_gaussians));
        train(full, t.cfg, t.data);
        EXPECT_EQ(full.iteration, 120);
        EXPECT_FALSE(full.densify_log.empty());
        EXPECT_LE(full.gaussians.size(), 60u);

        TrainState part = init_state(t.cfg, init_gaussians(t.cfg.seed, t.cfg.init_gaussians));
        train(part, t.cfg, t.data, nullptr, 10);
        const std::string ckpt = format_checkpoint(part, t.cfg, t.data.cameras);
        TrainState resumed = parse_checkpoint(ckpt, t.cfg);
        EXPECT_EQ(format_checkpoint(resumed, t.cfg, t.data.cameras), ckpt);
        train(resumed, t.cfg, t.data);
        EXPECT_EQ(format_checkpoint(resumed, t.cfg, t.data.cameras), format_checkpoint(full, t.cfg, t.data.cameras));
        EXPECT_EQ(format_metrics_csv(resumed.history), format_metrics_csv(full.history));
        EXPECT_EQ(format_densify_csv(resumed.densify_log), format_densify_csv(full.densify_log));
    }
}

TEST(Train, CheckpointRejectsOtherConfig) {
    Toy t = small_toy(BatchStrategy::single_view);
    TrainState st = init_state(t.cfg, init_gaussians(1, 5));
    const std::string ckpt = format_checkpoint(st, t.cfg, t.data.cameras);
    TrainConfig other = t.cfg;
    other.objective.lambda = 0.3;
    EXPECT_THROW(parse_checkpoint(ckpt, other), Error);
    EXPECT_THROW(parse_checkpoint(ckpt.substr(0, ckpt.size() / 2), t.cfg), Error);
}

TEST(Train, MetricsCsvHeader) {
    Toy t = small_toy(BatchStrategy::single_view);
    TrainState st = init_state(t.cfg, init_gaussians(t.cfg.seed, t.cfg.init_gaussians));
    train(st, t.cfg, t.data, nullptr, 40);
    const std::string csv = format_metrics_csv(st.history);
    EXPECT_EQ(csv.rfind("iter,loss,psnr,ssim,n_gauss,iter_ms\n", 0), 0u);
    ASSERT_EQ(st.history.size(), 1u);
    EXPECT_EQ(st.history[0].iter, 40);
    EXPECT_EQ(st.history[0].iter_ms, 0.0);
    EXPECT_EQ(st.loss_history.size(), 40u);
    EXPECT_EQ(format_densify_csv({}).rfind("iter,split,clone,prune,total\n", 0), 0u);
}

TEST(Train, LossDecreasesOnToyScene) {
    Toy t = small_toy(BatchStrategy::multi_view);
    t.cfg.iterations = 300;
    TrainState st = init_state(t.cfg, init_gaussians(t.cfg.seed, t.cfg.init_gaussians));
    train(st, t.cfg, t.data);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += st.loss_history[static_cast<std::size_t>(i)];
        tail += st.loss_history[st.loss_history.size() - 1 - static_cast<std::size_t>(i)];
    }
    EXPECT_LT(tail, 0.75 * head);
    EXPECT_GT(st.gaussians.size(), 0u);
}

TEST(Train, NonFiniteAbortsWithOffenders) {
    Toy t = small_toy(BatchStrategy::single_view);
    const auto dump = std::filesystem::temp_directory_path() / "mvgs-nan-dump.txt";
    std::filesystem::remove(dump);
    t.cfg.dump_path = dump;
    const SyntheticScene gt = make_synthetic(21, 40, 8, CameraLayout::orbit, {32, 32});
    std::vector<Gaussian3D> gs = gt.gaussians;
    gs[7].color.y = std::numeric_limits<double>::quiet_NaN();
    TrainState st = init_state(t.cfg, gs);
    try {
        train(st, t.cfg, t.data);
        FAIL() << "expected abort";
    } catch (const TrainingAborted& e) {
        EXPECT_EQ(e.offenders(), (std::vector<int>{7}));
        EXPECT_NE(std::string(e.what()).find("offending gaussians: 7"), std::string::npos);
    }
    std::ifstream in(dump);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first.rfind("# iteration 1", 0), 0u);
}
