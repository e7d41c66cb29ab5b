#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mvgs/batchvar.hpp"
#include "mvgs/gradcheck.hpp"
#include "mvgs/thread_pool.hpp"
#include "mvgs/trainer.hpp"

namespace fs = std::filesystem;

namespace mvgs::cli {

namespace {

class UsageError : public Error {
  public:
    using Error::Error;
};

class CheckFailed : public Error {
  public:
    using Error::Error;
};

using Echo = std::map<std::string, std::string>;

std::string view_file(int v, const char* ext) { return fmt::format("view_{:03d}{}", v, ext); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
    out << text;
    if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path prepare_out(const std::string& out) {
    const fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(fmt::format("--out: cannot create '{}': {}", out, ec.message()));
    return dir;
}

void write_echo(const fs::path& dir, const Echo& echo) {
    write_text(dir / "resolved-config.txt", format_resolved_config(echo));
}

std::vector<int> parse_int_list(const std::string& flag, const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError(fmt::format("{}: '{}' is not a comma-separated integer list", flag, text));
        }
    }
    if (out.empty()) throw UsageError(fmt::format("{}: empty list", flag));
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

SceneDataset load_dataset(const fs::path& dir) {
    const SceneFile sf = load_scene(dir / "scene.txt");
    SceneDataset data;
    data.name = dir.filename().string();
    data.cameras = sf.cameras;
    for (std::size_t v = 0; v < sf.cameras.size(); ++v)
        data.images.push_back(read_ppm(dir / view_file(static_cast<int>(v), ".ppm")));
    data.validate();
    return data;
}

SceneFile load_scene_or_checkpoint(const fs::path& path) {
    std::string text = read_text(path);
    const auto pos = text.find("\ncheckpoint 1\n");
    if (pos != std::string::npos) text.resize(pos + 1);
    return parse_scene(text);
}

struct Common {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t workers = 0;
    std::string out = "mvgs-out";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Seed for every random choice")->each([&c](const std::string&) { c.seed_set = true; });
    cmd->add_option("--workers", c.workers, "Worker threads (0 = logical cores)");
    cmd->add_option("--out", c.out, "Output directory");
}

// make-synthetic

struct SynthArgs {
    int gaussians = 100;
    int cameras = 8;
    std::string layout = "orbit";
    int width = 64;
    int height = 64;
};

int cmd_make_synthetic(const Common& c, const SynthArgs& a) {
    if (a.gaussians < 1) throw UsageError("--gaussians must be at least 1");
    if (a.cameras < 1) throw UsageError("--cameras must be at least 1");
    const CameraLayout layout = parse_camera_layout(a.layout);
    const fs::path dir = prepare_out(c.out);
    ThreadPool pool(c.workers);
    SyntheticOptions so;
    so.width = a.width;
    so.height = a.height;
    const SyntheticScene scene = make_synthetic(c.seed, a.gaussians, a.cameras, layout, so);
    const SceneDataset data = render_dataset(scene.gaussians, scene.cameras, {}, &pool);
    save_scene(scene.gaussians, scene.cameras, dir / "scene.txt");
    for (std::size_t v = 0; v < data.size(); ++v) {
        write_ppm(data.images[v], dir / view_file(static_cast<int>(v), ".ppm"));
        write_depth(data.images[v], dir / view_file(static_cast<int>(v), ".depth"));
    }
    write_echo(dir, {{"cameras", std::to_string(a.cameras)},
                     {"gaussians", std::to_string(a.gaussians)},
                     {"height", std::to_string(a.height)},
                     {"layout", a.layout},
                     {"seed", std::to_string(c.seed)},
                     {"width", std::to_string(a.width)}});
    std::cout << fmt::format("wrote {} gaussians and {} views to {}\n", a.gaussians, a.cameras, dir.string());
    return kExitOk;
}

// train

struct ConfigArgs {
    std::string config;
    std::vector<std::string> overrides;
};

void apply_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    try {
        set_config_key(cfg, key, value);
    } catch (const UnknownKeyError&) {
        throw;
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

TrainConfig resolve_config(const Common& c, const ConfigArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        std::vector<std::pair<std::string, std::string>> kv;
        try {
            kv = parse_config_text(read_text(a.config));
        } catch (const ParseError& e) {
            throw UsageError(fmt::format("--config '{}': {}", a.config, e.what()));
        }
        for (const auto& [k, v] : kv) apply_key(cfg, k, v);
    }
    for (const std::string& kv : a.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError(fmt::format("--set: expected key=value, got '{}'", kv));
        apply_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (c.seed_set) cfg.seed = c.seed;
    return cfg;
}

struct TrainArgs {
    ConfigArgs config;
    std::string scene;
    std::string resume;
    int until = -1;
    bool no_timing = false;
};

int cmd_train(const Common& c, const TrainArgs& a) {
    TrainConfig cfg = resolve_config(c, a.config);
    cfg.record_timing = !a.no_timing;
    const fs::path dir = prepare_out(c.out);
    cfg.dump_path = dir / "nan-dump.txt";
    cfg.validate();
    write_echo(dir, config_to_map(cfg));

    const SceneDataset data = load_dataset(a.scene);
    ThreadPool pool(c.workers);
    TrainState state = a.resume.empty() ? init_state(cfg, init_gaussians(cfg.seed, cfg.init_gaussians))
                                        : load_checkpoint(a.resume, cfg);
    const std::size_t printed = state.history.size();
    train(state, cfg, data, &pool, a.until);
    for (std::size_t i = printed; i < state.history.size(); ++i) {
        const MetricsRow& r = state.history[i];
        std::cout << fmt::format("iter {} loss {:.6f} psnr {:.3f} ssim {:.4f} gaussians {}\n", r.iter, r.loss, r.psnr,
                                 r.ssim, r.n_gauss);
    }
    write_text(dir / "metrics.csv", format_metrics_csv(state.history));
    write_text(dir / "densify.csv", format_densify_csv(state.densify_log));
    save_checkpoint(state, cfg, data.cameras, dir / "checkpoint.txt");
    save_scene(state.gaussians, data.cameras, dir / "model.txt");
    return kExitOk;
}

// render

struct RenderArgs {
    std::string scene;
    std::string mode = "full";
    std::string views;
    int tile_size = 16;
};

int cmd_render(const Common& c, const RenderArgs& a) {
    const SceneFile sf = load_scene_or_checkpoint(a.scene);
    if (parse_render_mode(a.mode) != RenderMode::full && a.views.empty())
        throw UsageError("--mode: only full rendering makes sense without a pixel plan");
    std::vector<int> views;
    if (a.views.empty()) {
        for (std::size_t v = 0; v < sf.cameras.size(); ++v) views.push_back(static_cast<int>(v));
    } else {
        views = parse_int_list("--views", a.views);
    }
    const fs::path dir = prepare_out(c.out);
    write_echo(dir, {{"mode", a.mode}, {"scene", a.scene}, {"tile_size", std::to_string(a.tile_size)},
                     {"views", join_ints(views)}});
    ThreadPool pool(c.workers);
    RenderSettings st;
    st.tile_size = a.tile_size;
    for (int v : views) {
        const RenderPlan plan = make_full_plan({v}, sf.cameras, st.tile_size);
        const Image img = render(plan, sf.gaussians, sf.cameras, st, &pool).views[0].to_image();
        write_ppm(img, dir / fmt::format("render_{:03d}.ppm", v));
        write_depth(img, dir / fmt::format("render_{:03d}.depth", v));
    }
    std::cout << fmt::format("rendered {} views to {}\n", views.size(), dir.string());
    return kExitOk;
}

// gradcheck

struct GradcheckArgs {
    int gaussians = 6;
    int size = 12;
    int views = 2;
    int seeds = 1;
    std::string loss = "mix";
    double rel_tol = 1e-4;
    double abs_tol = 1e-7;
};

int cmd_gradcheck(const Common& c, const GradcheckArgs& a) {
    static const std::vector<std::string> allowed = {"l1", "l2", "dssim", "dssim3d", "mix"};
    if (std::find(allowed.begin(), allowed.end(), a.loss) == allowed.end())
        throw UsageError(fmt::format("--loss: expected one of l1, l2, dssim, dssim3d, mix; got '{}'", a.loss));
    if (a.seeds < 1) throw UsageError("--seeds must be at least 1");
    if (!(a.rel_tol >= 0.0 && a.abs_tol >= 0.0)) throw UsageError("--rel-tol and --abs-tol must be non-negative");
    const fs::path dir = prepare_out(c.out);
    write_echo(dir, {{"abs_tol", fmt::format("{:g}", a.abs_tol)},
                     {"gaussians", std::to_string(a.gaussians)},
                     {"loss", a.loss},
                     {"rel_tol", fmt::format("{:g}", a.rel_tol)},
                     {"seed", std::to_string(c.seed)},
                     {"seeds", std::to_string(a.seeds)},
                     {"size", std::to_string(a.size)},
                     {"views", std::to_string(a.views)}});
    ThreadPool pool(c.workers);
    std::string csv = "seed,loss,checked,failed,worst_rel,worst_param\n";
    std::optional<std::pair<std::uint64_t, GradcheckResult>> worst;
    int failures = 0;
    for (int i = 0; i < a.seeds; ++i) {
        GradcheckOptions opt;
        opt.seed = c.seed + static_cast<std::uint64_t>(i);
        opt.gaussians = a.gaussians;
        opt.size = a.size;
        opt.views = a.views;
        opt.loss = parse_loss_mode(a.loss);
        opt.rel_tol = a.rel_tol;
        opt.abs_tol = a.abs_tol;
        const GradcheckResult r = gradcheck(opt, &pool);
        csv += fmt::format("{},{},{},{},{:.3e},{}[{}]\n", opt.seed, a.loss, r.checked, r.failed, r.worst_rel,
                           r.worst_param, r.worst_gaussian);
        if (!r.passed()) ++failures;
        if (!worst || r.worst_rel > worst->second.worst_rel) worst = {opt.seed, r};
    }
    write_text(dir / "gradcheck.csv", csv);
    std::cout << csv;
    const GradcheckResult& w = worst->second;
    std::cout << fmt::format("worst: seed {} gaussian {} {} analytic {:.10g} numeric {:.10g} rel {:.3e}\n",
                             worst->first, w.worst_gaussian, w.worst_param, w.worst_analytic, w.worst_numeric,
                             w.worst_rel);
    if (failures > 0) throw CheckFailed(fmt::format("gradcheck: {} of {} seeds exceed the tolerance", failures, a.seeds));
    return kExitOk;
}

// variance

struct VarianceArgs {
    ConfigArgs config;
    std::string scene;
    int freeze_at = 500;
    int views = 4;
    int samples = 256;
    int seeds = 5;
};

SceneDataset dataset_or_synthetic(const std::string& scene, std::uint64_t seed, ThreadPool* pool) {
    if (!scene.empty()) return load_dataset(scene);
    const SyntheticScene s = make_synthetic(seed, 200, 16, CameraLayout::orbit);
    SceneDataset data = render_dataset(s.gaussians, s.cameras, {}, pool);
    data.name = "synthetic";
    return data;
}

int cmd_variance(const Common& c, const VarianceArgs& a) {
    TrainConfig cfg = resolve_config(c, a.config);
    cfg.record_timing = false;
    if (a.freeze_at < 0) throw UsageError("--freeze-at must be non-negative");
    if (a.samples < 2) throw UsageError("--samples must be at least 2");
    if (a.seeds < 1) throw UsageError("--seeds must be at least 1");
    cfg.iterations = std::max(cfg.iterations, a.freeze_at);
    cfg.validate();
    const fs::path dir = prepare_out(c.out);
    Echo echo = config_to_map(cfg);
    echo["variance.freeze_at"] = std::to_string(a.freeze_at);
    echo["variance.samples"] = std::to_string(a.samples);
    echo["variance.seeds"] = std::to_string(a.seeds);
    echo["variance.views"] = std::to_string(a.views);
    write_echo(dir, echo);

    ThreadPool pool(c.workers);
    const SceneDataset data = dataset_or_synthetic(a.scene, cfg.seed, &pool);
    TrainState state = init_state(cfg, init_gaussians(cfg.seed, cfg.init_gaussians));
    train(state, cfg, data, &pool, a.freeze_at);
    const std::vector<int> candidates = train_views(static_cast<int>(data.size()), cfg.holdout_every);

    std::string csv = "strategy,B,seed,n_samples,variance\n";
    for (int i = 0; i < a.seeds; ++i) {
        for (const BatchStrategy strategy : {BatchStrategy::single_view, BatchStrategy::multi_view}) {
            MiniBatchSpec spec;
            spec.strategy = strategy;
            spec.views_per_batch = strategy == BatchStrategy::single_view ? 1 : a.views;
            spec.seed = cfg.seed + static_cast<std::uint64_t>(i);
            const VarianceReport r =
                estimate_grad_variance(state.gaussians, data, candidates, spec, a.samples, cfg.objective, &pool);
            csv += fmt::format("{},{},{},{},{:.10e}\n", to_string(strategy), spec.views_per_batch, spec.seed,
                               r.n_samples, r.variance);
        }
    }
    write_text(dir / "variance.csv", csv);
    std::cout << csv;
    return kExitOk;
}

// lemma1

struct LemmaArgs {
    int n = 4;
    int k = 1;
    int trials = 20000;
    std::string ms;
    bool equal_means = false;
};

LemmaOneSetup lemma_setup(std::uint64_t seed, int n, int k, bool equal_means) {
    Rng rng = Rng::derive(seed, 0x1e33a);
    LemmaOneSetup setup;
    setup.samples_per_set = k;
    for (int i = 0; i < n; ++i) {
        const double center = equal_means ? 0.0 : static_cast<double>(i);
        const double spread = rng.uniform(0.5, 1.5);
        FiniteDist d;
        d.values = {center - spread, center + spread};
        d.probs = {0.5, 0.5};
        setup.dists.push_back(d);
    }
    return setup;
}

int cmd_lemma1(const Common& c, const LemmaArgs& a) {
    if (a.n < 1 || a.k < 1) throw UsageError("--n and --k must be at least 1");
    if (a.trials < 40) throw UsageError("--trials must be at least 40");
    std::vector<int> ms;
    if (a.ms.empty()) {
        for (int m = 1; m <= a.n; ++m)
            if ((a.n * a.k) % m == 0) ms.push_back(m);
    } else {
        ms = parse_int_list("--ms", a.ms);
    }
    for (int m : ms)
        if (m < 1 || m > a.n || (a.n * a.k) % m != 0)
            throw UsageError(fmt::format("--ms: {} must lie in [1, {}] and divide N*K = {}", m, a.n, a.n * a.k));
    const fs::path dir = prepare_out(c.out);
    write_echo(dir, {{"equal_means", a.equal_means ? "true" : "false"},
                     {"k", std::to_string(a.k)},
                     {"ms", join_ints(ms)},
                     {"n", std::to_string(a.n)},
                     {"seed", std::to_string(c.seed)},
                     {"trials", std::to_string(a.trials)}});

    const LemmaOneSetup setup = lemma_setup(c.seed, a.n, a.k, a.equal_means);
    Rng rng = Rng::derive(c.seed, 0x1e33b);
    const std::vector<LemmaOneRow> rows = lemma1_experiment(setup, ms, a.trials, rng);
    std::string csv = "m,var_mc,var_exact,ci_half\n";
    for (const LemmaOneRow& r : rows)
        csv += fmt::format("{},{:.10e},{},{:.10e}\n", r.m, r.var_mc, r.has_exact ? fmt::format("{:.10e}", r.var_exact) : "",
                           r.ci_half);
    write_text(dir / "lemma1.csv", csv);
    std::cout << csv;

    std::vector<std::string> problems;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const LemmaOneRow& r = rows[i];
        if (r.has_exact && std::abs(r.var_mc - r.var_exact) > 3.0 * r.ci_half)
            problems.push_back(fmt::format("m={}: Monte-Carlo {:.6g} is more than 3 half-widths from exact {:.6g}", r.m,
                                           r.var_mc, r.var_exact));
        if (i == 0) continue;
        const LemmaOneRow& p = rows[i - 1];
        if (p.m >= r.m) continue;
        if (!a.equal_means && p.has_exact && r.has_exact && !(r.var_exact < p.var_exact))
            problems.push_back(fmt::format("exact variance not decreasing from m={} to m={}", p.m, r.m));
        if (!a.equal_means && r.var_mc > p.var_mc + p.ci_half + r.ci_half)
            problems.push_back(fmt::format("Monte-Carlo variance grows from m={} to m={}", p.m, r.m));
    }
    if (!problems.empty()) {
        for (const std::string& s : problems) std::cerr << "lemma1: " << s << "\n";
        throw CheckFailed("lemma1: variance ordering check failed");
    }
    return kExitOk;
}

// bench-occupancy

struct BenchArgs {
    std::string scene;
    int views = 4;
    int tile_size = 16;
    int repeats = 5;
    bool no_timing = false;
};

int cmd_bench(const Common& c, const BenchArgs& a) {
    if (a.views < 1) throw UsageError("--views must be at least 1");
    if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
    const fs::path dir = prepare_out(c.out);
    write_echo(dir, {{"repeats", std::to_string(a.repeats)},
                     {"scene", a.scene.empty() ? "synthetic" : a.scene},
                     {"seed", std::to_string(c.seed)},
                     {"tile_size", std::to_string(a.tile_size)},
                     {"views", std::to_string(a.views)}});
    ThreadPool pool(c.workers);
    const SceneDataset data = dataset_or_synthetic(a.scene, c.seed, &pool);
    const std::vector<Gaussian3D> model =
        a.scene.empty() ? make_synthetic(c.seed, 200, 16, CameraLayout::orbit).gaussians
                        : load_scene(fs::path(a.scene) / "scene.txt").gaussians;
    std::vector<int> all(data.size());
    for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<int>(v);

    ObjectiveConfig obj;
    obj.render.tile_size = a.tile_size;
    MiniBatchSpec single;
    single.seed = c.seed;
    MiniBatchSpec multi;
    multi.strategy = BatchStrategy::multi_view;
    multi.views_per_batch = a.views;
    multi.seed = c.seed;

    const RenderPlan single_plan = sample_batch(single, all, data.cameras, std::uint64_t{0}, RenderMode::full, a.tile_size);
    const RenderPlan multi_plan =
        sample_batch(multi, all, data.cameras, std::uint64_t{0}, RenderMode::thread_efficient, a.tile_size);
    const std::vector<RenderPlan> plans = {single_plan, with_mode(multi_plan, RenderMode::full, data.cameras),
                                           with_mode(multi_plan, RenderMode::naive_masked, data.cameras), multi_plan};

    std::string csv = "mode,views,tile_size,threads_launched,threads_active,occupancy,wall_ms\n";
    for (const RenderPlan& plan : plans) {
        double best = 0.0;
        OccupancyReport rep;
        for (int r = 0; r < a.repeats; ++r) {
            const auto start = std::chrono::steady_clock::now();
            const BatchEval ev = evaluate_batch(plan, model, data, obj, &pool);
            const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            if (r == 0 || ms < best) best = ms;
            if (r == 0) rep = occupancy_report(ev.forward, a.tile_size);
        }
        csv += fmt::format("{},{},{},{},{},{:.6f},{:.3f}\n", to_string(plan.mode), plan.views.size(), a.tile_size,
                           rep.threads_launched, rep.threads_active, rep.occupancy, a.no_timing ? 0.0 : best);
    }
    write_text(dir / "bench-occupancy.csv", csv);
    std::cout << csv;
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"Multi-view mini-batch gaussian splatting on the CPU", "mvgs"};
    app.require_subcommand(1);

    Common common;
    SynthArgs synth;
    TrainArgs train_args;
    RenderArgs render_args;
    GradcheckArgs gc;
    VarianceArgs var;
    LemmaArgs lemma;
    BenchArgs bench;

    auto* ms = app.add_subcommand("make-synthetic", "Random scene, orbit cameras and ground-truth renders");
    add_common(ms, common);
    ms->add_option("--gaussians", synth.gaussians, "Number of gaussians");
    ms->add_option("--cameras", synth.cameras, "Number of cameras");
    ms->add_option("--layout", synth.layout, "orbit or random");
    ms->add_option("--width", synth.width, "Image width");
    ms->add_option("--height", synth.height, "Image height");

    auto add_config = [](CLI::App* cmd, ConfigArgs& cfg) {
        cmd->add_option("--config", cfg.config, "Config file of key = value lines");
        cmd->add_option("--set", cfg.overrides, "Override a config key (key=value), repeatable");
    };

    auto* tr = app.add_subcommand("train", "Optimize a model against a scene directory");
    add_common(tr, common);
    add_config(tr, train_args.config);
    tr->add_option("--scene", train_args.scene, "Directory written by make-synthetic")->required();
    tr->add_option("--resume", train_args.resume, "Checkpoint to continue from");
    tr->add_option("--until", train_args.until, "Stop after this iteration and checkpoint");
    tr->add_flag("--no-timing", train_args.no_timing, "Write 0 for iter_ms");

    auto* rd = app.add_subcommand("render", "Render a scene or checkpoint from its cameras");
    add_common(rd, common);
    rd->add_option("--scene", render_args.scene, "Scene or checkpoint file")->required();
    rd->add_option("--mode", render_args.mode, "Render mode");
    rd->add_option("--views", render_args.views, "Comma-separated view indices");
    rd->add_option("--tile-size", render_args.tile_size, "Tile side in pixels");

    auto* gcmd = app.add_subcommand("gradcheck", "Analytic gradients against central differences");
    add_common(gcmd, common);
    gcmd->add_option("--gaussians", gc.gaussians, "Gaussians per scene (at most 10)");
    gcmd->add_option("--size", gc.size, "Image side, 8 to 16");
    gcmd->add_option("--views", gc.views, "Views per scene");
    gcmd->add_option("--loss", gc.loss, "l1, l2, dssim, dssim3d or mix");
    gcmd->add_option("--seeds", gc.seeds, "Consecutive seeds to check");
    gcmd->add_option("--rel-tol", gc.rel_tol, "Relative tolerance");
    gcmd->add_option("--abs-tol", gc.abs_tol, "Absolute tolerance near zero");

    auto* vc = app.add_subcommand("variance", "Mini-batch gradient variance at a frozen iteration");
    add_common(vc, common);
    add_config(vc, var.config);
    vc->add_option("--scene", var.scene, "Scene directory (default: synthetic orbit scene)");
    vc->add_option("--freeze-at", var.freeze_at, "Training iteration to freeze at");
    vc->add_option("--views", var.views, "Views per multi-view batch");
    vc->add_option("--samples", var.samples, "Mini-batches per estimate");
    vc->add_option("--seeds", var.seeds, "Sampling seeds");

    auto* lc = app.add_subcommand("lemma1", "Variance of the mean over m of N distributions");
    add_common(lc, common);
    lc->add_option("--n", lemma.n, "Number of distributions");
    lc->add_option("--k", lemma.k, "Samples per distribution");
    lc->add_option("--trials", lemma.trials, "Monte-Carlo trials");
    lc->add_option("--ms", lemma.ms, "Comma-separated m values (default: divisors)");
    lc->add_flag("--equal-means", lemma.equal_means, "Give every distribution the same mean");

    auto* bc = app.add_subcommand("bench-occupancy", "Block occupancy and iteration time per render mode");
    add_common(bc, common);
    bc->add_option("--scene", bench.scene, "Scene directory (default: synthetic orbit scene)");
    bc->add_option("--views", bench.views, "Views per multi-view batch");
    bc->add_option("--tile-size", bench.tile_size, "Tile side in pixels");
    bc->add_option("--repeats", bench.repeats, "Timed repeats per mode");
    bc->add_flag("--no-timing", bench.no_timing, "Write 0 for wall_ms");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "mvgs: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (ms->parsed()) return cmd_make_synthetic(common, synth);
        if (tr->parsed()) return cmd_train(common, train_args);
        if (rd->parsed()) return cmd_render(common, render_args);
        if (gcmd->parsed()) return cmd_gradcheck(common, gc);
        if (vc->parsed()) return cmd_variance(common, var);
        if (lc->parsed()) return cmd_lemma1(common, lemma);
        if (bc->parsed()) return cmd_bench(common, bench);
    } catch (const UsageError& e) {
        std::cerr << "mvgs: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UnknownKeyError& e) {
        std::cerr << "mvgs: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "mvgs: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace mvgs::cli
