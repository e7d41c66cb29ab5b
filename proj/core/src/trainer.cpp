#include "mvgs/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "mvgs/thread_pool.hpp"

namespace mvgs {

double LearningRates::mean_at(int iteration, int iterations) const {
    if (iterations <= 0) return mean_start;
    const double s = std::clamp(static_cast<double>(iteration) / iterations, 0.0, 1.0);
    return std::exp((1.0 - s) * std::log(mean_start) + s * std::log(mean_end));
}

void TrainConfig::validate() const {
    if (iterations < 0) throw Error("iterations must be non-negative");
    if (eval_every < 1) throw Error("eval_every must be at least 1");
    if (holdout_every < 0 || holdout_every == 1) throw Error("holdout_every must be 0 or at least 2");
    if (init_gaussians < 1) throw Error("init.gaussians must be at least 1");
    for (double v : {lr.mean_start, lr.mean_end, lr.log_scale, lr.quat, lr.opacity, lr.color})
        if (!(v > 0.0)) throw Error("learning rates must be positive");
    if (!(objective.lambda >= 0.0 && objective.lambda < 1.0)) throw Error("loss.lambda must lie in [0, 1)");
    batch.validate();
    adc.validate();
}

namespace {

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end || !std::isfinite(out))
        throw Error(fmt::format("config key '{}': '{}' is not a number", key, v));
    return out;
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw Error(fmt::format("config key '{}': '{}' is not an integer", key, v));
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw Error(fmt::format("config key '{}': '{}' is not a boolean", key, v));
}

struct KeyDef {
    const char* key;
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
};

std::string fmt_d(double v) { return fmt::format("{}", v); }

#define MVGS_DOUBLE(name, field)                                                               \
    KeyDef {                                                                                   \
        name, [](const TrainConfig& c) { return fmt_d(c.field); },                             \
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.field = to_double(k, v); } \
    }
#define MVGS_INT(name, field, type)                                                            \
    KeyDef {                                                                                   \
        name, [](const TrainConfig& c) { return fmt::format("{}", c.field); },                 \
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.field = static_cast<type>(to_int(k, v)); } \
    }
#define MVGS_BOOL(name, field)                                                                 \
    KeyDef {                                                                                   \
        name, [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); },   \
            [](TrainConfig& c, const std::string& k, const std::string& v) { c.field = to_bool(k, v); } \
    }

const std::vector<KeyDef>& key_table() {
    static const std::vector<KeyDef> table = {
        MVGS_INT("iterations", iterations, int),
        MVGS_INT("seed", seed, std::uint64_t),
        MVGS_INT("eval_every", eval_every, int),
        MVGS_INT("holdout_every", holdout_every, int),
        MVGS_INT("init.gaussians", init_gaussians, int),
        KeyDef{"render.mode", [](const TrainConfig& c) { return std::string(to_string(c.render_mode)); },
               [](TrainConfig& c, const std::string&, const std::string& v) { c.render_mode = parse_render_mode(v); }},
        MVGS_INT("render.tile_size", objective.render.tile_size, int),
        MVGS_INT("render.warp", objective.render.warp, int),
        MVGS_DOUBLE("render.alpha_min", objective.render.alpha_min),
        MVGS_DOUBLE("render.t_min", objective.render.t_min),
        MVGS_BOOL("render.early_termination", objective.render.early_termination),
        MVGS_DOUBLE("render.guard_band", objective.render.projection.guard_band),
        MVGS_DOUBLE("render.dilation", objective.render.projection.dilation),
        MVGS_DOUBLE("render.radius_sigma", objective.render.projection.radius_sigma),
        KeyDef{"loss.mode", [](const TrainConfig& c) { return std::string(to_string(c.objective.loss)); },
               [](TrainConfig& c, const std::string&, const std::string& v) { c.objective.loss = parse_loss_mode(v); }},
        MVGS_DOUBLE("loss.lambda", objective.lambda),
        MVGS_INT("loss.half_width", objective.window.half_width, int),
        MVGS_DOUBLE("loss.sigma2d", objective.window.sigma2d),
        MVGS_DOUBLE("loss.sigma3d", objective.window.sigma3d),
        MVGS_DOUBLE("lr.mean_start", lr.mean_start),
        MVGS_DOUBLE("lr.mean_end", lr.mean_end),
        MVGS_DOUBLE("lr.log_scale", lr.log_scale),
        MVGS_DOUBLE("lr.quat", lr.quat),
        MVGS_DOUBLE("lr.opacity", lr.opacity),
        MVGS_DOUBLE("lr.color", lr.color),
        KeyDef{"batch.strategy", [](const TrainConfig& c) { return std::string(to_string(c.batch.strategy)); },
               [](TrainConfig& c, const std::string&, const std::string& v) {
                   c.batch.strategy = parse_batch_strategy(v);
               }},
        MVGS_INT("batch.views", batch.views_per_batch, int),
        MVGS_INT("batch.pixels", batch.pixels_per_batch, int),
        MVGS_BOOL("adc.enabled", adc_enabled),
        KeyDef{"adc.metric", [](const TrainConfig& c) { return std::string(to_string(c.adc.metric_mode)); },
               [](TrainConfig& c, const std::string&, const std::string& v) { c.adc.metric_mode = parse_metric_mode(v); }},
        MVGS_DOUBLE("adc.grad_threshold", adc.grad_threshold),
        MVGS_DOUBLE("adc.grad_threshold_split", adc.grad_threshold_split),
        MVGS_DOUBLE("adc.size_threshold", adc.size_threshold_world),
        MVGS_DOUBLE("adc.split_factor", adc.split_factor),
        MVGS_INT("adc.split_count", adc.split_count, int),
        MVGS_DOUBLE("adc.prune_opacity", adc.prune_opacity),
        MVGS_DOUBLE("adc.prune_scale_max", adc.prune_scale_max),
        MVGS_INT("adc.interval", adc.interval, int),
        MVGS_INT("adc.start_iter", adc.start_iter, int),
        MVGS_INT("adc.stop_iter", adc.stop_iter, int),
        MVGS_INT("adc.max_gaussians", adc.max_gaussians, std::size_t),
        MVGS_INT("adc.opacity_reset_interval", adc.opacity_reset_interval, int),
        MVGS_DOUBLE("adc.opacity_reset_ceiling", adc.opacity_reset_ceiling),
    };
    return table;
}

#undef MVGS_DOUBLE
#undef MVGS_INT
#undef MVGS_BOOL

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> config_to_map(const TrainConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const KeyDef& k : key_table()) out[k.key] = k.get(cfg);
    return out;
}

void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const KeyDef& k : key_table()) {
        if (key == k.key) {
            k.set(cfg, key, value);
            return;
        }
    }
    throw UnknownKeyError(key);
}

std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(number, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(number, "empty config key");
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

std::string format_resolved_config(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += fmt::format("{} = {}\n", k, v);
    return out;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : format_resolved_config(config_to_map(cfg))) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> flatten_params(const std::vector<Gaussian3D>& gaussians) {
    std::vector<double> out;
    out.reserve(gaussians.size() * kParamsPerGaussian);
    for (const Gaussian3D& g : gaussians) {
        for (int k = 0; k < 3; ++k) out.push_back(g.mean[k]);
        for (int k = 0; k < 3; ++k) out.push_back(g.log_scale[k]);
        for (int k = 0; k < 4; ++k) out.push_back(g.rotation[k]);
        out.push_back(g.opacity_logit);
        for (int k = 0; k < 3; ++k) out.push_back(g.color[k]);
    }
    return out;
}

void unflatten_params(const std::vector<double>& flat, std::vector<Gaussian3D>& gaussians) {
    if (flat.size() != gaussians.size() * kParamsPerGaussian) throw Error("unflatten_params: size mismatch");
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const double* p = &flat[i * kParamsPerGaussian];
        Gaussian3D& g = gaussians[i];
        g.mean = {p[0], p[1], p[2]};
        g.log_scale = {p[3], p[4], p[5]};
        g.rotation = {p[6], p[7], p[8], p[9]};
        g.opacity_logit = p[10];
        g.color = {p[11], p[12], p[13]};
    }
}

void adam_update(double& param, double grad, double& m, double& v, double lr, long t) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(kAdamBeta1, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(kAdamBeta2, static_cast<double>(t)));
    param -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
}

void adam_step(std::vector<Gaussian3D>& gaussians, const ParamGrads& grads, AdamState& state, const LearningRates& lr,
               double mean_lr) {
    const std::size_t n = gaussians.size() * kParamsPerGaussian;
    if (grads.size() != gaussians.size()) throw Error("adam_step: gradient count does not match the gaussians");
    if (state.m.size() != n || state.v.size() != n) throw Error("adam_step: moment buffers are not sized to the model");
    std::vector<double> p = flatten_params(gaussians);
    const std::vector<double> g = grads.flatten();
    ++state.step;
    const double group[kParamsPerGaussian] = {mean_lr,   mean_lr,   mean_lr,    lr.log_scale, lr.log_scale,
                                              lr.log_scale, lr.quat, lr.quat,    lr.quat,      lr.quat,
                                              lr.opacity, lr.color, lr.color,   lr.color};
    for (std::size_t i = 0; i < n; ++i)
        adam_update(p[i], g[i], state.m[i], state.v[i], group[i % kParamsPerGaussian], state.step);
    unflatten_params(p, gaussians);
    for (Gaussian3D& gs : gaussians) gs.rotation = normalized(gs.rotation);
}

SceneDataset render_dataset(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cams,
                            const RenderSettings& settings, ThreadPool* pool) {
    SceneDataset data;
    data.cameras = cams;
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const RenderPlan plan = make_full_plan({static_cast<int>(v)}, cams, settings.tile_size);
        data.images.push_back(render(plan, gaussians, cams, settings, pool).views[0].to_image());
    }
    return data;
}

std::vector<int> train_views(int n_views, int holdout_every) {
    std::vector<int> out;
    for (int i = 0; i < n_views; ++i)
        if (holdout_every <= 0 || i % holdout_every != 0) out.push_back(i);
    return out;
}

std::vector<int> holdout_views(int n_views, int holdout_every) {
    std::vector<int> out;
    if (holdout_every <= 0) return out;
    for (int i = 0; i < n_views; i += holdout_every) out.push_back(i);
    return out;
}

std::vector<Gaussian3D> init_gaussians(std::uint64_t seed, int n) {
    Rng rng = Rng::derive(seed, 0x1417);
    std::vector<Gaussian3D> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Gaussian3D g;
        do {
            g.mean = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        } while (dot(g.mean, g.mean) > 1.0);
        const double s = std::log(0.05);
        g.log_scale = {s, s, s};
        g.rotation = {1.0, 0.0, 0.0, 0.0};
        g.opacity_logit = logit(0.1);
        g.color = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
        out.push_back(g);
    }
    return out;
}

TrainState init_state(const TrainConfig& cfg, std::vector<Gaussian3D> gaussians) {
    TrainState s;
    s.gaussians = std::move(gaussians);
    s.adam.resize(s.gaussians.size() * kParamsPerGaussian);
    s.acc.resize(s.gaussians.size());
    s.rng = Rng::derive(cfg.seed, 0xadc);
    s.split_threshold = cfg.adc.grad_threshold_split;
    return s;
}

HoldoutMetrics evaluate_views(const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                              const std::vector<int>& views, const RenderSettings& settings, const SsimWindow& win,
                              ThreadPool* pool) {
    HoldoutMetrics m;
    if (views.empty()) return m;
    for (int v : views) {
        const RenderPlan plan = make_full_plan({v}, data.cameras, settings.tile_size);
        const RenderOutput out = render(plan, gaussians, data.cameras, settings, pool);
        const Image img = out.views[0].to_image();
        const Image& target = data.images[static_cast<std::size_t>(v)];
        m.psnr += psnr(img, target);
        m.ssim += ssim(img, target, win);
    }
    m.psnr /= static_cast<double>(views.size());
    m.ssim /= static_cast<double>(views.size());
    return m;
}

namespace {

bool finite_params(const Gaussian3D& g) {
    for (int k = 0; k < 3; ++k)
        if (!std::isfinite(g.mean[k]) || !std::isfinite(g.log_scale[k]) || !std::isfinite(g.color[k])) return false;
    for (int k = 0; k < 4; ++k)
        if (!std::isfinite(g.rotation[k])) return false;
    return std::isfinite(g.opacity_logit);
}

bool finite_grads(const ParamGrads& grads, std::size_t i) {
    for (int k = 0; k < 3; ++k)
        if (!std::isfinite(grads.d_mean[i][k]) || !std::isfinite(grads.d_log_scale[i][k]) ||
            !std::isfinite(grads.d_color[i][k]))
            return false;
    for (int k = 0; k < 4; ++k)
        if (!std::isfinite(grads.d_quat[i][k])) return false;
    return std::isfinite(grads.d_opacity_logit[i]);
}

// Gaussians with non-finite parameters; failing that, those with non-finite gradients.
std::vector<int> non_finite_gaussians(const std::vector<Gaussian3D>& gaussians, const ParamGrads& grads) {
    std::vector<int> bad;
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        if (!finite_params(gaussians[i])) bad.push_back(static_cast<int>(i));
    if (!bad.empty()) return bad;
    for (std::size_t i = 0; i < gaussians.size(); ++i)
        if (!finite_grads(grads, i)) bad.push_back(static_cast<int>(i));
    return bad;
}

[[noreturn]] void abort_training(const TrainConfig& cfg, const TrainState& state, const SceneDataset& data,
                                 int iteration, std::vector<int> offenders, const std::string& reason) {
    std::string list;
    for (std::size_t i = 0; i < offenders.size() && i < 10; ++i) list += (i ? " " : "") + std::to_string(offenders[i]);
    if (offenders.size() > 10) list += " ...";
    if (!cfg.dump_path.empty()) {
        std::vector<Gaussian3D> dump;
        for (int i : offenders) dump.push_back(state.gaussians[static_cast<std::size_t>(i)]);
        std::ofstream out(cfg.dump_path, std::ios::binary | std::ios::trunc);
        out << fmt::format("# iteration {}: {}\n", iteration, reason);
        out << format_scene(dump, data.cameras);
    }
    throw TrainingAborted(fmt::format("iteration {}: {}; offending gaussians: {}", iteration, reason,
                                      list.empty() ? "none" : list),
                          std::move(offenders));
}

}  // namespace

void train(TrainState& state, const TrainConfig& cfg, const SceneDataset& data, ThreadPool* pool, int until) {
    cfg.validate();
    data.validate();
    if (until < 0) until = cfg.iterations;
    until = std::min(until, cfg.iterations);
    const int n_views = static_cast<int>(data.size());
    const std::vector<int> train_set = train_views(n_views, cfg.holdout_every);
    const std::vector<int> holdout = holdout_views(n_views, cfg.holdout_every);
    if (train_set.empty()) throw Error("no training views");

    MiniBatchSpec spec = cfg.batch;
    spec.seed = cfg.seed;
    for (int it = state.iteration + 1; it <= until; ++it) {
        const auto start = std::chrono::steady_clock::now();
        const RenderPlan plan = sample_batch(spec, train_set, data.cameras, static_cast<std::uint64_t>(it),
                                             cfg.render_mode, cfg.objective.render.tile_size,
                                             cfg.objective.render.warp);
        const BatchEval ev = evaluate_batch(plan, state.gaussians, data, cfg.objective, pool);
        const ParamGrads& grads = ev.backward.grads;
        if (!std::isfinite(ev.loss))
            abort_training(cfg, state, data, it, non_finite_gaussians(state.gaussians, grads), "non-finite loss");
        if (auto bad = non_finite_gaussians(state.gaussians, grads); !bad.empty())
            abort_training(cfg, state, data, it, std::move(bad), "non-finite gradient");

        if (cfg.adc_enabled && it <= cfg.adc.stop_iter) state.acc.add(ev.backward.stats);
        adam_step(state.gaussians, grads, state.adam, cfg.lr, cfg.lr.mean_at(it, cfg.iterations));
        state.loss_history.push_back(ev.loss);

        if (cfg.adc_enabled && cfg.adc.due(it)) {
            AdcConfig adc = cfg.adc;
            adc.batch_views = cfg.batch.views_per_batch;
            adc.grad_threshold_split = state.split_threshold;
            AdcResult res = adc_step(state.gaussians, state.acc, adc, state.rng);
            state.split_threshold = adc.grad_threshold_split;
            AdamState moved;
            moved.step = state.adam.step;
            moved.resize(res.gaussians.size() * kParamsPerGaussian);
            for (std::size_t i = 0; i < res.origin.size(); ++i) {
                if (res.origin[i] < 0) continue;
                const auto src = static_cast<std::size_t>(res.origin[i]) * kParamsPerGaussian;
                std::copy_n(state.adam.m.begin() + static_cast<std::ptrdiff_t>(src), kParamsPerGaussian,
                            moved.m.begin() + static_cast<std::ptrdiff_t>(i * kParamsPerGaussian));
                std::copy_n(state.adam.v.begin() + static_cast<std::ptrdiff_t>(src), kParamsPerGaussian,
                            moved.v.begin() + static_cast<std::ptrdiff_t>(i * kParamsPerGaussian));
            }
            state.adam = std::move(moved);
            state.gaussians = std::move(res.gaussians);
            state.acc.resize(state.gaussians.size());
            state.densify_log.push_back({it, res.report});
        }
        if (cfg.adc_enabled && cfg.adc.opacity_reset_interval > 0 && it % cfg.adc.opacity_reset_interval == 0 &&
            it <= cfg.adc.stop_iter)
            opacity_reset(state.gaussians, std::min(1.0, cfg.adc.opacity_reset_ceiling * cfg.batch.views_per_batch));

        state.iteration = it;
        const double iter_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (it % cfg.eval_every == 0 || it == cfg.iterations) {
            const HoldoutMetrics hm =
                evaluate_views(state.gaussians, data, holdout, cfg.objective.render, cfg.objective.window, pool);
            state.history.push_back({it, ev.loss, hm.psnr, hm.ssim, static_cast<int>(state.gaussians.size()),
                                     cfg.record_timing ? iter_ms : 0.0});
        }
    }
}

std::string format_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::vector<Camera>& cams) {
    std::string out = format_scene(state.gaussians, cams);
    out += "checkpoint 1\n";
    out += fmt::format("config_hash {}\n", config_hash(cfg));
    out += fmt::format("iteration {}\n", state.iteration);
    out += fmt::format("split_threshold {:.17g}\n", state.split_threshold);
    out += fmt::format("adam_step {}\n", state.adam.step);
    out += fmt::format("moments {}\n", state.adam.m.size());
    for (std::size_t i = 0; i < state.adam.m.size(); ++i)
        out += fmt::format("{:.17g} {:.17g}\n", state.adam.m[i], state.adam.v[i]);
    out += fmt::format("accumulator {}\n", state.acc.size());
    for (std::size_t i = 0; i < state.acc.size(); ++i)
        out += fmt::format("{:.17g} {:.17g} {:.17g} {} {:.17g}\n", state.acc.e_old_sum[i], state.acc.e1_sum[i],
                           state.acc.e2_sum[i], state.acc.denom[i], state.acc.max_screen_radius[i]);
    std::ostringstream rng;
    rng << state.rng;
    out += "rng " + rng.str() + "\n";
    out += fmt::format("history {}\n", state.history.size());
    for (const MetricsRow& r : state.history)
        out += fmt::format("{} {:.17g} {:.17g} {:.17g} {} {:.17g}\n", r.iter, r.loss, r.psnr, r.ssim, r.n_gauss,
                           r.iter_ms);
    out += fmt::format("densify {}\n", state.densify_log.size());
    for (const DensifyRow& d : state.densify_log)
        out += fmt::format("{} {} {} {} {} {:.17g} {:.17g} {}\n", d.iter, d.report.split, d.report.cloned,
                           d.report.pruned, d.report.total, d.report.split_threshold, d.report.clone_threshold,
                           d.report.calibrated ? 1 : 0);
    out += fmt::format("losses {}\n", state.loss_history.size());
    for (double v : state.loss_history) out += fmt::format("{:.17g}\n", v);
    return out;
}

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::vector<Camera>& cams,
                     const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write checkpoint '{}'", path.string()));
    out << format_checkpoint(state, cfg, cams);
    if (!out) throw Error(fmt::format("failed writing checkpoint '{}'", path.string()));
}

namespace {

class SectionReader {
  public:
    explicit SectionReader(std::istream& in, int first_line) : in_(in), line_(first_line) {}

    std::istringstream line() {
        std::string text;
        if (!std::getline(in_, text)) throw ParseError(line_ + 1, "unexpected end of checkpoint");
        ++line_;
        return std::istringstream(text);
    }

    std::size_t header(const char* keyword) {
        auto is = line();
        std::string word;
        long long count = -1;
        is >> word >> count;
        if (word != keyword || count < 0) throw ParseError(line_, fmt::format("expected '{} <value>'", keyword));
        return static_cast<std::size_t>(count);
    }

    template <typename... T>
    void values(T&... out) {
        auto is = line();
        std::string tok;
        ((is >> tok, read(tok, out)), ...);
        if (is.fail()) throw ParseError(line_, "too few fields");
    }

    int number() const { return line_; }

  private:
    void read(const std::string& tok, double& v) {
        char* end = nullptr;
        v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str()) throw ParseError(line_, fmt::format("'{}' is not a number", tok));
    }
    template <typename I>
    void read(const std::string& tok, I& v) {
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size())
            throw ParseError(line_, fmt::format("'{}' is not an integer", tok));
    }

    std::istream& in_;
    int line_;
};

}  // namespace

TrainState parse_checkpoint(const std::string& text, const TrainConfig& cfg) {
    const std::string marker = "checkpoint 1\n";
    const auto pos = text.find("\n" + marker);
    if (pos == std::string::npos) throw Error("not a checkpoint: missing 'checkpoint 1' section");
    const SceneFile scene = parse_scene(text.substr(0, pos + 1));
    const int scene_lines = static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos) + 1, '\n'));
    std::istringstream in(text.substr(pos + 1 + marker.size()));
    SectionReader r(in, scene_lines + 1);

    TrainState s;
    s.gaussians = scene.gaussians;
    std::uint64_t hash = 0;
    {
        auto is = r.line();
        std::string word;
        is >> word >> hash;
        if (word != "config_hash" || is.fail()) throw ParseError(r.number(), "expected 'config_hash <value>'");
    }
    if (hash != config_hash(cfg)) throw Error("checkpoint was written with a different configuration");
    s.iteration = static_cast<int>(r.header("iteration"));
    {
        auto is = r.line();
        std::string word, value;
        is >> word >> value;
        if (word != "split_threshold") throw ParseError(r.number(), "expected 'split_threshold <value>'");
        s.split_threshold = std::strtod(value.c_str(), nullptr);
    }
    s.adam.step = static_cast<long>(r.header("adam_step"));
    const std::size_t n_moments = r.header("moments");
    if (n_moments != s.gaussians.size() * kParamsPerGaussian)
        throw ParseError(r.number(), "moment count does not match the gaussians");
    s.adam.resize(n_moments);
    for (std::size_t i = 0; i < n_moments; ++i) r.values(s.adam.m[i], s.adam.v[i]);
    const std::size_t n_acc = r.header("accumulator");
    if (n_acc != s.gaussians.size()) throw ParseError(r.number(), "accumulator count does not match the gaussians");
    s.acc.resize(n_acc);
    for (std::size_t i = 0; i < n_acc; ++i)
        r.values(s.acc.e_old_sum[i], s.acc.e1_sum[i], s.acc.e2_sum[i], s.acc.denom[i], s.acc.max_screen_radius[i]);
    {
        auto is = r.line();
        std::string word;
        is >> word;
        if (word != "rng") throw ParseError(r.number(), "expected 'rng <state>'");
        is >> s.rng;
        if (is.fail()) throw ParseError(r.number(), "malformed rng state");
    }
    s.history.resize(r.header("history"));
    for (MetricsRow& row : s.history) r.values(row.iter, row.loss, row.psnr, row.ssim, row.n_gauss, row.iter_ms);
    s.densify_log.resize(r.header("densify"));
    for (DensifyRow& d : s.densify_log) {
        int calibrated = 0;
        r.values(d.iter, d.report.split, d.report.cloned, d.report.pruned, d.report.total, d.report.split_threshold,
                 d.report.clone_threshold, calibrated);
        d.report.calibrated = calibrated != 0;
    }
    s.loss_history.resize(r.header("losses"));
    for (double& v : s.loss_history) r.values(v);
    return s;
}

TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open checkpoint '{}'", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_checkpoint(ss.str(), cfg);
}

std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "iter,loss,psnr,ssim,n_gauss,iter_ms\n";
    for (const MetricsRow& r : rows)
        out += fmt::format("{},{:.10g},{:.6f},{:.6f},{},{:.3f}\n", r.iter, r.loss, r.psnr, r.ssim, r.n_gauss, r.iter_ms);
    return out;
}

std::string format_densify_csv(const std::vector<DensifyRow>& rows) {
    std::string out = "iter,split,clone,prune,total\n";
    for (const DensifyRow& d : rows)
        out += fmt::format("{},{},{},{},{}\n", d.iter, d.report.split, d.report.cloned, d.report.pruned, d.report.total);
    return out;
}

}  // namespace mvgs
