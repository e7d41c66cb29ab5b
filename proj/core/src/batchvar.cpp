#include "mvgs/batchvar.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "mvgs/error.hpp"

namespace mvgs {

BatchStrategy parse_batch_strategy(const std::string& name) {
    if (name == "single_view") return BatchStrategy::single_view;
    if (name == "multi_view") return BatchStrategy::multi_view;
    throw Error(fmt::format("unknown batch strategy '{}'", name));
}

const char* to_string(BatchStrategy s) { return s == BatchStrategy::single_view ? "single_view" : "multi_view"; }

void MiniBatchSpec::validate() const {
    if (views_per_batch < 1) throw Error("batch: views_per_batch must be at least 1");
    if (strategy == BatchStrategy::single_view && views_per_batch != 1)
        throw Error("batch: single_view requires views_per_batch = 1");
    if (pixels_per_batch < 0) throw Error("batch: pixels_per_batch must be non-negative");
}

RenderPlan sample_batch(const MiniBatchSpec& spec, const std::vector<int>& candidates, const std::vector<Camera>& cams,
                        Rng& rng, RenderMode mode, int tile_size, int warp) {
    spec.validate();
    const int n = static_cast<int>(candidates.size());
    if (spec.views_per_batch > n)
        throw Error(fmt::format("batch: {} views requested but only {} available", spec.views_per_batch, n));

    if (spec.strategy == BatchStrategy::single_view) {
        const int v = candidates[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(n)))];
        return with_mode(make_full_plan({v}, cams, tile_size), mode, cams, warp);
    }

    std::vector<int> views;
    for (int i : rng.choose(n, spec.views_per_batch)) views.push_back(candidates[static_cast<std::size_t>(i)]);
    const Camera& cam0 = cams.at(static_cast<std::size_t>(views[0]));
    for (int v : views) {
        const Camera& c = cams.at(static_cast<std::size_t>(v));
        if (c.width != cam0.width || c.height != cam0.height)
            throw Error("batch: multi_view batches need views of one image size");
    }
    const long total = cam0.pixel_count();
    const long budget = spec.pixels_per_batch > 0 ? spec.pixels_per_batch : total;
    if (budget > total * spec.views_per_batch) throw Error("batch: pixels_per_batch exceeds the selected views");
    // positions are shared by the views, so the merged layout holds at most one image
    if (budget > total) throw Error("batch: pixels_per_batch exceeds one image for a merged multi-view batch");

    const auto b = static_cast<std::size_t>(spec.views_per_batch);
    const int n_tiles = tile_grid(cam0, tile_size).count();
    std::vector<std::vector<std::vector<int>>> sets(b, std::vector<std::vector<int>>(static_cast<std::size_t>(n_tiles)));
    long seen = 0;
    for (int t = 0; t < n_tiles; ++t) {
        std::vector<int> pixels = tile_pixels(cam0, tile_size, t);
        const long before = seen * budget / total;
        seen += static_cast<long>(pixels.size());
        const long take = seen * budget / total - before;
        rng.shuffle(pixels);
        for (std::size_t s = 0; s < b; ++s) {
            const long lo = static_cast<long>(s) * take / static_cast<long>(b);
            const long hi = static_cast<long>(s + 1) * take / static_cast<long>(b);
            sets[s][static_cast<std::size_t>(t)].assign(pixels.begin() + lo, pixels.begin() + hi);
        }
    }
    return make_partial_plan(mode, views, std::move(sets), cams, tile_size, warp);
}

RenderPlan sample_batch(const MiniBatchSpec& spec, const std::vector<int>& candidates, const std::vector<Camera>& cams,
                        std::uint64_t draw, RenderMode mode, int tile_size, int warp) {
    Rng rng = Rng::derive(spec.seed, draw);
    return sample_batch(spec, candidates, cams, rng, mode, tile_size, warp);
}

namespace {

bool disjoint(const RenderPlan& plan) {
    if (plan.views.size() < 2) return true;
    for (std::size_t t = 0; t < plan.pixel_sets[0].size(); ++t) {
        std::vector<int> all;
        for (const auto& view : plan.pixel_sets) {
            if (t >= view.size()) return false;
            all.insert(all.end(), view[t].begin(), view[t].end());
        }
        std::sort(all.begin(), all.end());
        if (std::adjacent_find(all.begin(), all.end()) != all.end()) return false;
    }
    return true;
}

}  // namespace

BatchEval evaluate_batch(const RenderPlan& plan, const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                         const ObjectiveConfig& obj, ThreadPool* pool) {
    BatchEval ev;
    ev.forward = render(plan, gaussians, data.cameras, obj.render, pool);
    PixelGrads pg = PixelGrads::zeros(ev.forward);
    const double bg = obj.render.background_t;
    bool merged = plan.views.size() == 1 || disjoint(plan);
    if (merged && plan.views.size() > 1) {
        for (std::size_t s = 1; s < plan.views.size(); ++s) {
            const auto& c = data.cameras[static_cast<std::size_t>(plan.views[s])];
            const auto& c0 = data.cameras[static_cast<std::size_t>(plan.views[0])];
            if (c.width != c0.width || c.height != c0.height) merged = false;
        }
    }
    if (merged) {
        const MergedFrame frame =
            plan.views.size() == 1
                ? view_frame(ev.forward.views[0], data.images[static_cast<std::size_t>(plan.views[0])],
                             data.cameras[static_cast<std::size_t>(plan.views[0])], 0, bg)
                : merged_frame(plan, ev.forward, data.images, data.cameras, bg);
        const LossResult lr = frame_loss(obj.loss, frame, obj.window, obj.lambda, pool);
        ev.loss = lr.value;
        ev.sparse_windows = lr.sparse_windows;
        scatter_grad(frame, lr.grad, pg);
    } else {
        const double k = 1.0 / static_cast<double>(plan.views.size());
        for (std::size_t s = 0; s < plan.views.size(); ++s) {
            const auto v = static_cast<std::size_t>(plan.views[s]);
            const MergedFrame frame =
                view_frame(ev.forward.views[s], data.images[v], data.cameras[v], static_cast<int>(s), bg);
            LossResult lr = frame_loss(obj.loss, frame, obj.window, obj.lambda, pool);
            ev.loss += k * lr.value;
            ev.sparse_windows += lr.sparse_windows;
            for (double& g : lr.grad) g *= k;
            scatter_grad(frame, lr.grad, pg);
        }
    }
    ev.backward = backward(plan, ev.forward, gaussians, data.cameras, pg, obj.render, pool);
    return ev;
}

VarianceReport variance_of(const std::vector<std::vector<double>>& samples) {
    if (samples.size() < 2) throw Error("variance needs at least 2 samples");
    const std::size_t dim = samples[0].size();
    VarianceReport r;
    r.n_samples = static_cast<int>(samples.size());
    std::vector<double> mean(dim, 0.0);
    for (const auto& g : samples) {
        if (g.size() != dim) throw Error("variance samples differ in dimension");
        double sq = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            sq += g[i] * g[i];
            mean[i] += g[i];
        }
        r.mean_sq_norm += sq;
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    r.mean_sq_norm *= inv;
    for (double& m : mean) {
        m *= inv;
        r.sq_norm_of_mean += m * m;
    }
    r.variance = std::max(0.0, r.mean_sq_norm - r.sq_norm_of_mean);
    for (const auto& g : samples)
        for (std::size_t i = 0; i < dim; ++i) r.variance_two_pass += (g[i] - mean[i]) * (g[i] - mean[i]);
    r.variance_two_pass *= inv;
    return r;
}

VarianceReport estimate_grad_variance(const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                                      const std::vector<int>& candidates, const MiniBatchSpec& spec, int n_samples,
                                      const ObjectiveConfig& obj, ThreadPool* pool) {
    if (n_samples < 2) throw Error("estimate_grad_variance: n_samples must be at least 2");
    std::vector<std::vector<double>> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (int k = 0; k < n_samples; ++k) {
        const RenderPlan plan = sample_batch(spec, candidates, data.cameras, static_cast<std::uint64_t>(k),
                                             RenderMode::thread_efficient, obj.render.tile_size, obj.render.warp);
        const BatchEval ev = evaluate_batch(plan, gaussians, data, obj, pool);
        std::vector<double> g;
        g.reserve(gaussians.size() * 3);
        for (const Vec3& d : ev.backward.grads.d_mean) {
            g.push_back(d.x);
            g.push_back(d.y);
            g.push_back(d.z);
        }
        samples.push_back(std::move(g));
    }
    VarianceReport r = variance_of(samples);
    r.strategy = spec.strategy;
    r.views_per_batch = spec.views_per_batch;
    r.seed = spec.seed;
    return r;
}

double FiniteDist::mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) m += probs[i] * values[i];
    return m;
}

double FiniteDist::variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) v += probs[i] * (values[i] - m) * (values[i] - m);
    return v;
}

namespace {

void check_setup(const LemmaOneSetup& setup, int m) {
    const int n = static_cast<int>(setup.dists.size());
    if (n < 1) throw Error("lemma1: at least one distribution required");
    if (setup.samples_per_set < 1) throw Error("lemma1: K must be at least 1");
    if (m < 1 || m > n) throw Error(fmt::format("lemma1: m = {} must lie in [1, {}]", m, n));
    if ((n * setup.samples_per_set) % m != 0)
        throw Error(fmt::format("lemma1: m = {} does not divide N*K = {}", m, n * setup.samples_per_set));
    for (const FiniteDist& d : setup.dists) {
        if (d.values.empty() || d.values.size() != d.probs.size()) throw Error("lemma1: malformed distribution");
        double s = 0.0;
        for (double p : d.probs) s += p;
        if (std::abs(s - 1.0) > 1e-12) throw Error("lemma1: probabilities must sum to 1");
    }
}

// every m-subset of [0, n) in lexicographic order
std::vector<std::vector<int>> subsets(int n, int m) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    std::function<void(int)> rec = [&](int start) {
        if (static_cast<int>(cur.size()) == m) {
            out.push_back(cur);
            return;
        }
        for (int i = start; i < n; ++i) {
            cur.push_back(i);
            rec(i + 1);
            cur.pop_back();
        }
    };
    rec(0);
    return out;
}

double state_count(const LemmaOneSetup& setup, int m) {
    const int n = static_cast<int>(setup.dists.size());
    const int draws = n * setup.samples_per_set / m;
    double total = 0.0;
    for (const auto& s : subsets(n, m)) {
        double c = 1.0;
        for (int j : s) c *= std::pow(static_cast<double>(setup.dists[static_cast<std::size_t>(j)].values.size()), draws);
        total += c;
    }
    return total;
}

}  // namespace

double lemma1_sample(const LemmaOneSetup& setup, int m, Rng& rng) {
    check_setup(setup, m);
    const int n = static_cast<int>(setup.dists.size());
    const int draws = n * setup.samples_per_set / m;
    double sum = 0.0;
    for (int j : rng.choose(n, m)) {
        const FiniteDist& d = setup.dists[static_cast<std::size_t>(j)];
        for (int k = 0; k < draws; ++k) {
            double u = rng.uniform();
            std::size_t pick = d.values.size() - 1;
            for (std::size_t i = 0; i < d.probs.size(); ++i) {
                if (u < d.probs[i]) {
                    pick = i;
                    break;
                }
                u -= d.probs[i];
            }
            sum += d.values[pick];
        }
    }
    return sum / n;
}

bool lemma1_enumerable(const LemmaOneSetup& setup, int m, double max_states) {
    check_setup(setup, m);
    return state_count(setup, m) <= max_states;
}

double lemma1_exact(const LemmaOneSetup& setup, int m, double max_states) {
    check_setup(setup, m);
    if (state_count(setup, m) > max_states) throw Error("lemma1: state space too large to enumerate");
    const int n = static_cast<int>(setup.dists.size());
    const int draws = n * setup.samples_per_set / m;
    const auto all = subsets(n, m);
    const long double p_subset = 1.0L / static_cast<long double>(all.size());

    // visit(z, p) for every joint outcome
    auto enumerate = [&](const std::function<void(long double, long double)>& visit) {
        for (const auto& s : all) {
            std::function<void(std::size_t, int, long double, long double)> rec = [&](std::size_t slot, int k,
                                                                                      long double sum, long double p) {
                if (slot == s.size()) {
                    visit(sum / n, p);
                    return;
                }
                if (k == draws) {
                    rec(slot + 1, 0, sum, p);
                    return;
                }
                const FiniteDist& d = setup.dists[static_cast<std::size_t>(s[slot])];
                for (std::size_t i = 0; i < d.values.size(); ++i)
                    if (d.probs[i] > 0.0) rec(slot, k + 1, sum + d.values[i], p * d.probs[i]);
            };
            rec(0, 0, 0.0L, p_subset);
        }
    };
    long double mean = 0.0L;
    enumerate([&](long double z, long double p) { mean += p * z; });
    long double var = 0.0L;
    enumerate([&](long double z, long double p) { var += p * (z - mean) * (z - mean); });
    return static_cast<double>(var);
}

double lemma1_closed_form(const LemmaOneSetup& setup, int m) {
    check_setup(setup, m);
    const auto n = static_cast<double>(setup.dists.size());
    const double k = setup.samples_per_set;
    double sum_var = 0.0, sum_mu = 0.0, sum_mu2 = 0.0;
    for (const FiniteDist& d : setup.dists) {
        const double mu = d.mean();
        sum_var += d.variance();
        sum_mu += mu;
        sum_mu2 += mu * mu;
    }
    const double sigma_mu2 = sum_mu2 / n - (sum_mu / n) * (sum_mu / n);
    const double spread = n > 1.0 ? k * k * sigma_mu2 / (n - 1.0) * (n / m - 1.0) : 0.0;
    return k / (n * n) * sum_var + spread;
}

std::vector<LemmaOneRow> lemma1_experiment(const LemmaOneSetup& setup, const std::vector<int>& ms, int n_trials,
                                           Rng& rng, int n_batches) {
    if (n_batches < 2 || n_trials < 2 * n_batches) throw Error("lemma1: need at least two trials per batch");
    std::vector<LemmaOneRow> rows;
    for (int m : ms) {
        check_setup(setup, m);
        LemmaOneRow row;
        row.m = m;
        std::vector<double> z(static_cast<std::size_t>(n_trials));
        for (double& v : z) v = lemma1_sample(setup, m, rng);

        auto sample_var = [](const double* x, std::size_t count) {
            double mean = 0.0;
            for (std::size_t i = 0; i < count; ++i) mean += x[i];
            mean /= static_cast<double>(count);
            double v = 0.0;
            for (std::size_t i = 0; i < count; ++i) v += (x[i] - mean) * (x[i] - mean);
            return v / static_cast<double>(count - 1);
        };
        row.var_mc = sample_var(z.data(), z.size());

        // batch-means interval on the variance estimate
        const std::size_t per = z.size() / static_cast<std::size_t>(n_batches);
        std::vector<double> batch(static_cast<std::size_t>(n_batches));
        for (std::size_t b = 0; b < batch.size(); ++b) batch[b] = sample_var(z.data() + b * per, per);
        double bm = 0.0;
        for (double v : batch) bm += v;
        bm /= static_cast<double>(batch.size());
        double bv = 0.0;
        for (double v : batch) bv += (v - bm) * (v - bm);
        bv /= static_cast<double>(batch.size() - 1);
        row.ci_half = 2.576 * std::sqrt(bv / static_cast<double>(batch.size()));

        row.var_closed = lemma1_closed_form(setup, m);
        if (lemma1_enumerable(setup, m)) {
            row.var_exact = lemma1_exact(setup, m);
            row.has_exact = true;
        }
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mvgs
