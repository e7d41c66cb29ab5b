#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mvgs/gradients.hpp"
#include "mvgs/losses.hpp"
#include "mvgs/rasterizer.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

class ThreadPool;

enum class BatchStrategy { single_view, multi_view };

BatchStrategy parse_batch_strategy(const std::string& name);
const char* to_string(BatchStrategy s);

struct MiniBatchSpec {
    BatchStrategy strategy = BatchStrategy::single_view;
    int views_per_batch = 1;   // B
    int pixels_per_batch = 0;  // 0 means one image's worth
    std::uint64_t seed = 0;

    void validate() const;
};

/// Draws one mini-batch over the given candidate views. single_view renders
/// every pixel of one view; multi_view splits each tile's sampled positions
/// into disjoint per-view chunks, so the merged batch covers pixels_per_batch
/// distinct image positions.
RenderPlan sample_batch(const MiniBatchSpec& spec, const std::vector<int>& candidates, const std::vector<Camera>& cams,
                        Rng& rng, RenderMode mode = RenderMode::thread_efficient, int tile_size = 16, int warp = 32);

/// Same, with the stream derived from (spec.seed, draw).
RenderPlan sample_batch(const MiniBatchSpec& spec, const std::vector<int>& candidates, const std::vector<Camera>& cams,
                        std::uint64_t draw, RenderMode mode = RenderMode::thread_efficient, int tile_size = 16,
                        int warp = 32);

struct ObjectiveConfig {
    LossMode loss = LossMode::l1_dssim3d;
    double lambda = 0.2;
    SsimWindow window;
    RenderSettings render;
};

struct BatchEval {
    double loss = 0.0;
    int sparse_windows = 0;
    RenderOutput forward;
    BackwardResult backward;
};

/// Render, loss and backward for one plan. Single-view and disjoint multi-view
/// plans are scored as one frame; overlapping plans average per-view frames.
BatchEval evaluate_batch(const RenderPlan& plan, const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                         const ObjectiveConfig& obj, ThreadPool* pool = nullptr);

struct VarianceReport {
    int n_samples = 0;
    double mean_sq_norm = 0.0;
    double sq_norm_of_mean = 0.0;
    double variance = 0.0;
    double variance_two_pass = 0.0;
    BatchStrategy strategy = BatchStrategy::single_view;
    int views_per_batch = 1;
    std::uint64_t seed = 0;
};

/// Variance identity over explicit gradient samples.
VarianceReport variance_of(const std::vector<std::vector<double>>& samples);

/// Monte-Carlo variance of the mean-position gradient over n_samples mini-batches
/// drawn from the candidate views of a frozen scene.
VarianceReport estimate_grad_variance(const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                                      const std::vector<int>& candidates, const MiniBatchSpec& spec, int n_samples,
                                      const ObjectiveConfig& obj, ThreadPool* pool = nullptr);

struct FiniteDist {
    std::vector<double> values;
    std::vector<double> probs;

    double mean() const;
    double variance() const;
};

struct LemmaOneSetup {
    std::vector<FiniteDist> dists;  // N
    int samples_per_set = 1;        // K
};

struct LemmaOneRow {
    int m = 1;
    double var_mc = 0.0;
    double ci_half = 0.0;
    double var_exact = 0.0;
    bool has_exact = false;
    double var_closed = 0.0;
};

/// Z = (1/N) * sum of N*K/m draws from each of m distributions chosen without replacement.
double lemma1_sample(const LemmaOneSetup& setup, int m, Rng& rng);
/// Exact variance by enumerating every subset and every joint outcome. Throws
/// when the state space exceeds max_states.
double lemma1_exact(const LemmaOneSetup& setup, int m, double max_states = 1e6);
double lemma1_closed_form(const LemmaOneSetup& setup, int m);
bool lemma1_enumerable(const LemmaOneSetup& setup, int m, double max_states = 1e6);

std::vector<LemmaOneRow> lemma1_experiment(const LemmaOneSetup& setup, const std::vector<int>& ms, int n_trials,
                                           Rng& rng, int n_batches = 20);

}  // namespace mvgs
