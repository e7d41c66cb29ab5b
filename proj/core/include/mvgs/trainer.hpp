#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mvgs/batchvar.hpp"
#include "mvgs/densify.hpp"
#include "mvgs/error.hpp"
#include "mvgs/gradients.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

class ThreadPool;

struct LearningRates {
    double mean_start = 1.6e-4;
    double mean_end = 1.6e-6;
    double log_scale = 5e-3;
    double quat = 1e-3;
    double opacity = 5e-2;
    double color = 2.5e-3;

    /// Exponential interpolation from mean_start to mean_end over [0, iterations].
    double mean_at(int iteration, int iterations) const;
};

struct TrainConfig {
    int iterations = 2000;
    std::uint64_t seed = 0;
    int eval_every = 100;
    int holdout_every = 8;  // views with index % holdout_every == 0 are held out; 0 keeps all for training
    int init_gaussians = 100;
    RenderMode render_mode = RenderMode::thread_efficient;
    LearningRates lr;
    ObjectiveConfig objective;
    MiniBatchSpec batch;
    bool adc_enabled = true;
    AdcConfig adc;
    bool record_timing = true;
    std::filesystem::path dump_path;  // where a NaN abort writes the offending gaussians

    void validate() const;
};

/// Flat key = value view of a config; keys are the documented config keys.
std::map<std::string, std::string> config_to_map(const TrainConfig& cfg);
/// Throws UnknownKeyError for keys outside the documented set and Error for bad values.
void set_config_key(TrainConfig& cfg, const std::string& key, const std::string& value);
/// Parses `key = value` lines with `#` comments.
std::vector<std::pair<std::string, std::string>> parse_config_text(const std::string& text);
/// Sorted `key = value` lines.
std::string format_resolved_config(const std::map<std::string, std::string>& kv);
std::uint64_t config_hash(const TrainConfig& cfg);

class UnknownKeyError : public Error {
  public:
    explicit UnknownKeyError(const std::string& key) : Error("unknown config key '" + key + "'"), key_(key) {}
    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

class TrainingAborted : public Error {
  public:
    TrainingAborted(const std::string& what, std::vector<int> offenders)
        : Error(what), offenders_(std::move(offenders)) {}
    const std::vector<int>& offenders() const noexcept { return offenders_; }

  private:
    std::vector<int> offenders_;
};

/// Parameters per gaussian in optimizer order: mean(3) log_scale(3) quat(4) opacity_logit(1) color(3).
inline constexpr std::size_t kParamsPerGaussian = 14;

std::vector<double> flatten_params(const std::vector<Gaussian3D>& gaussians);
void unflatten_params(const std::vector<double>& flat, std::vector<Gaussian3D>& gaussians);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    void resize(std::size_t n_params) {
        m.assign(n_params, 0.0);
        v.assign(n_params, 0.0);
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

/// One bias-corrected Adam update of a scalar; t is the 1-based step.
void adam_update(double& param, double grad, double& m, double& v, double lr, long t);

/// Adam over all gaussian parameters with per-group learning rates, followed
/// by quaternion renormalization.
void adam_step(std::vector<Gaussian3D>& gaussians, const ParamGrads& grads, AdamState& state,
               const LearningRates& lr, double mean_lr);

struct MetricsRow {
    int iter = 0;
    double loss = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
    int n_gauss = 0;
    double iter_ms = 0.0;
};

struct DensifyRow {
    int iter = 0;
    AdcReport report;
};

struct TrainState {
    std::vector<Gaussian3D> gaussians;
    AdamState adam;
    GradAccumulator acc;
    Rng rng;
    int iteration = 0;
    double split_threshold = 0.0;  // calibrated e1 threshold, 0 until calibrated
    std::vector<MetricsRow> history;
    std::vector<DensifyRow> densify_log;
    std::vector<double> loss_history;  // one entry per iteration
};

/// Ground-truth dataset: full renders (color and depth) of a scene from each camera.
SceneDataset render_dataset(const std::vector<Gaussian3D>& gaussians, const std::vector<Camera>& cams,
                            const RenderSettings& settings = {}, ThreadPool* pool = nullptr);

std::vector<int> train_views(int n_views, int holdout_every);
std::vector<int> holdout_views(int n_views, int holdout_every);

/// Random initial model: means in the unit ball, small isotropic scales,
/// low opacity, grey-ish colors.
std::vector<Gaussian3D> init_gaussians(std::uint64_t seed, int n);

TrainState init_state(const TrainConfig& cfg, std::vector<Gaussian3D> gaussians);

struct HoldoutMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

HoldoutMetrics evaluate_views(const std::vector<Gaussian3D>& gaussians, const SceneDataset& data,
                              const std::vector<int>& views, const RenderSettings& settings, const SsimWindow& win,
                              ThreadPool* pool = nullptr);

/// Advances state to iteration `until` (cfg.iterations when negative).
void train(TrainState& state, const TrainConfig& cfg, const SceneDataset& data, ThreadPool* pool = nullptr,
           int until = -1);

void save_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::vector<Camera>& cams,
                     const std::filesystem::path& path);
std::string format_checkpoint(const TrainState& state, const TrainConfig& cfg, const std::vector<Camera>& cams);
/// Throws when the checkpoint was written under a different config.
TrainState load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg);
TrainState parse_checkpoint(const std::string& text, const TrainConfig& cfg);

std::string format_metrics_csv(const std::vector<MetricsRow>& rows);
std::string format_densify_csv(const std::vector<DensifyRow>& rows);

}  // namespace mvgs
