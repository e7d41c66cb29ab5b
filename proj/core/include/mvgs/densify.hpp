#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mvgs/gradients.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/scene.hpp"

namespace mvgs {

enum class MetricMode { e_old, multi_view };

MetricMode parse_metric_mode(const std::string& name);
const char* to_string(MetricMode mode);

struct AdcConfig {
    double grad_threshold = 2e-4;        // NDC gradient units; e_old, and e2 for cloning
    double grad_threshold_split = 0.0;   // e1 threshold for splitting; <= 0 calibrates at the first event
    double size_threshold_world = 0.05;  // split when max scale exceeds this, clone otherwise
    double split_factor = 1.6;
    int split_count = 2;
    double prune_opacity = 0.005;  // multiplied by batch_views
    double prune_scale_max = 0.5;
    int interval = 100;
    int start_iter = 500;
    int stop_iter = 1500;
    MetricMode metric_mode = MetricMode::e_old;
    int batch_views = 1;
    std::size_t max_gaussians = 100000;
    double opacity_reset_ceiling = 0.01;  // multiplied by the batch views in training
    int opacity_reset_interval = 0;  // 0 disables

    void validate() const;
    bool due(int iteration) const;
};

struct AdcReport {
    int split = 0;
    int cloned = 0;
    int pruned = 0;
    int total = 0;
    double split_threshold = 0.0;
    double clone_threshold = 0.0;
    bool calibrated = false;  // this event fixed the split threshold
};

struct AdcResult {
    std::vector<Gaussian3D> gaussians;
    std::vector<int> origin;  // source index of each surviving original, -1 for new gaussians
    AdcReport report;
};

/// One densification event. In multi_view mode the calibrated split threshold
/// is written back into cfg.grad_threshold_split.
AdcResult adc_step(const std::vector<Gaussian3D>& gaussians, const GradAccumulator& acc, AdcConfig& cfg, Rng& rng);

/// Clamps every opacity to at most ceiling.
void opacity_reset(std::vector<Gaussian3D>& gaussians, double ceiling);

}  // namespace mvgs
