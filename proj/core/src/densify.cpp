#include "mvgs/densify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "mvgs/error.hpp"

namespace mvgs {

MetricMode parse_metric_mode(const std::string& name) {
    if (name == "e_old") return MetricMode::e_old;
    if (name == "multi_view") return MetricMode::multi_view;
    throw Error(fmt::format("unknown metric mode '{}'", name));
}

const char* to_string(MetricMode mode) { return mode == MetricMode::e_old ? "e_old" : "multi_view"; }

void AdcConfig::validate() const {
    if (!(prune_opacity > 0.0 && prune_opacity < 1.0)) throw Error("adc: prune_opacity must lie in (0, 1)");
    if (split_count < 2) throw Error("adc: split_count must be at least 2");
    if (interval < 1) throw Error("adc: interval must be at least 1");
    if (!(split_factor > 0.0)) throw Error("adc: split_factor must be positive");
    if (batch_views < 1) throw Error("adc: batch_views must be at least 1");
    if (!(opacity_reset_ceiling > 0.0 && opacity_reset_ceiling <= 1.0))
        throw Error("adc: opacity_reset_ceiling must lie in (0, 1]");
}

bool AdcConfig::due(int iteration) const {
    return iteration >= start_iter && iteration <= stop_iter && iteration % interval == 0;
}

namespace {

// Threshold between the k-th and (k+1)-th largest value, selecting exactly k
// strictly greater entries when there are no ties.
double threshold_for_count(std::vector<double> values, std::size_t k) {
    std::sort(values.begin(), values.end(), std::greater<>());
    if (k >= values.size()) return 0.0;
    return k == 0 ? values[0] : 0.5 * (values[k - 1] + values[k]);
}

}  // namespace

AdcResult adc_step(const std::vector<Gaussian3D>& gaussians, const GradAccumulator& acc, AdcConfig& cfg, Rng& rng) {
    cfg.validate();
    if (acc.size() != gaussians.size()) throw Error("adc_step: accumulator size does not match the gaussians");
    const std::vector<DensifyMetrics> metrics = densify_metrics(acc);
    const std::size_t n = gaussians.size();

    AdcResult result;
    AdcReport& report = result.report;
    std::vector<std::uint8_t> large(n);
    for (std::size_t i = 0; i < n; ++i) large[i] = gaussians[i].max_scale() > cfg.size_threshold_world ? 1 : 0;

    std::vector<std::uint8_t> split(n, 0);
    std::vector<std::uint8_t> clone(n, 0);
    if (cfg.metric_mode == MetricMode::e_old) {
        report.split_threshold = report.clone_threshold = cfg.grad_threshold;
        for (std::size_t i = 0; i < n; ++i) {
            if (!metrics[i].valid || !(metrics[i].e_old > cfg.grad_threshold)) continue;
            (large[i] ? split : clone)[i] = 1;
        }
    } else {
        report.clone_threshold = cfg.grad_threshold;
        if (!(cfg.grad_threshold_split > 0.0)) {
            // match the number of large gaussians an e2 test at grad_threshold would split
            std::vector<double> e1_large;
            std::size_t target = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!metrics[i].valid || !large[i]) continue;
                e1_large.push_back(metrics[i].e1);
                if (metrics[i].e2 > cfg.grad_threshold) ++target;
            }
            if (target > 0) {
                cfg.grad_threshold_split = threshold_for_count(std::move(e1_large), target);
                report.calibrated = true;
            }
        }
        report.split_threshold =
            cfg.grad_threshold_split > 0.0 ? cfg.grad_threshold_split : std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!metrics[i].valid) continue;
            if (large[i] && metrics[i].e1 > report.split_threshold) split[i] = 1;
            if (!large[i] && metrics[i].e2 > report.clone_threshold) clone[i] = 1;
        }
    }

    // gaussian cap: admit candidates in index order while the budget lasts
    const std::size_t cap = cfg.max_gaussians;
    std::size_t projected = n;
    const auto split_cost = static_cast<std::size_t>(cfg.split_count - 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (clone[i]) {
            if (projected + 1 > cap) clone[i] = 0;
            else ++projected;
        } else if (split[i]) {
            if (projected + split_cost > cap) split[i] = 0;
            else projected += split_cost;
        }
    }

    std::vector<Gaussian3D> out;
    std::vector<int> origin;
    out.reserve(projected);
    for (std::size_t i = 0; i < n; ++i) {
        if (split[i]) continue;
        out.push_back(gaussians[i]);
        origin.push_back(static_cast<int>(i));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!clone[i]) continue;
        out.push_back(gaussians[i]);
        origin.push_back(-1);
        ++report.cloned;
    }
    const double shrink = std::log(cfg.split_factor);
    for (std::size_t i = 0; i < n; ++i) {
        if (!split[i]) continue;
        const Gaussian3D& parent = gaussians[i];
        const Mat3 rot = rotation_from_unit_quat(normalized(parent.rotation));
        const Vec3 s = parent.scale();
        for (int k = 0; k < cfg.split_count; ++k) {
            const Vec3 z{rng.normal() * s.x, rng.normal() * s.y, rng.normal() * s.z};
            Gaussian3D child = parent;
            child.mean = parent.mean + rot * z;
            child.log_scale = parent.log_scale - Vec3{shrink, shrink, shrink};
            out.push_back(child);
            origin.push_back(-1);
        }
        ++report.split;
    }

    const double min_opacity = cfg.prune_opacity * cfg.batch_views;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool prune = out[i].opacity() < min_opacity || out[i].max_scale() > cfg.prune_scale_max;
        if (prune) {
            ++report.pruned;
            continue;
        }
        result.gaussians.push_back(out[i]);
        result.origin.push_back(origin[i]);
    }
    report.total = static_cast<int>(result.gaussians.size());
    return result;
}

void opacity_reset(std::vector<Gaussian3D>& gaussians, double ceiling) {
    if (!(ceiling > 0.0 && ceiling <= 1.0)) throw Error("opacity_reset: ceiling must lie in (0, 1]");
    if (ceiling >= 1.0) return;
    const double cap = logit(ceiling);
    for (Gaussian3D& g : gaussians) g.opacity_logit = std::min(g.opacity_logit, cap);
}

}  // namespace mvgs
