#pragma once

#include "sizeloop/plan_exec.hpp"

namespace sizeloop {

enum class MetricKind { Linear, LogDb, Degrees };

inline const char* to_string(MetricKind k) {
    switch (k) {
        case MetricKind::Linear: return "LINEAR";
        case MetricKind::LogDb: return "LOG_DB";
        default: return "DEGREES";
    }
}

/// Positive error always means over-prediction (predicted > measured).
/// Units: % for LINEAR, dB for LOG_DB, degrees for DEGREES.
struct PredictionError {
    std::string metric;
    MetricKind kind = MetricKind::Linear;
    double predicted = 0.0;
    double measured = 0.0;
    double error = 0.0;
    bool undefined = false;  // linear metric measured at exactly zero
};

/// GBW, SR and power are linear; A_v is logarithmic (dB); PM is additive in
/// degrees.
inline std::vector<PredictionError> compute_errors(const PredictedMetrics& predicted,
                                                   const MetricSet& measured) {
    std::vector<PredictionError> out;
    auto linear = [&out](const std::string& name, double pred, double meas) {
        PredictionError e{name, MetricKind::Linear, pred, meas, 0.0, false};
        if (meas == 0.0) e.undefined = true;
        else e.error = (pred - meas) / meas * 100.0;
        out.push_back(e);
    };
    out.push_back({"av", MetricKind::LogDb, predicted.av_db, measured.av_db,
                   predicted.av_db - measured.av_db, false});
    linear("gbw", predicted.gbw_hz, measured.gbw_hz);
    out.push_back({"pm", MetricKind::Degrees, predicted.pm_deg, measured.pm_deg,
                   predicted.pm_deg - measured.pm_deg, false});
    linear("sr_pos", predicted.sr_pos, measured.sr_pos);
    linear("sr_neg", predicted.sr_neg, measured.sr_neg);
    linear("power", predicted.power_w, measured.power_w);
    return out;
}

struct FeedbackConfig {
    double cap_linear_pct = 200.0;
    double cap_db = 12.0;
    double cap_deg = 20.0;
    double pm_catastrophe_threshold = 20.0;  // degrees
};

struct RoundRecord {
    int index = 0;
    DesignVariables variables;
    PredictedMetrics predicted;
    MetricSet measured;
    std::vector<PredictionError> errors;
    bool passed = false;
    DesignTargets design_targets_used;
};

/// Append-only; round indices contiguous from 0.
struct RoundHistory {
    std::vector<RoundRecord> rounds;

    void append(RoundRecord rec) {
        rec.index = static_cast<int>(rounds.size());
        rounds.push_back(std::move(rec));
    }
};

namespace detail {

inline double clamp_margin(double error, double cap) {
    return std::min(std::max(error, 0.0), cap);
}

} // namespace detail

/// Per-metric margin inflation from the latest round's over-predictions.
/// Margins are recomputed fresh each round from `base`, never compounded.
/// Under-predictions leave the base target untouched, and the PM margin is
/// suppressed when the prediction is catastrophically low while the measured
/// value already passes. The power bound is a maximum and is never inflated.
inline DesignTargets derive_design_targets(const DesignTargets& base,
                                           const std::vector<PredictionError>& errors,
                                           const RoundHistory& history,
                                           const FeedbackConfig& cfg = {}) {
    (void)history;  // margins are memoryless by design
    DesignTargets design = base;
    double sr_error = 0.0;
    for (const auto& e : errors) {
        if (e.undefined) continue;
        if (e.metric == "gbw") {
            design.gbw_hz_min =
                base.gbw_hz_min * (1.0 + detail::clamp_margin(e.error, cfg.cap_linear_pct) / 100.0);
        } else if (e.metric == "av") {
            design.av_db_min = base.av_db_min + detail::clamp_margin(e.error, cfg.cap_db);
        } else if (e.metric == "pm") {
            bool catastrophic_but_passing =
                e.predicted < cfg.pm_catastrophe_threshold && e.measured >= base.pm_deg_min;
            if (!catastrophic_but_passing)
                design.pm_deg_min = base.pm_deg_min + detail::clamp_margin(e.error, cfg.cap_deg);
        } else if (e.metric == "sr_pos" || e.metric == "sr_neg") {
            sr_error = std::max(sr_error, e.error);
        }
    }
    design.sr_min = base.sr_min * (1.0 + detail::clamp_margin(sr_error, cfg.cap_linear_pct) / 100.0);
    return design;
}

struct ConvergenceVerdict {
    bool pass = false;
    std::vector<std::pair<std::string, bool>> per_spec;

    [[nodiscard]] bool spec(const std::string& name) const {
        for (const auto& [n, ok] : per_spec)
            if (n == name) return ok;
        return false;
    }
};

/// Inclusive comparisons against the base targets; no tolerance anywhere.
inline ConvergenceVerdict check_convergence(const MetricSet& measured,
                                            const DesignTargets& base) {
    ConvergenceVerdict v;
    v.per_spec.emplace_back("av", measured.av_db >= base.av_db_min);
    v.per_spec.emplace_back("gbw", measured.gbw_hz >= base.gbw_hz_min);
    v.per_spec.emplace_back("pm", measured.pm_deg >= base.pm_deg_min);
    v.per_spec.emplace_back("sr_pos", measured.sr_pos >= base.sr_min);
    v.per_spec.emplace_back("sr_neg", measured.sr_neg >= base.sr_min);
    if (base.power_max) v.per_spec.emplace_back("power", measured.power_w <= *base.power_max);
    v.pass = true;
    for (const auto& [name, ok] : v.per_spec) v.pass = v.pass && ok;
    return v;
}

} // namespace sizeloop
