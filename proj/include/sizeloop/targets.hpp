#pragma once

#include <optional>

#include "sizeloop/config.hpp"

namespace sizeloop {

/// Specification targets plus the testbench constants that come with them
/// (supplies and load capacitance). `power_max` is the only optional bound.
struct DesignTargets {
    double av_db_min = 0.0;
    double gbw_hz_min = 0.0;
    double pm_deg_min = 0.0;
    double sr_min = 0.0;  // V/s, applies to both slew directions
    std::optional<double> power_max;
    double vdd = 0.0;
    double vss = 0.0;
    double cl = 0.0;

    void validate() const {
        if (!(av_db_min > 0.0 && gbw_hz_min > 0.0 && pm_deg_min > 0.0 && sr_min > 0.0))
            throw ConfigError("target minima must all be > 0");
        if (power_max && !(*power_max > 0.0))
            throw ConfigError("power_max must be > 0 when set");
        if (!(vdd > vss)) throw ConfigError("vdd must exceed vss");
        if (!(cl > 0.0)) throw ConfigError("cl must be > 0");
    }

    static DesignTargets from_config(const KeyValueConfig& cfg) {
        DesignTargets t;
        t.av_db_min = cfg.require_number("av_min");
        t.gbw_hz_min = cfg.require_number("gbw_min");
        t.pm_deg_min = cfg.require_number("pm_min");
        t.sr_min = cfg.require_number("sr_min");
        if (cfg.has("power_max")) t.power_max = cfg.get_number("power_max");
        t.vdd = cfg.require_number("vdd");
        t.vss = cfg.require_number("vss");
        t.cl = cfg.require_number("cl");
        t.validate();
        return t;
    }

    static DesignTargets load(const std::string& path) {
        return from_config(KeyValueConfig::load(path));
    }
};

} // namespace sizeloop
