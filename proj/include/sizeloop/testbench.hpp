#pragma once

#include "sizeloop/ac_analysis.hpp"
#include "sizeloop/transient.hpp"

namespace sizeloop {

/// Unity-gain testbench settings shared by the AC and transient analyses.
struct TestbenchConfig {
    std::string output_node = "OUT";
    std::string input_source = "VIN";
    std::string cut_device;          // empty = auto-detect
    double step_amplitude = 0.0;     // 0 = 0.4 * (vdd - vss)
    double vdd = 0.0;
    double vss = 0.0;
    double gbw_ref = 100e6;
    AcSweep sweep;
};

struct SimulationOutcome {
    OperatingPoint op;
    MetricSet metrics;
    FrequencyResponse response;
    bool slew_degenerate = false;
};

/// One full "simulation" in the paper's counting: DC OP, loop AC, transient
/// slew in both directions, and static power.
inline SimulationOutcome run_testbench(const Netlist& net, const ProcessCard& card,
                                       const TestbenchConfig& tb,
                                       const SolverOptions& opts = {}) {
    SimulationOutcome out;
    out.op = dc_operating_point(net, card, opts);

    AcConfig ac;
    ac.output_node = tb.output_node;
    ac.cut_device = tb.cut_device;
    ac.mode = AcMode::LoopCut;
    ac.sweep = tb.sweep;
    LoopMetrics lm = ac_loop_metrics(net, card, out.op, ac, &out.response, opts.goff);
    out.metrics.av_db = lm.av_db;
    out.metrics.gbw_hz = lm.gbw_hz;
    out.metrics.pm_deg = lm.pm_deg;

    TransientConfig tr;
    tr.input_source = tb.input_source;
    tr.output_node = tb.output_node;
    tr.step_amplitude = tb.step_amplitude != 0.0 ? tb.step_amplitude : 0.4 * (tb.vdd - tb.vss);
    tr.gbw_ref = tb.gbw_ref;
    SlewResult sr = transient_slew(net, card, tr, opts);
    out.metrics.sr_pos = sr.sr_pos;
    out.metrics.sr_neg = sr.sr_neg;
    out.slew_degenerate = sr.degenerate;

    out.metrics.power_w = power(out.op, net);
    return out;
}

} // namespace sizeloop
