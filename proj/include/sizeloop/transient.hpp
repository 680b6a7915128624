#pragma once

#include "sizeloop/simulator.hpp"

namespace sizeloop {

struct TransientConfig {
    std::string input_source;
    std::string output_node;
    double step_amplitude = 0.0;  // V, total step (applied +/- A/2 around the source's DC value)
    double gbw_ref = 100e6;       // Hz, sets timestep = 1/(gbw_ref*steps_per_period)
    int steps_per_period = 200;
    int horizon_periods = 50;
};

struct SlewResult {
    double sr_pos = 0.0;  // V/s
    double sr_neg = 0.0;  // V/s
    bool degenerate = false;  // zero step amplitude or flat response
};

namespace detail {

inline Eigen::MatrixXd capacitance_matrix(const Netlist& net, const ProcessCard& card,
                                          const MnaIndex& ix) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(ix.size, ix.size);
    auto pair_cap = [&c](int a, int b, double v) {
        if (a >= 0) c(a, a) += v;
        if (b >= 0) c(b, b) += v;
        if (a >= 0 && b >= 0) {
            c(a, b) -= v;
            c(b, a) -= v;
        }
    };
    for (const auto& inst : net.instances) {
        if (const auto* cap = std::get_if<Capacitor>(&inst.kind)) {
            pair_cap(ix.of(inst.terminals[0]), ix.of(inst.terminals[1]), cap->capacitance);
        } else if (const auto* m = std::get_if<Mosfet>(&inst.kind)) {
            // device caps depend only on geometry in this model
            DeviceEval e = eval_mosfet(card, m->type, m->width, m->length, 0.0, 0.0, 0.0);
            int d = ix.of(inst.terminals[0]), g = ix.of(inst.terminals[1]);
            int s = ix.of(inst.terminals[2]), b = ix.of(inst.terminals[3]);
            pair_cap(g, s, e.cgs);
            pair_cap(g, d, e.cgd);
            pair_cap(d, b, e.cdb);
            pair_cap(s, b, e.csb);
        }
    }
    return c;
}

struct StepExtraction {
    double max_slope = 0.0;  // directional: positive for rising, negative magnitude for falling
    bool reached_10 = false;
};

// Max |dV/dt| between the 10% and 90% crossings of the observed excursion.
inline StepExtraction extract_slew(const std::vector<double>& v, double h, bool rising) {
    StepExtraction ex;
    if (v.size() < 2) return ex;
    double v0 = v.front();
    double vf = v.back();
    double dv = vf - v0;
    if (std::fabs(dv) < 1e-15) return ex;
    double lvl10 = v0 + 0.1 * dv;
    double lvl90 = v0 + 0.9 * dv;

    auto crossed = [rising](double value, double level) {
        return rising ? value >= level : value <= level;
    };
    std::size_t k10 = v.size(), k90 = v.size();
    for (std::size_t k = 0; k < v.size(); ++k) {
        if (k10 == v.size() && crossed(v[k], lvl10)) k10 = k;
        if (k90 == v.size() && crossed(v[k], lvl90)) {
            k90 = k;
            break;
        }
    }
    if (k10 == v.size()) return ex;
    ex.reached_10 = true;
    if (k90 == v.size()) k90 = v.size() - 1;
    if (k10 > 0) --k10;  // include the interval straddling the 10% crossing

    double best = 0.0;
    for (std::size_t k = k10; k < k90; ++k) {
        double slope = (v[k + 1] - v[k]) / h;
        if (rising) best = std::max(best, slope);
        else best = std::min(best, slope);
    }
    ex.max_slope = best;
    return ex;
}

inline std::vector<double> run_step(const Netlist& net, const ProcessCard& card,
                                    const MnaIndex& ix, const SolverOptions& opts,
                                    const Eigen::MatrixXd& cap, const std::string& source,
                                    const std::string& out_node, double v_from, double v_to,
                                    double h, int steps) {
    Netlist start = net;
    std::get<VoltageSourceDc>(start.find(source)->kind).voltage = v_from;
    Netlist target = net;
    std::get<VoltageSourceDc>(target.find(source)->kind).voltage = v_to;

    Eigen::VectorXd x = solve_dc_vector(start, card, ix, opts);
    // both step endpoints must have an operating point
    (void)solve_dc_vector(target, card, ix, opts, &x);

    const int out_idx = ix.of(out_node);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(steps) + 1);
    trace.push_back(at(x, out_idx));

    Eigen::MatrixXd cap_over_h = cap / h;
    Eigen::VectorXd x_prev = x;
    NewtonSystem sys{target, card, ix, opts};
    sys.cap_over_h = &cap_over_h;
    sys.x_prev = &x_prev;

    for (int k = 0; k < steps; ++k) {
        Eigen::VectorXd x_next = x_prev;
        NewtonOutcome out = newton_solve(sys, x_next);
        if (!out.converged)
            throw ConvergenceError("transient Newton failed at t=" +
                                       format_si(h * (k + 1), "s"),
                                   out.residual);
        x_prev = x_next;
        trace.push_back(at(x_next, out_idx));
    }
    return trace;
}

} // namespace detail

/// Backward-Euler large-signal step response; SR+/SR- are the extreme output
/// slopes within the 10%-90% transition of the rising/falling response.
inline SlewResult transient_slew(const Netlist& net, const ProcessCard& card,
                                 const TransientConfig& cfg, const SolverOptions& opts = {}) {
    SlewResult result;
    if (cfg.step_amplitude == 0.0) {
        result.degenerate = true;
        return result;
    }
    const Instance* src = net.find(cfg.input_source);
    if (!src || !std::holds_alternative<VoltageSourceDc>(src->kind))
        throw SimError("transient input source '" + cfg.input_source + "' not found");
    const double v_mid = std::get<VoltageSourceDc>(src->kind).voltage;
    const double half = cfg.step_amplitude / 2.0;

    MnaIndex ix = MnaIndex::build(net);
    Eigen::MatrixXd cap = detail::capacitance_matrix(net, card, ix);
    const double h = 1.0 / (cfg.gbw_ref * cfg.steps_per_period);
    const int steps = cfg.steps_per_period * cfg.horizon_periods;

    auto rising = detail::run_step(net, card, ix, opts, cap, cfg.input_source, cfg.output_node,
                                   v_mid - half, v_mid + half, h, steps);
    auto falling = detail::run_step(net, card, ix, opts, cap, cfg.input_source, cfg.output_node,
                                    v_mid + half, v_mid - half, h, steps);

    auto up = detail::extract_slew(rising, h, true);
    auto down = detail::extract_slew(falling, h, false);
    if (!up.reached_10 && !down.reached_10) {
        result.degenerate = true;
        return result;
    }
    result.sr_pos = up.max_slope;
    result.sr_neg = -down.max_slope;
    return result;
}

} // namespace sizeloop
