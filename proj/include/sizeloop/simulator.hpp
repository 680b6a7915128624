#pragma once

#include <optional>

#include "sizeloop/mna.hpp"

namespace sizeloop {

/// Solved bias data for one MOSFET. `vgs`/`vds`/`vsb` are raw node
/// differences; `vth`/`vov` are in the device's polarity frame (positive for
/// normal operation of either type), so vov = vgs - vth for NMOS and
/// -(vgs - vth) for PMOS.
struct DeviceOp {
    MosType type = MosType::Nmos;
    double w = 0.0, l = 0.0;
    double id = 0.0;
    double gm = 0.0, gds = 0.0, gmb = 0.0;
    double vgs = 0.0, vds = 0.0, vsb = 0.0;
    double vth = 0.0, vov = 0.0;
    Region region = Region::Cutoff;
    double cgs = 0.0, cgd = 0.0, cdb = 0.0, csb = 0.0;
};

struct OperatingPoint {
    std::map<std::string, double> node_voltages;     // includes "0"
    std::map<std::string, DeviceOp> device_ops;
    std::map<std::string, double> supply_currents;   // branch current per V source
    double max_residual = 0.0;
};

struct MetricSet {
    double av_db = 0.0;
    double gbw_hz = 0.0;
    double pm_deg = 0.0;
    double sr_pos = 0.0;
    double sr_neg = 0.0;
    double power_w = 0.0;
};

struct FrequencyResponse {
    std::vector<std::pair<double, std::complex<double>>> grid;  // (Hz, gain)
};

namespace detail {

inline OperatingPoint collect_op(const Netlist& net, const ProcessCard& card, const MnaIndex& ix,
                                 const SolverOptions& opts, const Eigen::VectorXd& x) {
    OperatingPoint op;
    op.node_voltages["0"] = 0.0;
    for (const auto& [name, idx] : ix.node)
        op.node_voltages[name] = at(x, idx);
    for (const auto& inst : net.instances) {
        if (const auto* m = std::get_if<Mosfet>(&inst.kind)) {
            double vd = at(x, ix.of(inst.terminals[0]));
            double vg = at(x, ix.of(inst.terminals[1]));
            double vs = at(x, ix.of(inst.terminals[2]));
            double vb = at(x, ix.of(inst.terminals[3]));
            MosStamp st = eval_mosfet_stamp(card, m->type, m->width, m->length, vg, vd, vs, vb);
            DeviceOp d;
            d.type = m->type;
            d.w = m->width;
            d.l = m->length;
            d.id = st.eval.id;
            d.gm = st.eval.gm;
            d.gds = st.eval.gds;
            d.gmb = st.eval.gmb;
            d.vgs = vg - vs;
            d.vds = vd - vs;
            d.vsb = vs - vb;
            d.vth = st.eval.vth;
            d.vov = st.eval.vov;
            d.region = st.eval.region;
            d.cgs = st.eval.cgs;
            d.cgd = st.eval.cgd;
            d.cdb = st.eval.cdb;
            d.csb = st.eval.csb;
            op.device_ops[inst.name] = d;
        } else if (std::holds_alternative<VoltageSourceDc>(inst.kind)) {
            op.supply_currents[inst.name] = x[ix.branch.at(inst.name)];
        }
    }
    // KCL residual over node rows only (branch rows are voltage constraints)
    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    SolverOptions check = opts;
    check.gmin = 0.0;
    stamp_system(net, card, ix, check, x, jac, res);
    op.max_residual = ix.num_nodes ? res.head(ix.num_nodes).cwiseAbs().maxCoeff() : 0.0;
    return op;
}

// Last-resort continuation: relax toward the DC solution with backward
// Euler on a ballast capacitance at every node, growing the timestep until
// the static residual is small, then polish with plain Newton.
inline bool pseudo_transient(const Netlist& net, const ProcessCard& card, const MnaIndex& ix,
                             const SolverOptions& base, Eigen::VectorXd& x) {
    Eigen::MatrixXd ballast = Eigen::MatrixXd::Zero(ix.size, ix.size);
    for (int n = 0; n < ix.num_nodes; ++n) ballast(n, n) = 1e-9;

    x.setZero();
    Eigen::VectorXd x_prev = x;
    double h = 1e-9;
    Eigen::MatrixXd cap_over_h;

    NewtonSystem sys{net, card, ix, base};
    sys.opts.gmin = 0.0;
    sys.x_prev = &x_prev;
    sys.cap_over_h = &cap_over_h;

    Eigen::MatrixXd jac;
    Eigen::VectorXd res;
    for (int step = 0; step < 400; ++step) {
        cap_over_h = ballast / h;
        Eigen::VectorXd x_next = x_prev;
        NewtonOutcome out = newton_solve(sys, x_next);
        if (!out.converged) {
            h *= 0.25;
            if (h < 1e-15) return false;
            continue;
        }
        x_prev = x_next;
        h *= 2.0;
        // static residual without the ballast term
        stamp_system(net, card, ix, sys.opts, x_prev, jac, res);
        if (inf_norm(res) < 1e-6 && h > 1e-3) break;
    }

    x = x_prev;
    sys.cap_over_h = nullptr;
    sys.x_prev = nullptr;
    return newton_solve(sys, x).converged;
}

inline Eigen::VectorXd solve_dc_vector(const Netlist& net, const ProcessCard& card,
                                       const MnaIndex& ix, const SolverOptions& base,
                                       const Eigen::VectorXd* initial = nullptr) {
    Eigen::VectorXd x = initial ? *initial : Eigen::VectorXd::Zero(ix.size);

    NewtonSystem sys{net, card, ix, base};
    sys.opts.gmin = 0.0;
    NewtonOutcome out = newton_solve(sys, x);
    if (out.converged) return x;

    // gmin stepping: 1e-3 S down to 1e-12 S in decades, then a clean solve
    x = initial ? *initial : Eigen::VectorXd::Zero(ix.size);
    bool ladder_ok = true;
    for (double gmin = 1e-3; gmin >= 0.5e-12; gmin *= 0.1) {
        sys.opts.gmin = gmin;
        out = newton_solve(sys, x);
        if (!out.converged) {
            ladder_ok = false;
            break;
        }
    }
    if (ladder_ok) {
        sys.opts.gmin = 0.0;
        out = newton_solve(sys, x);
        if (out.converged) return x;
    }

    if (pseudo_transient(net, card, ix, base, x)) return x;
    throw ConvergenceError("DC operating point did not converge (damping, gmin stepping, "
                           "pseudo-transient all exhausted)",
                           out.residual);
}

} // namespace detail

/// Newton solve of the MNA system. Throws ConvergenceError /
/// SingularMatrixError on failure; the returned point always satisfies
/// max |KCL residual| < i_tol.
inline OperatingPoint dc_operating_point(const Netlist& net, const ProcessCard& card,
                                         const SolverOptions& opts = {}) {
    if (!net.has_ground()) throw SimError("netlist has no ground node '0'");
    bool any_source = false;
    for (const auto& inst : net.instances)
        any_source |= std::holds_alternative<VoltageSourceDc>(inst.kind) ||
                      std::holds_alternative<CurrentSourceDc>(inst.kind);
    if (!any_source) throw SimError("netlist has no sources");

    MnaIndex ix = MnaIndex::build(net);
    Eigen::VectorXd x = detail::solve_dc_vector(net, card, ix, opts);
    OperatingPoint op = detail::collect_op(net, card, ix, opts, x);
    if (op.max_residual >= opts.i_tol)
        throw ConvergenceError("solved point violates KCL tolerance", op.max_residual);
    return op;
}

/// Static power: sum of |I * V| over every DC voltage source.
inline double power(const OperatingPoint& op, const Netlist& net) {
    double p = 0.0;
    for (const auto& inst : net.instances)
        if (const auto* v = std::get_if<VoltageSourceDc>(&inst.kind)) {
            auto it = op.supply_currents.find(inst.name);
            if (it != op.supply_currents.end()) p += std::fabs(it->second * v->voltage);
        }
    return p;
}

} // namespace sizeloop
