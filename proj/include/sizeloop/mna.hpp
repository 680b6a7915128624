#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sizeloop/device_model.hpp"
#include "sizeloop/netlist.hpp"

namespace sizeloop {

class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& msg) : std::runtime_error(msg) {}
};

class SingularMatrixError : public SimError {
public:
    explicit SingularMatrixError(const std::string& msg) : SimError(msg) {}
};

class ConvergenceError : public SimError {
public:
    ConvergenceError(const std::string& msg, double residual)
        : SimError(msg + " (final residual " + std::to_string(residual) + " A)"),
          residual(residual) {}
    double residual;
};

/// Unknown ordering: node voltages (netlist order, ground excluded) followed
/// by one branch current per voltage source.
struct MnaIndex {
    std::map<std::string, int> node;    // "0" -> -1
    std::vector<std::string> node_names;
    std::map<std::string, int> branch;  // vsource name -> row
    int num_nodes = 0;
    int size = 0;

    static MnaIndex build(const Netlist& net) {
        MnaIndex ix;
        for (const auto& n : net.nodes) {
            if (n == "0") {
                ix.node[n] = -1;
                continue;
            }
            ix.node[n] = ix.num_nodes++;
            ix.node_names.push_back(n);
        }
        int next = ix.num_nodes;
        for (const auto& inst : net.instances)
            if (std::holds_alternative<VoltageSourceDc>(inst.kind)) ix.branch[inst.name] = next++;
        ix.size = next;
        return ix;
    }

    [[nodiscard]] int of(const std::string& node_name) const {
        auto it = node.find(node_name);
        if (it == node.end()) throw SimError("unknown node '" + node_name + "'");
        return it->second;
    }
};

struct SolverOptions {
    double goff = 1e-12;      // off-state drain-source conductance, matrix conditioning
    double gmin = 0.0;        // node-to-ground stepping conductance
    double v_tol = 1e-9;      // V, max update norm
    double i_tol = 1e-9;      // A, max residual norm
    int max_iterations = 120;
    int max_step_halvings = 20;
};

namespace detail {

inline double at(const Eigen::VectorXd& x, int i) { return i < 0 ? 0.0 : x[i]; }

inline void add(Eigen::MatrixXd& m, int r, int c, double v) {
    if (r >= 0 && c >= 0) m(r, c) += v;
}

inline void add(Eigen::VectorXd& v, int r, double val) {
    if (r >= 0) v[r] += val;
}

} // namespace detail

/// Residual f(x) (currents leaving each node; source branch rows hold the
/// voltage constraint) and its Jacobian at x.
inline void stamp_system(const Netlist& net, const ProcessCard& card, const MnaIndex& ix,
                         const SolverOptions& opts, const Eigen::VectorXd& x,
                         Eigen::MatrixXd& jac, Eigen::VectorXd& res) {
    using detail::add;
    using detail::at;
    jac.setZero(ix.size, ix.size);
    res.setZero(ix.size);

    for (const auto& inst : net.instances) {
        if (const auto* r = std::get_if<Resistor>(&inst.kind)) {
            int a = ix.of(inst.terminals[0]), b = ix.of(inst.terminals[1]);
            double g = 1.0 / r->resistance;
            double i = g * (at(x, a) - at(x, b));
            add(res, a, i);
            add(res, b, -i);
            add(jac, a, a, g);
            add(jac, a, b, -g);
            add(jac, b, b, g);
            add(jac, b, a, -g);
        } else if (const auto* s = std::get_if<CurrentSourceDc>(&inst.kind)) {
            int a = ix.of(inst.terminals[0]), b = ix.of(inst.terminals[1]);
            add(res, a, s->current);
            add(res, b, -s->current);
        } else if (const auto* v = std::get_if<VoltageSourceDc>(&inst.kind)) {
            int p = ix.of(inst.terminals[0]), n = ix.of(inst.terminals[1]);
            int br = ix.branch.at(inst.name);
            double ibr = x[br];
            add(res, p, ibr);
            add(res, n, -ibr);
            add(jac, p, br, 1.0);
            add(jac, n, br, -1.0);
            res[br] = at(x, p) - at(x, n) - v->voltage;
            add(jac, br, p, 1.0);
            add(jac, br, n, -1.0);
        } else if (const auto* m = std::get_if<Mosfet>(&inst.kind)) {
            int d = ix.of(inst.terminals[0]), g = ix.of(inst.terminals[1]);
            int sN = ix.of(inst.terminals[2]), b = ix.of(inst.terminals[3]);
            MosStamp st = eval_mosfet_stamp(card, m->type, m->width, m->length, at(x, g),
                                            at(x, d), at(x, sN), at(x, b));
            double ids_off = opts.goff * (at(x, d) - at(x, sN));
            add(res, d, st.i_drain + ids_off);
            add(res, sN, -(st.i_drain + ids_off));
            add(jac, d, g, st.di_dvg);
            add(jac, d, d, st.di_dvd + opts.goff);
            add(jac, d, sN, st.di_dvs - opts.goff);
            add(jac, d, b, st.di_dvb);
            add(jac, sN, g, -st.di_dvg);
            add(jac, sN, d, -(st.di_dvd + opts.goff));
            add(jac, sN, sN, -(st.di_dvs - opts.goff));
            add(jac, sN, b, -st.di_dvb);
        }
        // capacitors are open at DC
    }

    if (opts.gmin > 0.0) {
        for (int n = 0; n < ix.num_nodes; ++n) {
            jac(n, n) += opts.gmin;
            res[n] += opts.gmin * x[n];
        }
    }
}

namespace detail {

inline double inf_norm(const Eigen::VectorXd& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
}

// Residual including the backward-Euler companion term when cap_matrix is set.
struct NewtonSystem {
    const Netlist& net;
    const ProcessCard& card;
    const MnaIndex& ix;
    SolverOptions opts;
    const Eigen::MatrixXd* cap_over_h = nullptr;
    const Eigen::VectorXd* x_prev = nullptr;

    void eval(const Eigen::VectorXd& x, Eigen::MatrixXd& jac, Eigen::VectorXd& res) const {
        stamp_system(net, card, ix, opts, x, jac, res);
        if (cap_over_h) {
            res.noalias() += (*cap_over_h) * (x - *x_prev);
            jac.noalias() += *cap_over_h;
        }
    }
};

struct NewtonOutcome {
    bool converged = false;
    double residual = 0.0;
    int iterations = 0;
};

inline NewtonOutcome newton_solve(const NewtonSystem& sys, Eigen::VectorXd& x) {
    const int n = sys.ix.size;
    Eigen::MatrixXd jac(n, n);
    Eigen::VectorXd res(n), trial_res(n);
    Eigen::MatrixXd trial_jac(n, n);

    sys.eval(x, jac, res);
    double fnorm = inf_norm(res);

    NewtonOutcome out;
    for (int iter = 0; iter < sys.opts.max_iterations; ++iter) {
        out.iterations = iter + 1;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
        if (!lu.isInvertible()) {
            for (int r = 0; r < n; ++r) {
                if (jac.row(r).cwiseAbs().maxCoeff() < 1e-30) {
                    std::string what = r < sys.ix.num_nodes
                                           ? "floating node '" + sys.ix.node_names[static_cast<std::size_t>(r)] + "'"
                                           : "degenerate source branch";
                    throw SingularMatrixError("singular MNA matrix: " + what);
                }
            }
            throw SingularMatrixError("singular MNA matrix");
        }
        Eigen::VectorXd dx = lu.solve(-res);

        double alpha = 1.0;
        bool accepted = false;
        Eigen::VectorXd x_trial;
        double trial_norm = 0.0;
        for (int h = 0; h <= sys.opts.max_step_halvings; ++h) {
            x_trial = x + alpha * dx;
            sys.eval(x_trial, trial_jac, trial_res);
            trial_norm = inf_norm(trial_res);
            if (std::isfinite(trial_norm) && (trial_norm < fnorm || trial_norm < sys.opts.i_tol)) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            out.residual = fnorm;
            return out;  // stalled; caller escalates to gmin stepping
        }

        double step = inf_norm(alpha * dx);
        x = x_trial;
        jac = trial_jac;
        res = trial_res;
        fnorm = trial_norm;

        if (fnorm < sys.opts.i_tol && step < sys.opts.v_tol) {
            out.converged = true;
            out.residual = fnorm;
            return out;
        }
    }
    out.residual = fnorm;
    return out;
}

} // namespace detail

} // namespace sizeloop
