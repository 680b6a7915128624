#pragma once

#include <complex>
#include <functional>

#include "sizeloop/simulator.hpp"

namespace sizeloop {

class AcError : public SimError {
public:
    explicit AcError(const std::string& msg) : SimError(msg) {}
};

/// Small-signal network in complex MNA form: raw G/C entries plus voltage
/// source branches. Node index -1 is ground.
class LinearNetwork {
public:
    explicit LinearNetwork(int num_nodes) : nodes_(num_nodes) {}

    void add_g_entry(int row, int col, double g) {
        if (row >= 0 && col >= 0) g_entries_.push_back({row, col, g});
    }
    void add_conductance(int a, int b, double g) {
        add_g_entry(a, a, g);
        add_g_entry(b, b, g);
        add_g_entry(a, b, -g);
        add_g_entry(b, a, -g);
    }
    void add_cap(int a, int b, double c) {
        if (a >= 0 && b >= 0) {
            c_entries_.push_back({a, a, c});
            c_entries_.push_back({b, b, c});
            c_entries_.push_back({a, b, -c});
            c_entries_.push_back({b, a, -c});
        } else if (a >= 0) {
            c_entries_.push_back({a, a, c});
        } else if (b >= 0) {
            c_entries_.push_back({b, b, c});
        }
    }
    /// Current gm*(v_ip - v_in) flows out of node `op` and into node `on`.
    void add_vccs(int op, int on, int ip, int in, double gm) {
        add_g_entry(op, ip, gm);
        add_g_entry(op, in, -gm);
        add_g_entry(on, ip, -gm);
        add_g_entry(on, in, gm);
    }
    int add_vsource(int p, int n, std::complex<double> ac) {
        branches_.push_back({p, n, ac});
        return static_cast<int>(branches_.size()) - 1;
    }
    void set_vsource_ac(int branch, std::complex<double> ac) {
        branches_[static_cast<std::size_t>(branch)].ac = ac;
    }

    [[nodiscard]] int size() const { return nodes_ + static_cast<int>(branches_.size()); }

    [[nodiscard]] Eigen::VectorXcd solve(double freq_hz) const {
        using cd = std::complex<double>;
        const int n = size();
        Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(n, n);
        Eigen::VectorXcd b = Eigen::VectorXcd::Zero(n);
        const double omega = 2.0 * M_PI * freq_hz;
        for (const auto& e : g_entries_) a(e.row, e.col) += cd(e.value, 0.0);
        for (const auto& e : c_entries_) a(e.row, e.col) += cd(0.0, omega * e.value);
        for (std::size_t k = 0; k < branches_.size(); ++k) {
            int br = nodes_ + static_cast<int>(k);
            const auto& s = branches_[k];
            if (s.p >= 0) {
                a(s.p, br) += 1.0;
                a(br, s.p) += 1.0;
            }
            if (s.n >= 0) {
                a(s.n, br) -= 1.0;
                a(br, s.n) -= 1.0;
            }
            b[br] = s.ac;
        }
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(a);
        if (!lu.isInvertible()) throw SingularMatrixError("singular AC matrix");
        return lu.solve(b);
    }

private:
    struct Entry {
        int row, col;
        double value;
    };
    struct Branch {
        int p, n;
        std::complex<double> ac;
    };
    int nodes_;
    std::vector<Entry> g_entries_;
    std::vector<Entry> c_entries_;
    std::vector<Branch> branches_;
};

struct AcSweep {
    double f_start = 1.0;
    double f_stop = 100e9;
    int points_per_decade = 40;
};

struct LoopMetrics {
    double av_db = 0.0;
    double gbw_hz = 0.0;
    double pm_deg = 0.0;
};

/// Gain at 1 Hz, unity-crossing frequency by log-log interpolation on the
/// sweep grid, and phase margin from a direct evaluation at the crossing.
inline LoopMetrics measure_loop(const std::function<std::complex<double>(double)>& gain,
                                const AcSweep& sweep, FrequencyResponse* response = nullptr) {
    LoopMetrics m;
    m.av_db = 20.0 * std::log10(std::abs(gain(1.0)));

    const double decades = std::log10(sweep.f_stop / sweep.f_start);
    const int points = static_cast<int>(std::floor(decades * sweep.points_per_decade)) + 1;
    std::vector<double> freq(static_cast<std::size_t>(points));
    std::vector<std::complex<double>> h(static_cast<std::size_t>(points));
    for (int k = 0; k < points; ++k) {
        freq[static_cast<std::size_t>(k)] =
            sweep.f_start * std::pow(10.0, static_cast<double>(k) / sweep.points_per_decade);
        h[static_cast<std::size_t>(k)] = gain(freq[static_cast<std::size_t>(k)]);
        if (response) response->grid.emplace_back(freq[static_cast<std::size_t>(k)], h[static_cast<std::size_t>(k)]);
    }

    int cross = -1;
    for (int k = 0; k + 1 < points; ++k) {
        double a = std::abs(h[static_cast<std::size_t>(k)]);
        double b = std::abs(h[static_cast<std::size_t>(k + 1)]);
        if (a >= 1.0 && b < 1.0) {
            cross = k;
            break;
        }
    }
    if (cross < 0)
        throw AcError("loop gain never crosses unity within sweep [" +
                      format_si(sweep.f_start, "Hz") + ", " + format_si(sweep.f_stop, "Hz") + "]");

    const double la = std::log10(std::abs(h[static_cast<std::size_t>(cross)]));
    const double lb = std::log10(std::abs(h[static_cast<std::size_t>(cross + 1)]));
    const double t = la / (la - lb);
    const double lf = std::log10(freq[static_cast<std::size_t>(cross)]) +
                      t * (std::log10(freq[static_cast<std::size_t>(cross + 1)]) -
                           std::log10(freq[static_cast<std::size_t>(cross)]));
    m.gbw_hz = std::pow(10.0, lf);

    double phase_deg = std::arg(gain(m.gbw_hz)) * 180.0 / M_PI;
    double pm = 180.0 + phase_deg;
    while (pm > 180.0) pm -= 360.0;
    while (pm <= -180.0) pm += 360.0;
    m.pm_deg = pm;
    return m;
}

/// How the AC testbench drives the circuit: LoopCut opens the feedback at
/// the gate of `cut_device` (the input device whose gate ties to the output
/// in unity-gain configuration) and reports loop gain -V(out)/V(cut);
/// Direct drives `input_source` and reports V(out).
enum class AcMode { LoopCut, Direct };

struct AcConfig {
    std::string output_node;
    std::string input_source;   // Direct mode: source to drive with AC 1
    std::string cut_device;     // LoopCut mode: empty = auto-detect
    AcMode mode = AcMode::LoopCut;
    AcSweep sweep;
};

namespace detail {

inline std::string auto_cut_device(const Netlist& net, const std::string& output_node) {
    std::string found;
    for (const auto& inst : net.instances) {
        if (!inst.is_mosfet()) continue;
        if (inst.terminals[1] == output_node) {
            if (!found.empty())
                throw AcError("multiple gates tie to output node '" + output_node +
                              "' (" + found + ", " + inst.name + "); set cut_device explicitly");
            found = inst.name;
        }
    }
    if (found.empty())
        throw AcError("no MOSFET gate ties to output node '" + output_node +
                      "'; cannot auto-detect feedback cut point");
    return found;
}

} // namespace detail

/// Linearize the circuit at `op` and measure A_v / GBW / PM. LoopCut mode
/// re-drives the cut gate from a fresh node while keeping the cut device's
/// gate capacitances attached to the output so loop loading is preserved.
inline LoopMetrics ac_loop_metrics(const Netlist& net, const ProcessCard& card,
                                   const OperatingPoint& op, const AcConfig& cfg,
                                   FrequencyResponse* response = nullptr,
                                   double goff = 1e-12) {
    MnaIndex ix = MnaIndex::build(net);
    const int out_idx = ix.of(cfg.output_node);
    if (out_idx < 0) throw AcError("output node cannot be ground");

    const bool loop = cfg.mode == AcMode::LoopCut;
    std::string cut;
    if (loop)
        cut = cfg.cut_device.empty() ? detail::auto_cut_device(net, cfg.output_node)
                                     : cfg.cut_device;

    const int fb_idx = ix.num_nodes;  // appended drive node in loop mode
    LinearNetwork lin(ix.num_nodes + (loop ? 1 : 0));
    int drive_branch = -1;

    for (const auto& inst : net.instances) {
        if (const auto* r = std::get_if<Resistor>(&inst.kind)) {
            lin.add_conductance(ix.of(inst.terminals[0]), ix.of(inst.terminals[1]),
                                1.0 / r->resistance);
        } else if (const auto* c = std::get_if<Capacitor>(&inst.kind)) {
            lin.add_cap(ix.of(inst.terminals[0]), ix.of(inst.terminals[1]), c->capacitance);
        } else if (std::holds_alternative<VoltageSourceDc>(inst.kind)) {
            bool driven = !loop && inst.name == cfg.input_source;
            int br = lin.add_vsource(ix.of(inst.terminals[0]), ix.of(inst.terminals[1]),
                                     driven ? 1.0 : 0.0);
            if (driven) drive_branch = br;
        } else if (const auto* m = std::get_if<Mosfet>(&inst.kind)) {
            int d = ix.of(inst.terminals[0]);
            int g = ix.of(inst.terminals[1]);
            int s = ix.of(inst.terminals[2]);
            int b = ix.of(inst.terminals[3]);
            auto vat = [&op](const std::string& n) { return op.node_voltages.at(n); };
            MosStamp st = eval_mosfet_stamp(card, m->type, m->width, m->length,
                                            vat(inst.terminals[1]), vat(inst.terminals[0]),
                                            vat(inst.terminals[2]), vat(inst.terminals[3]));
            const bool is_cut = loop && inst.name == cut;
            const int g_eff = is_cut ? fb_idx : g;

            auto stamp_row = [&](int row, double sign) {
                if (row < 0) return;
                lin.add_g_entry(row, g_eff, sign * st.di_dvg);
                lin.add_g_entry(row, d, sign * st.di_dvd);
                lin.add_g_entry(row, s, sign * st.di_dvs);
                lin.add_g_entry(row, b, sign * st.di_dvb);
            };
            stamp_row(d, 1.0);
            stamp_row(s, -1.0);
            lin.add_conductance(d, s, goff);
            lin.add_cap(g_eff, s, st.eval.cgs);
            lin.add_cap(g_eff, d, st.eval.cgd);
            lin.add_cap(d, b, st.eval.cdb);
            lin.add_cap(s, b, st.eval.csb);
            if (is_cut) {
                // the opened gate no longer loads the output; restore it
                lin.add_cap(out_idx, s, st.eval.cgs);
                lin.add_cap(out_idx, d, st.eval.cgd);
            }
        }
    }

    if (loop)
        drive_branch = lin.add_vsource(fb_idx, -1, 1.0);
    else if (drive_branch < 0)
        throw AcError("input source '" + cfg.input_source + "' not found");

    auto gain = [&lin, out_idx, loop](double f) {
        Eigen::VectorXcd sol = lin.solve(f);
        std::complex<double> vout = sol[out_idx];
        return loop ? -vout : vout;
    };
    return measure_loop(gain, cfg.sweep, response);
}

} // namespace sizeloop
