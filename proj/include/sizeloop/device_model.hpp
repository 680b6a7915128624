#pragma once

#include <cmath>
#include <string>

#include "sizeloop/config.hpp"
#include "sizeloop/netlist.hpp"

namespace sizeloop {

enum class Region { Cutoff, Triode, Sat };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::Cutoff: return "CUTOFF";
        case Region::Triode: return "TRIODE";
        default: return "SAT";
    }
}

/// Per-type model parameters, all in the device's own polarity frame
/// (magnitudes; PMOS handled by sign convention at evaluation).
struct MosParams {
    double mu0_cox = 0.0;   // A/V^2, low-field transconductance factor
    double vth0 = 0.0;      // V
    double gamma = 0.0;     // V^0.5, body-effect coefficient
    double phi_f2 = 0.7;    // V, 2*Fermi potential
    double theta = 0.0;     // 1/V, mobility degradation
    double lambda_l = 0.0;  // V^-1 * m; lambda = lambda_l / L
    double cox_area = 0.0;  // F/m^2, gate cap per area
    double c_ovl = 0.0;     // F/m, overlap cap per width
    double c_j = 0.0;       // F/m^2, junction cap per drain area
    double l_drain = 0.0;   // m, drain extent for junction area
};

struct ProcessCard {
    std::string name = "unnamed";
    MosParams nmos;
    MosParams pmos;

    [[nodiscard]] const MosParams& params(MosType t) const {
        return t == MosType::Nmos ? nmos : pmos;
    }

    void validate() const {
        for (const MosParams* p : {&nmos, &pmos}) {
            if (!(p->mu0_cox > 0.0)) throw ConfigError(name + ": mu0_cox must be > 0");
            if (p->theta < 0.0) throw ConfigError(name + ": theta must be >= 0");
            if (p->lambda_l < 0.0) throw ConfigError(name + ": lambda_l must be >= 0");
            if (p->gamma < 0.0) throw ConfigError(name + ": gamma must be >= 0");
            if (!(p->phi_f2 > 0.0)) throw ConfigError(name + ": phi_f2 must be > 0");
            if (p->cox_area < 0.0 || p->c_ovl < 0.0 || p->c_j < 0.0)
                throw ConfigError(name + ": capacitance parameters must be >= 0");
        }
    }

    static ProcessCard from_config(const KeyValueConfig& cfg) {
        ProcessCard card;
        card.name = cfg.string_or("name", "unnamed");
        auto fill = [&cfg](MosParams& p, const std::string& prefix) {
            p.mu0_cox = cfg.require_number(prefix + ".mu0cox");
            p.vth0 = cfg.require_number(prefix + ".vth0");
            p.gamma = cfg.number_or(prefix + ".gamma", 0.0);
            p.phi_f2 = cfg.number_or(prefix + ".phif2", 0.7);
            p.theta = cfg.number_or(prefix + ".theta", 0.0);
            p.lambda_l = cfg.number_or(prefix + ".lambdal", 0.0);
            p.cox_area = cfg.number_or(prefix + ".coxarea", 0.0);
            p.c_ovl = cfg.number_or(prefix + ".covl", 0.0);
            p.c_j = cfg.number_or(prefix + ".cj", 0.0);
            p.l_drain = cfg.number_or(prefix + ".ldrain", 0.0);
        };
        fill(card.nmos, "nmos");
        fill(card.pmos, "pmos");
        card.validate();
        return card;
    }

    static ProcessCard load(const std::string& path) {
        return from_config(KeyValueConfig::load(path));
    }
};

/// One bias-point evaluation. `id` is the signed current into the physical
/// drain terminal (negative for a conducting PMOS); the small-signal
/// conductances are magnitudes; `vth`/`vov` are in the device's own polarity
/// frame with the body shift applied.
struct DeviceEval {
    double id = 0.0;
    double gm = 0.0;
    double gds = 0.0;
    double gmb = 0.0;
    double vth = 0.0;
    double vov = 0.0;
    Region region = Region::Cutoff;
    double cgs = 0.0;
    double cgd = 0.0;
    double cdb = 0.0;
    double csb = 0.0;
};

/// Current into the physical drain plus its partials w.r.t. the raw node
/// voltages — what the Newton stamp needs.
struct MosStamp {
    double i_drain = 0.0;
    double di_dvg = 0.0;
    double di_dvd = 0.0;
    double di_dvs = 0.0;
    double di_dvb = 0.0;
    DeviceEval eval;
    bool swapped = false;  // channel conducting source->drain (reversed bias)
};

namespace detail {

struct CoreEval {
    double id = 0.0, gm = 0.0, gds = 0.0, gmbs = 0.0;  // gmbs = dId/dVsb (<= 0)
    double vth = 0.0, vov = 0.0;
    Region region = Region::Cutoff;
};

// NMOS-frame evaluation. Saturation: Id = 1/2 * mu0Cox/(1+theta*Vov) * (W/L)
// * Vov^2 * (1+lambda*Vds); triode replaces Vov^2/2 with Vov*Vds - Vds^2/2.
// Body effect: Vth = Vth0 + gamma*(sqrt(phiF2+Vsb) - sqrt(phiF2)).
inline CoreEval mos_core(const MosParams& p, double w, double l,
                         double vgs, double vds, double vsb) {
    CoreEval e;
    double phi = p.phi_f2 + vsb;
    if (phi < 0.0) phi = 0.0;
    e.vth = p.vth0 + p.gamma * (std::sqrt(phi) - std::sqrt(p.phi_f2));
    e.vov = vgs - e.vth;
    if (e.vov <= 0.0) {
        e.region = Region::Cutoff;
        return e;
    }
    const double lambda = p.lambda_l / l;
    const double clm = 1.0 + lambda * vds;
    const double mob = 1.0 + p.theta * e.vov;
    const double beta = p.mu0_cox / mob * (w / l);
    const double dvth_dvsb = (phi > 0.0) ? p.gamma / (2.0 * std::sqrt(phi)) : 0.0;

    if (vds >= e.vov) {
        e.region = Region::Sat;
        e.id = 0.5 * beta * e.vov * e.vov * clm;
        e.gm = 0.5 * clm * beta * e.vov * (2.0 + p.theta * e.vov) / mob;
        e.gds = 0.5 * beta * e.vov * e.vov * lambda;
    } else {
        e.region = Region::Triode;
        const double g = e.vov * vds - 0.5 * vds * vds;
        e.id = beta * g * clm;
        e.gm = clm * beta * (vds - p.theta * g / mob);
        e.gds = beta * ((e.vov - vds) * clm + g * lambda);
    }
    e.gmbs = -e.gm * dvth_dvsb;
    return e;
}

inline void fill_caps(const MosParams& p, double w, double l, DeviceEval& out) {
    out.cgs = (2.0 / 3.0) * w * l * p.cox_area + p.c_ovl * w;
    out.cgd = p.c_ovl * w;
    out.cdb = p.c_j * w * p.l_drain;
    out.csb = p.c_j * w * p.l_drain;
}

} // namespace detail

/// Evaluate a MOSFET at raw terminal voltages (node values, not magnitudes).
/// PMOS is evaluated with negated voltages and a negated current; a reversed
/// channel (effective Vds < 0) is evaluated with drain and source swapped.
inline MosStamp eval_mosfet_stamp(const ProcessCard& card, MosType type, double w, double l,
                                  double vg, double vd, double vs, double vb) {
    const MosParams& p = card.params(type);
    const double sgn = (type == MosType::Nmos) ? 1.0 : -1.0;
    MosStamp st;
    st.swapped = sgn * (vd - vs) < 0.0;
    const double veff_d = st.swapped ? vs : vd;
    const double veff_s = st.swapped ? vd : vs;

    detail::CoreEval core = detail::mos_core(p, w, l, sgn * (vg - veff_s),
                                             sgn * (veff_d - veff_s), sgn * (veff_s - vb));

    const double dir = st.swapped ? -1.0 : 1.0;
    st.i_drain = dir * sgn * core.id;
    const double dig = core.gm;                                // d(i_eff)/d(vg), raw frame
    const double did = core.gds;                               // d(i_eff)/d(v_eff_drain)
    const double dib = -core.gmbs;                             // d(i_eff)/d(vb), raw frame
    const double dis = -(core.gm + core.gds - core.gmbs);      // d(i_eff)/d(v_eff_source)
    st.di_dvg = dir * dig;
    st.di_dvb = dir * dib;
    if (!st.swapped) {
        st.di_dvd = dir * did;
        st.di_dvs = dir * dis;
    } else {
        st.di_dvd = dir * dis;
        st.di_dvs = dir * did;
    }

    st.eval.id = st.i_drain;
    st.eval.gm = core.gm;
    st.eval.gds = core.gds;
    st.eval.gmb = -core.gmbs;
    st.eval.vth = core.vth;
    st.eval.vov = core.vov;
    st.eval.region = core.region;
    detail::fill_caps(p, w, l, st.eval);
    return st;
}

/// Convenience form taking source-referenced voltages directly
/// (Vgs = Vg - Vs, Vds = Vd - Vs, Vsb = Vs - Vb).
inline DeviceEval eval_mosfet(const ProcessCard& card, MosType type, double w, double l,
                              double vgs, double vds, double vsb) {
    return eval_mosfet_stamp(card, type, w, l, vgs, vds, 0.0, -vsb).eval;
}

} // namespace sizeloop
