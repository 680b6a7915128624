#pragma once

#include <functional>

#include "sizeloop/calibration.hpp"
#include "sizeloop/plan.hpp"
#include "sizeloop/targets.hpp"

namespace sizeloop {

using PredictedMetrics = MetricSet;

using CalibrationMap = std::map<std::string, CalibrationRecord>;

/// Ordered evaluation log: every let binding and sizing result, for echoing.
struct ExecutionTrace {
    std::vector<std::pair<std::string, double>> entries;
};

struct PlanOutput {
    DesignVariables variables;
    PredictedMetrics predicted;
    ExecutionTrace trace;
};

namespace plan_detail {

struct DeviceState {
    std::optional<double> w, l, current;
};

class Executor {
public:
    Executor(const SizingPlan& plan, const CalibrationMap& calib, const DesignTargets& targets)
        : plan_(plan), calib_(calib), targets_(targets) {}

    PlanOutput run() {
        std::vector<const Stmt*> predictions;
        exec_body(plan_.statements, predictions);
        finish_matched();
        collect_variables();
        eval_predictions(predictions);
        return std::move(out_);
    }

private:
    const SizingPlan& plan_;
    const CalibrationMap& calib_;
    const DesignTargets& targets_;
    std::map<std::string, double> bindings_;
    std::map<std::string, DeviceState> devices_;
    PlanOutput out_;

    [[noreturn]] static void fail(const std::string& msg, int line) { throw PlanError(msg, line); }

    double checked(double v, const std::string& name, int line) const {
        if (!std::isfinite(v))
            fail("expression for '" + name + "' evaluated to a non-finite value", line);
        return v;
    }

    const CalibrationRecord& calib_record(const std::string& device, int line) const {
        auto it = calib_.find(device);
        if (it == calib_.end())
            fail("no calibration record for device '" + device + "'", line);
        return it->second;
    }

    double calib_param(const std::string& device, const std::string& param, int line) const {
        const CalibrationRecord& rec = calib_record(device, line);
        std::optional<double> v;
        if (param == "mu_cox") v = rec.mu_cox;
        else if (param == "a_gm") v = rec.a_gm;
        else if (param == "lambda") v = rec.lambda;
        else if (param == "vth") v = rec.vth;
        if (!v)
            fail("unbound calibration parameter " + device + "." + param +
                     " (device not conducting?)",
                 line);
        return *v;
    }

    double eval(const Expr& e) const {
        switch (e.kind) {
            case Expr::Kind::Number:
                return e.number;
            case Expr::Kind::Unary:
                return -eval(*e.lhs);
            case Expr::Kind::Binary: {
                double a = eval(*e.lhs);
                double b = eval(*e.rhs);
                switch (e.op) {
                    case '+': return a + b;
                    case '-': return a - b;
                    case '*': return a * b;
                    default:
                        if (b == 0.0) fail("division by zero", e.line);
                        return a / b;
                }
            }
            case Expr::Kind::Call: {
                std::vector<double> args;
                args.reserve(e.args.size());
                for (const auto& a : e.args) args.push_back(eval(*a));
                auto arity = [&](std::size_t n) {
                    if (args.size() != n)
                        fail("'" + e.fn + "' expects " + std::to_string(n) + " argument(s)",
                             e.line);
                };
                if (e.fn == "sqrt") {
                    arity(1);
                    if (args[0] < 0.0) fail("sqrt of a negative value", e.line);
                    return std::sqrt(args[0]);
                }
                if (e.fn == "min") { arity(2); return std::min(args[0], args[1]); }
                if (e.fn == "max") { arity(2); return std::max(args[0], args[1]); }
                if (e.fn == "abs") { arity(1); return std::fabs(args[0]); }
                if (e.fn == "atan") { arity(1); return std::atan(args[0]); }
                if (e.fn == "log10") {
                    arity(1);
                    if (args[0] <= 0.0) fail("log10 of a non-positive value", e.line);
                    return std::log10(args[0]);
                }
                if (e.fn == "parallel") {
                    arity(2);
                    if (args[0] + args[1] == 0.0) fail("parallel() of cancelling values", e.line);
                    return args[0] * args[1] / (args[0] + args[1]);
                }
                fail("unknown function '" + e.fn + "'", e.line);
            }
            case Expr::Kind::Ref:
                return eval_ref(e);
        }
        fail("unreachable expression kind", e.line);
    }

    double eval_ref(const Expr& e) const {
        if (e.path.size() == 1) {
            if (e.path[0] == "pi") return M_PI;
            auto it = bindings_.find(e.path[0]);
            if (it == bindings_.end()) fail("unbound name '" + e.path[0] + "'", e.line);
            return it->second;
        }
        const std::string& head = e.path[0];
        if (head == "calib") return calib_param(e.path[1], e.path[2], e.line);
        if (head == "target") {
            const std::string& f = e.path[1];
            if (f == "av") return targets_.av_db_min;
            if (f == "gbw") return targets_.gbw_hz_min;
            if (f == "pm") return targets_.pm_deg_min;
            if (f == "sr") return targets_.sr_min;
            if (f == "cl") return targets_.cl;
            if (f == "power") {
                if (!targets_.power_max) fail("target.power read but no power bound is set", e.line);
                return *targets_.power_max;
            }
        }
        if (head == "supply") return e.path[1] == "vdd" ? targets_.vdd : targets_.vss;
        if (head == "dev") {
            auto it = devices_.find(e.path[1]);
            if (it == devices_.end() || !it->second.w || !it->second.l)
                fail("device '" + e.path[1] + "' is not sized yet", e.line);
            return e.path[2] == "w" ? *it->second.w : *it->second.l;
        }
        fail("unknown accessor '" + head + "'", e.line);
    }

    void note(const std::string& name, double value) {
        out_.trace.entries.emplace_back(name, value);
    }

    void exec_body(const std::vector<Stmt>& body, std::vector<const Stmt*>& predictions) {
        for (const auto& s : body) {
            switch (s.kind) {
                case Stmt::Kind::Let: {
                    double v = checked(eval(*s.expr), s.name, s.line);
                    if (!bindings_.emplace(s.name, v).second)
                        fail("name '" + s.name + "' bound twice", s.line);
                    note(s.name, v);
                    break;
                }
                case Stmt::Kind::If: {
                    double a = eval(*s.cond_lhs);
                    double b = eval(*s.cond_rhs);
                    bool take = s.cond_op == ">=" ? a >= b
                              : s.cond_op == "<=" ? a <= b
                              : s.cond_op == ">"  ? a > b
                                                  : a < b;
                    exec_body(take ? s.then_body : s.else_body, predictions);
                    break;
                }
                case Stmt::Kind::Length: {
                    double l = checked(eval(*s.expr), "length of " + s.name, s.line);
                    if (!(l > 0.0)) fail("length of '" + s.name + "' must be > 0", s.line);
                    DeviceState& d = devices_[s.name];
                    if (d.l) fail("length of '" + s.name + "' set twice", s.line);
                    d.l = l;
                    break;
                }
                case Stmt::Kind::SizeIndependent: {
                    DeviceState& d = devices_[s.name];
                    if (!d.l) fail("independent device '" + s.name + "' has no length", s.line);
                    double id = checked(eval(*s.expr), s.name + " current", s.line);
                    double vov = checked(eval(*s.expr2), s.name + " vov", s.line);
                    if (vov == 0.0) fail("V_ov expression for '" + s.name + "' is zero", s.line);
                    double mu = calib_param(s.name, "mu_cox", s.line);
                    double w = 2.0 * id * *d.l / (mu * vov * vov);
                    if (!(w > 0.0))
                        fail("computed width for '" + s.name + "' is not positive", s.line);
                    d.w = checked(w, s.name + " width", s.line);
                    d.current = id;
                    note("W." + s.name, w);
                    break;
                }
                case Stmt::Kind::SizeMirror: {
                    DeviceState& ref = devices_[s.ref];
                    if (!ref.w || !ref.l || !ref.current)
                        fail("mirror reference '" + s.ref + "' is not sized", s.line);
                    double id = checked(eval(*s.expr), s.name + " current", s.line);
                    DeviceState& d = devices_[s.name];
                    d.l = *ref.l;  // mirrors share the reference channel length
                    double w = *ref.w * (id / *ref.current) * (*d.l / *ref.l);
                    if (!(w > 0.0))
                        fail("computed width for '" + s.name + "' is not positive", s.line);
                    d.w = checked(w, s.name + " width", s.line);
                    d.current = id;
                    note("W." + s.name, w);
                    break;
                }
                case Stmt::Kind::SetPassive:
                case Stmt::Kind::SetSource: {
                    double v = checked(eval(*s.expr), s.name, s.line);
                    if (!(v > 0.0)) fail("value for '" + s.name + "' must be > 0", s.line);
                    if (s.kind == Stmt::Kind::SetPassive) out_.variables.passives[s.name] = v;
                    else out_.variables.bias_currents[s.name] = v;
                    note(s.name, v);
                    break;
                }
                case Stmt::Kind::Predict:
                    predictions.push_back(&s);
                    break;
            }
        }
    }

    void finish_matched() {
        for (const auto& [dev, c] : plan_.classifications) {
            if (c.cls != DeviceClass::Matched) continue;
            auto it = devices_.find(c.ref);
            if (it == devices_.end() || !it->second.w)
                fail("matched partner '" + c.ref + "' of '" + dev + "' is not sized", c.line);
            DeviceState& d = devices_[dev];
            d.w = it->second.w;
            d.l = it->second.l;
            d.current = it->second.current;
            note("W." + dev, *d.w);
        }
    }

    void collect_variables() {
        for (const auto& [dev, c] : plan_.classifications) {
            auto it = devices_.find(dev);
            if (it == devices_.end() || !it->second.w || !it->second.l)
                fail("device '" + dev + "' was never sized", c.line);
            out_.variables.widths[dev] = *it->second.w;
            out_.variables.lengths[dev] = *it->second.l;
        }
    }

    void eval_predictions(const std::vector<const Stmt*>& predictions) {
        for (const Stmt* s : predictions) {
            double v = checked(eval(*s->expr), "predict " + s->name, s->line);
            note("predict." + s->name, v);
            if (s->name == "av") out_.predicted.av_db = v;
            else if (s->name == "gbw") out_.predicted.gbw_hz = v;
            else if (s->name == "pm") out_.predicted.pm_deg = v;
            else if (s->name == "sr_pos") out_.predicted.sr_pos = v;
            else if (s->name == "sr_neg") out_.predicted.sr_neg = v;
            else out_.predicted.power_w = v;
        }
    }
};

} // namespace plan_detail

/// Execute a plan against calibration data and design targets. Pure: the
/// output is a function of (plan, calib, targets) only.
inline PlanOutput execute_plan(const SizingPlan& plan, const CalibrationMap& calib,
                               const DesignTargets& targets) {
    return plan_detail::Executor(plan, calib, targets).run();
}

/// Structural diagnostics for a plan against a concrete netlist: full device
/// coverage, classification sanity, mirror-L conformance, prediction
/// completeness. Returns human-readable findings; empty means clean.
inline std::vector<std::string> validate_plan(const SizingPlan& plan, const Netlist& net,
                                              const DesignTargets* targets = nullptr) {
    std::vector<std::string> diags;

    for (const auto* inst : net.mosfets())
        if (!plan.find_class(inst->name))
            diags.push_back("netlist device " + inst->name + " is not classified by the plan");
    for (const auto& [dev, c] : plan.classifications) {
        const Instance* inst = net.find(dev);
        if (!inst || !inst->is_mosfet())
            diags.push_back("plan classifies " + dev + " which is not a MOSFET in the netlist");
        if (c.cls != DeviceClass::Independent) {
            const Instance* ref = net.find(c.ref);
            if (!ref || !ref->is_mosfet())
                diags.push_back("plan references " + c.ref + " (for " + dev +
                                ") which is not a MOSFET in the netlist");
        }
    }

    // mirror-L conformance: a mirror device carrying its own length statement
    // is flagged; execution forces L = L_ref either way
    for (const auto& s : plan.statements) {
        if (s.kind != Stmt::Kind::Length) continue;
        const Classification* c = plan.find_class(s.name);
        if (c && c->cls == DeviceClass::Mirror)
            diags.push_back("mirror device " + s.name + " declares its own length; it is forced to " +
                            c->ref + "'s length at execution");
    }

    // required prediction slots
    std::set<std::string> predicted;
    std::function<void(const std::vector<Stmt>&)> scan = [&](const std::vector<Stmt>& body) {
        for (const auto& s : body) {
            if (s.kind == Stmt::Kind::Predict) predicted.insert(s.name);
            if (s.kind == Stmt::Kind::If) {
                scan(s.then_body);
                scan(s.else_body);
            }
        }
    };
    scan(plan.statements);
    std::vector<std::string> required = {"av", "gbw", "pm", "sr_pos", "sr_neg"};
    if (targets && targets->power_max) required.push_back("power");
    for (const auto& m : required)
        if (!predicted.count(m))
            diags.push_back("plan does not predict metric '" + m + "' required by the targets");

    return diags;
}

} // namespace sizeloop
