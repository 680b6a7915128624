#pragma once

#include <filesystem>
#include <fstream>
#include <memory>

#include "sizeloop/json_io.hpp"
#include "sizeloop/provider.hpp"
#include "sizeloop/testbench.hpp"

namespace sizeloop {

class CampaignError : public std::runtime_error {
public:
    CampaignError(const std::string& msg, int round)
        : std::runtime_error("round " + std::to_string(round) + ": " + msg), round(round) {}
    int round;
};

struct CampaignConfig {
    Netlist netlist;
    DesignTargets targets;
    ProcessCard card;
    std::shared_ptr<PlanProvider> provider;
    int max_rounds = 16;  // the paper's worst observed case
    std::string run_dir;  // empty disables persistence
    FeedbackConfig feedback;
    TestbenchConfig testbench;
    SolverOptions solver;

    void validate() const {
        if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
        if (!provider) throw ConfigError("no plan provider configured");
        targets.validate();
    }
};

struct CampaignResult {
    bool converged = false;
    int rounds_used = 0;  // simulations, round 0 inclusive
    DesignVariables final_variables;
    MetricSet final_metrics;
    RoundHistory history;
    bool cycle_flagged = false;
};

/// Oscillation guard: true when identical design variables recur in two
/// non-adjacent rounds. Diagnostic only, never an abort.
inline bool detect_design_cycle(const RoundHistory& history) {
    const auto& rounds = history.rounds;
    for (std::size_t i = 0; i < rounds.size(); ++i)
        for (std::size_t j = i + 2; j < rounds.size(); ++j)
            if (rounds[i].variables == rounds[j].variables) return true;
    return false;
}

namespace detail {

namespace fs = std::filesystem;

inline void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw SimError("cannot write '" + path.string() + "'");
    out << content;
}

inline void write_json(const fs::path& path, const json& j) {
    write_file(path, j.dump(2) + "\n");
}

/// Testbench fixups: the load capacitor and rail sources track the targets.
inline Netlist prepare_netlist(const Netlist& net, const DesignTargets& targets) {
    Netlist out = net;
    if (Instance* cl = out.find("CL"))
        if (auto* c = std::get_if<Capacitor>(&cl->kind)) c->capacitance = targets.cl;
    if (Instance* vdd = out.find("VDD"))
        if (auto* v = std::get_if<VoltageSourceDc>(&vdd->kind)) v->voltage = targets.vdd;
    if (Instance* vss = out.find("VSS"))
        if (auto* v = std::get_if<VoltageSourceDc>(&vss->kind)) v->voltage = targets.vss;
    return out;
}

inline CalibrationMap map_from_table(const CalibrationTable& table) {
    CalibrationMap map;
    for (const auto& rec : table.rows) map[rec.device] = rec;
    return map;
}

} // namespace detail

/// The round loop: provider -> plan execution -> simulation -> convergence
/// check -> calibration -> margin feedback -> next round. Every round
/// persists its artifacts under `run_dir/round_NN/`.
inline CampaignResult run_campaign(const CampaignConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();

    Netlist base_net = detail::prepare_netlist(cfg.netlist, cfg.targets);
    TestbenchConfig tb = cfg.testbench;
    tb.vdd = cfg.targets.vdd;
    tb.vss = cfg.targets.vss;
    if (tb.gbw_ref == 0.0) tb.gbw_ref = cfg.targets.gbw_hz_min;

    const bool persist = !cfg.run_dir.empty();
    if (persist) fs::create_directories(cfg.run_dir);

    CampaignResult result;
    std::string plan_text;
    CalibrationMap calib;
    DesignTargets design_targets = cfg.targets;
    CalibrationTable last_table;
    std::vector<PredictionError> last_errors;

    for (int round = 0; round < cfg.max_rounds; ++round) {
        fs::path round_dir;
        if (persist) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "round_%02d", round);
            round_dir = fs::path(cfg.run_dir) / buf;
            fs::create_directories(round_dir);
        }

        // 1. provider
        ProviderRequest req;
        req.round = round;
        req.netlist_text = serialize_netlist(base_net);
        req.topology = base_net.name;
        req.base_targets = cfg.targets;
        req.design_targets = design_targets;
        req.history = &result.history;
        if (round >= 1) {
            req.previous_plan = plan_text;
            req.calibration = last_table;
            req.errors = last_errors;
        }
        ProviderResponse resp;
        try {
            resp = cfg.provider->respond(req);
        } catch (const std::exception& e) {
            throw CampaignError(std::string("provider failed: ") + e.what(), round);
        }
        plan_text = resp.plan_text;
        if (round == 0) calib = resp.estimates;

        // 2. acceptance gate + execution
        SizingPlan plan;
        PlanOutput out;
        try {
            plan = parse_plan(plan_text);
            auto diags = validate_plan(plan, base_net, &cfg.targets);
            if (!diags.empty()) {
                std::string msg = "plan rejected:";
                for (const auto& d : diags) msg += "\n  " + d;
                throw PlanError(msg);
            }
            out = execute_plan(plan, calib, design_targets);
        } catch (const PlanError& e) {
            throw CampaignError(std::string("sizing plan failed: ") + e.what(), round);
        }

        Netlist sized = apply_design_variables(base_net, out.variables);
        if (persist) {
            detail::write_file(round_dir / "plan.dsl", plan_text);
            detail::write_json(round_dir / "design.json", to_json(out.variables));
            detail::write_file(round_dir / "netlist.sp", serialize_netlist(sized));
        }

        // 3. simulate (one simulation in the paper's counting)
        SimulationOutcome sim;
        try {
            sim = run_testbench(sized, cfg.card, tb, cfg.solver);
        } catch (const SimError& e) {
            if (persist)
                detail::write_file(round_dir / "simulation_error.txt", std::string(e.what()) + "\n");
            throw CampaignError(std::string("simulation failed: ") + e.what(), round);
        }

        // 4. calibration + prediction errors + verdict against base targets
        last_table = build_calibration_table(sized, sim.op);
        last_errors = compute_errors(out.predicted, sim.metrics);
        ConvergenceVerdict verdict = check_convergence(sim.metrics, cfg.targets);

        if (persist) {
            detail::write_json(round_dir / "op.json", to_json(sim.op));
            detail::write_json(round_dir / "metrics.json", to_json(sim.metrics));
            detail::write_file(round_dir / "calibration.txt", format_table(last_table));
            detail::write_json(round_dir / "calibration.json", to_json(last_table));
            detail::write_json(round_dir / "errors.json", to_json(last_errors));
            std::string prompt = cfg.provider->last_prompt();
            if (!prompt.empty()) detail::write_file(round_dir / "prompt.txt", prompt);
        }

        RoundRecord rec;
        rec.variables = out.variables;
        rec.predicted = out.predicted;
        rec.measured = sim.metrics;
        rec.errors = last_errors;
        rec.passed = verdict.pass;
        rec.design_targets_used = design_targets;
        result.history.append(rec);

        result.final_variables = out.variables;
        result.final_metrics = sim.metrics;
        result.rounds_used = round + 1;

        if (verdict.pass) {
            result.converged = true;
            break;
        }

        // 5. margin feedback for the next round; verdicts stay anchored to base
        design_targets = derive_design_targets(cfg.targets, last_errors, result.history,
                                               cfg.feedback);
        calib = detail::map_from_table(last_table);
    }

    result.cycle_flagged = detect_design_cycle(result.history);

    if (persist) {
        json summary{{"converged", result.converged},
                     {"rounds_used", result.rounds_used},
                     {"cycle_flagged", result.cycle_flagged},
                     {"final_metrics", to_json(result.final_metrics)},
                     {"final_design", to_json(result.final_variables)}};
        detail::write_json(fs::path(cfg.run_dir) / "result.json", summary);
    }
    return result;
}

} // namespace sizeloop
