// Command-line front end: run sizing campaigns, run one-off simulations,
// extract calibration tables, execute plans standalone, render reports.

#include "sizeloop/campaign.hpp"
#include "sizeloop/http_provider.hpp"
#include "sizeloop/report.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace sizeloop;

constexpr int kExitConverged = 0;
constexpr int kExitNotConverged = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string default_assets() {
#ifdef SIZELOOP_ASSET_DIR
    return SIZELOOP_ASSET_DIR;
#else
    return "assets";
#endif
}

TestbenchConfig testbench_from(const KeyValueConfig& cfg) {
    TestbenchConfig tb;
    tb.output_node = cfg.string_or("out_node", "OUT");
    tb.input_source = cfg.string_or("in_source", "VIN");
    tb.cut_device = cfg.string_or("cut_device", "");
    tb.step_amplitude = cfg.number_or("step_amplitude", 0.0);
    tb.sweep.f_start = cfg.number_or("f_start", 1.0);
    tb.sweep.f_stop = cfg.number_or("f_stop", 100e9);
    tb.sweep.points_per_decade = static_cast<int>(cfg.number_or("points_per_decade", 40));
    return tb;
}

void print_round(const RoundRecord& r) {
    char buf[240];
    std::snprintf(buf, sizeof(buf),
                  "R%-2d  av=%6.2f dB  gbw=%8.2f MHz  pm=%6.2f deg  sr+=%7.2f V/us  "
                  "sr-=%7.2f V/us  power=%7.1f uW  %s",
                  r.index, r.measured.av_db, r.measured.gbw_hz / 1e6, r.measured.pm_deg,
                  r.measured.sr_pos / 1e6, r.measured.sr_neg / 1e6, r.measured.power_w * 1e6,
                  r.passed ? "PASS" : "fail");
    std::cout << buf << "\n";
}

int cmd_run(const std::string& netlist_path, const std::string& targets_path,
            const std::string& process_path, const std::string& provider_name,
            const std::string& endpoint, const std::string& auth_env, const std::string& out_dir,
            int max_rounds, int repeat, double mu_scale, const std::string& assets) {
    KeyValueConfig targets_cfg = KeyValueConfig::load(targets_path);

    CampaignConfig cfg;
    cfg.netlist = parse_netlist(slurp(netlist_path));
    cfg.targets = DesignTargets::from_config(targets_cfg);
    cfg.card = ProcessCard::load(process_path);
    cfg.testbench = testbench_from(targets_cfg);
    cfg.max_rounds = max_rounds;

    if (provider_name == "static") {
        cfg.provider = std::make_shared<StaticProvider>(cfg.netlist, cfg.card, mu_scale);
    } else if (provider_name == "http") {
        if (endpoint.empty()) throw ConfigError("--provider http requires --endpoint");
        HttpProviderConfig http;
        http.endpoint = endpoint;
        http.rules_dir = assets + "/prompt";
        if (!auth_env.empty()) {
            const char* token = std::getenv(auth_env.c_str());
            if (!token) throw ConfigError("auth environment variable '" + auth_env + "' not set");
            http.auth_token = token;
        }
        cfg.provider = std::make_shared<HttpProvider>(http);
    } else {
        throw ConfigError("unknown provider '" + provider_name + "' (use static or http)");
    }

    bool all_converged = true;
    for (int trial = 0; trial < repeat; ++trial) {
        if (!out_dir.empty()) {
            cfg.run_dir = out_dir;
            if (repeat > 1) cfg.run_dir += "/trial_" + std::to_string(trial + 1);
        }
        CampaignResult result = run_campaign(cfg);
        for (const auto& r : result.history.rounds) print_round(r);
        std::cout << (result.converged ? "CONVERGED" : "NOT CONVERGED") << " after "
                  << result.rounds_used << " simulation(s)";
        if (result.cycle_flagged) std::cout << " [cycle detected in design variables]";
        std::cout << "\n";
        if (!cfg.run_dir.empty()) std::cout << "run directory: " << cfg.run_dir << "\n";
        all_converged = all_converged && result.converged;
    }
    return all_converged ? kExitConverged : kExitNotConverged;
}

int cmd_simulate(const std::string& netlist_path, const std::string& process_path,
                 const std::string& targets_path, const std::string& out_dir) {
    Netlist net = parse_netlist(slurp(netlist_path));
    ProcessCard card = ProcessCard::load(process_path);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    if (targets_path.empty()) {
        OperatingPoint op = dc_operating_point(net, card);
        detail::write_json(fs::path(out_dir) / "op.json", to_json(op));
        std::cout << "DC operating point solved (residual " << format_si(op.max_residual, "A")
                  << "); op.json written\n";
        return kExitConverged;
    }

    KeyValueConfig targets_cfg = KeyValueConfig::load(targets_path);
    DesignTargets targets = DesignTargets::from_config(targets_cfg);
    TestbenchConfig tb = testbench_from(targets_cfg);
    tb.vdd = targets.vdd;
    tb.vss = targets.vss;
    tb.gbw_ref = targets.gbw_hz_min;
    Netlist prepared = detail::prepare_netlist(net, targets);

    SimulationOutcome sim = run_testbench(prepared, card, tb);
    detail::write_json(fs::path(out_dir) / "op.json", to_json(sim.op));
    detail::write_json(fs::path(out_dir) / "metrics.json", to_json(sim.metrics));
    char buf[200];
    std::snprintf(buf, sizeof(buf),
                  "av=%.2f dB  gbw=%.3f MHz  pm=%.2f deg  sr+=%.2f V/us  sr-=%.2f V/us  "
                  "power=%.1f uW",
                  sim.metrics.av_db, sim.metrics.gbw_hz / 1e6, sim.metrics.pm_deg,
                  sim.metrics.sr_pos / 1e6, sim.metrics.sr_neg / 1e6, sim.metrics.power_w * 1e6);
    std::cout << buf << "\nop.json and metrics.json written to " << out_dir << "\n";
    return kExitConverged;
}

int cmd_calibrate(const std::string& op_path) {
    json j = json::parse(slurp(op_path), nullptr, false);
    if (j.is_discarded()) throw ConfigError("'" + op_path + "' is not valid JSON");
    OperatingPoint op = operating_point_from_json(j);
    CalibrationTable table;
    for (const auto& [name, d] : op.device_ops)
        table.rows.push_back(extract_device(d, d.w, d.l, name));
    table.warnings = flag_regions(table);
    std::cout << format_table(table);
    return kExitConverged;
}

int cmd_plan_exec(const std::string& plan_path, const std::string& calib_path,
                  const std::string& targets_path) {
    SizingPlan plan = parse_plan(slurp(plan_path));
    json cj = json::parse(slurp(calib_path), nullptr, false);
    if (cj.is_discarded()) throw ConfigError("'" + calib_path + "' is not valid JSON");
    CalibrationMap calib = calibration_map_from_json(cj);
    DesignTargets targets = DesignTargets::load(targets_path);

    PlanOutput out = execute_plan(plan, calib, targets);
    std::cout << "bindings:\n";
    for (const auto& [name, value] : out.trace.entries)
        std::cout << "  " << name << " = " << format_si(value) << "\n";
    std::cout << "design variables:\n" << to_json(out.variables).dump(2) << "\n";
    std::cout << "predicted metrics:\n" << to_json(out.predicted).dump(2) << "\n";
    return kExitConverged;
}

int cmd_report(const std::string& run_dir, const std::string& csv_path) {
    ReportBundle bundle = build_report(run_dir);
    std::cout << "== Convergence ==\n" << bundle.convergence_table << "\n";
    std::cout << "== Trajectory ==\n" << bundle.trajectory_table << "\n";
    std::cout << "== Calibration (final round) ==\n" << bundle.calibration_tables.back();
    if (!csv_path.empty()) {
        std::ofstream out(csv_path);
        if (!out) throw ConfigError("cannot write '" + csv_path + "'");
        out << bundle.trajectory_csv;
        std::cout << "trajectory CSV written to " << csv_path << "\n";
    }
    return kExitConverged;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sizeloop - self-calibrating analog circuit sizing loop"};
    app.require_subcommand(1);

    std::string netlist, targets, process, provider = "static", endpoint, auth_env, out_dir;
    std::string op_path, plan_path, calib_path, run_dir, csv_path;
    std::string assets = default_assets();
    int max_rounds = 16, repeat = 1;
    double mu_scale = 1.0;

    CLI::App* run = app.add_subcommand("run", "run a sizing campaign");
    run->add_option("--netlist", netlist, "circuit netlist (.sp)")->required();
    run->add_option("--targets", targets, "target specification config")->required();
    run->add_option("--process", process, "process card config")->required();
    run->add_option("--provider", provider, "plan provider: static or http");
    run->add_option("--endpoint", endpoint, "HTTP provider endpoint URL");
    run->add_option("--auth-env", auth_env, "environment variable holding the bearer token");
    run->add_option("--out", out_dir, "run directory for per-round artifacts");
    run->add_option("--max-rounds", max_rounds, "round budget (simulations)");
    run->add_option("--repeat", repeat, "run N sequential campaigns");
    run->add_option("--mu-scale", mu_scale, "scale factor on round-0 muCox estimates");
    run->add_option("--assets", assets, "asset directory (prompt rule texts)");

    CLI::App* simulate = app.add_subcommand("simulate", "one-off simulation of a netlist");
    simulate->add_option("--netlist", netlist, "circuit netlist (.sp)")->required();
    simulate->add_option("--process", process, "process card config")->required();
    simulate->add_option("--targets", targets, "targets config (enables AC/transient metrics)");
    simulate->add_option("--out", out_dir, "output directory")->required();

    CLI::App* calibrate = app.add_subcommand("calibrate", "render a calibration table from op.json");
    calibrate->add_option("--op", op_path, "op.json from a simulation")->required();

    CLI::App* plan_exec = app.add_subcommand("plan-exec", "execute a sizing plan standalone");
    plan_exec->add_option("--plan", plan_path, "plan DSL file")->required();
    plan_exec->add_option("--calib", calib_path, "calibration records (calibration.json)")->required();
    plan_exec->add_option("--targets", targets, "target specification config")->required();

    CLI::App* report = app.add_subcommand("report", "render tables from a run directory");
    report->add_option("--run", run_dir, "run directory")->required();
    report->add_option("--csv", csv_path, "also write the trajectory as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (run->parsed())
            return cmd_run(netlist, targets, process, provider, endpoint, auth_env, out_dir,
                           max_rounds, repeat, mu_scale, assets);
        if (simulate->parsed()) return cmd_simulate(netlist, process, targets, out_dir);
        if (calibrate->parsed()) return cmd_calibrate(op_path);
        if (plan_exec->parsed()) return cmd_plan_exec(plan_path, calib_path, targets);
        if (report->parsed()) return cmd_report(run_dir, csv_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
