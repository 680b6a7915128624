#pragma once

#include "sizeloop/campaign.hpp"

namespace sizeloop {

class ReportError : public std::runtime_error {
public:
    explicit ReportError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Rendered views over a persisted run directory; derived solely from the
/// round documents, no hidden state.
struct ReportBundle {
    std::string convergence_table;
    std::string trajectory_table;
    std::vector<std::string> calibration_tables;  // one per round
    std::string trajectory_csv;
};

namespace report_detail {

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ReportError("missing run document '" + path.string() + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ReportError("corrupt run document '" + path.string() + "'");
    return j;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ReportError("missing run document '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace report_detail

inline ReportBundle build_report(const std::string& run_dir) {
    namespace fs = std::filesystem;
    fs::path root(run_dir);
    if (!fs::exists(root / "result.json"))
        throw ReportError("'" + run_dir + "' is not a run directory (no result.json)");
    json result = report_detail::read_json(root / "result.json");

    std::vector<fs::path> rounds;
    for (int r = 0;; ++r) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "round_%02d", r);
        fs::path dir = root / buf;
        if (!fs::exists(dir)) break;
        rounds.push_back(dir);
    }
    if (rounds.empty()) throw ReportError("'" + run_dir + "' contains no rounds");

    std::string topology = "?";
    {
        std::istringstream net(report_detail::read_text(rounds[0] / "netlist.sp"));
        std::string line;
        while (std::getline(net, line))
            if (line.rfind(".title ", 0) == 0) {
                topology = line.substr(7);
                break;
            }
    }

    ReportBundle bundle;
    {
        json fm = result.at("final_metrics");
        std::ostringstream t;
        t << "Topology  Sims  Converged  Av(dB)  GBW(MHz)  PM(deg)  SR+(V/us)  SR-(V/us)  Power(uW)\n";
        char buf[240];
        std::snprintf(buf, sizeof(buf), "%-9s %-5d %-10s %-7.1f %-9.1f %-8.1f %-10.1f %-10.1f %-9.1f\n",
                      topology.c_str(), result.at("rounds_used").get<int>(),
                      result.at("converged").get<bool>() ? "yes" : "no",
                      fm.at("av_db").get<double>(), fm.at("gbw_hz").get<double>() / 1e6,
                      fm.at("pm_deg").get<double>(), fm.at("sr_pos").get<double>() / 1e6,
                      fm.at("sr_neg").get<double>() / 1e6, fm.at("power_w").get<double>() * 1e6);
        t << buf;
        bundle.convergence_table = t.str();
    }
    {
        std::ostringstream t, csv;
        t << "Round  Av(dB)  GBW(MHz)  PM(deg)  SR+(V/us)  SR-(V/us)  Power(uW)\n";
        csv << "round,av_db,gbw_hz,pm_deg,sr_pos,sr_neg,power_w\n";
        for (std::size_t r = 0; r < rounds.size(); ++r) {
            json m = report_detail::read_json(rounds[r] / "metrics.json");
            char buf[240];
            std::snprintf(buf, sizeof(buf), "%-6zu %-7.1f %-9.1f %-8.1f %-10.1f %-10.1f %-9.1f\n",
                          r, m.at("av_db").get<double>(), m.at("gbw_hz").get<double>() / 1e6,
                          m.at("pm_deg").get<double>(), m.at("sr_pos").get<double>() / 1e6,
                          m.at("sr_neg").get<double>() / 1e6, m.at("power_w").get<double>() * 1e6);
            t << buf;
            csv << r << "," << format_exact(m.at("av_db").get<double>()) << ","
                << format_exact(m.at("gbw_hz").get<double>()) << ","
                << format_exact(m.at("pm_deg").get<double>()) << ","
                << format_exact(m.at("sr_pos").get<double>()) << ","
                << format_exact(m.at("sr_neg").get<double>()) << ","
                << format_exact(m.at("power_w").get<double>()) << "\n";
            bundle.calibration_tables.push_back(
                report_detail::read_text(rounds[r] / "calibration.txt"));
        }
        bundle.trajectory_table = t.str();
        bundle.trajectory_csv = csv.str();
    }
    return bundle;
}

} // namespace sizeloop
