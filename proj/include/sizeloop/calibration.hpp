#pragma once

#include <iomanip>
#include <optional>
#include <sstream>

#include "sizeloop/simulator.hpp"

namespace sizeloop {

/// One-shot calibration row: the four extracted parameters plus the bias
/// quantities they came from. Non-conducting devices carry no parameters.
struct CalibrationRecord {
    std::string device;
    MosType type = MosType::Nmos;
    double w = 0.0, l = 0.0;
    double id = 0.0;   // magnitude
    double vov = 0.0;
    double vds = 0.0;  // magnitude
    double gm = 0.0;
    Region region = Region::Cutoff;
    std::optional<double> mu_cox;   // A/V^2
    std::optional<double> a_gm;
    std::optional<double> lambda;   // 1/V
    std::optional<double> ro;       // Ohm
    double vth = 0.0;  // body-adjusted, device polarity frame
};

struct CalibrationTable {
    std::vector<CalibrationRecord> rows;   // netlist order
    std::vector<std::string> warnings;
};

/// Extract muCox, a_gm, lambda, Vth from a solved device bias point.
/// muCox deliberately omits the (1 + lambda*Vds) factor: the Vds dependence
/// is absorbed into muCox itself, which is why per-round re-extraction
/// matters.
inline CalibrationRecord extract_device(const DeviceOp& op, double w, double l,
                                        const std::string& name = "") {
    CalibrationRecord rec;
    rec.device = name;
    rec.type = op.type;
    rec.w = w;
    rec.l = l;
    rec.id = std::fabs(op.id);
    rec.vov = op.vov;
    rec.vds = std::fabs(op.vds);
    rec.gm = op.gm;
    rec.vth = op.vth;
    rec.region = op.region;
    if (op.region == Region::Cutoff || !(rec.id > 0.0) || !(op.vov > 0.0)) {
        rec.region = Region::Cutoff;
        return rec;
    }
    rec.mu_cox = 2.0 * rec.id * l / (w * rec.vov * rec.vov);
    rec.a_gm = op.gm * rec.vov / (2.0 * rec.id);
    rec.lambda = op.gds / rec.id;
    if (op.gds > 0.0) rec.ro = 1.0 / op.gds;
    return rec;
}

inline std::vector<std::string> flag_regions(const CalibrationTable& table) {
    std::vector<std::string> warnings;
    for (const auto& r : table.rows) {
        if (r.region == Region::Triode) {
            std::ostringstream w;
            w << "WARNING: " << r.device << " in TRIODE (|Vds|=" << format_fixed(r.vds * 1e3, 0)
              << "mV < Vov=" << format_fixed(r.vov * 1e3, 0) << "mV)";
            warnings.push_back(w.str());
        } else if (r.region == Region::Cutoff) {
            warnings.push_back("WARNING: " + r.device + " in CUTOFF (Vov <= 0)");
        }
    }
    return warnings;
}

/// One row per MOSFET, in netlist order.
inline CalibrationTable build_calibration_table(const Netlist& net, const OperatingPoint& op) {
    CalibrationTable table;
    for (const auto& inst : net.instances) {
        if (!inst.is_mosfet()) continue;
        auto it = op.device_ops.find(inst.name);
        if (it == op.device_ops.end())
            throw SimError("operating point has no entry for device '" + inst.name + "'");
        table.rows.push_back(
            extract_device(it->second, inst.mosfet().width, inst.mosfet().length, inst.name));
    }
    table.warnings = flag_regions(table);
    return table;
}

/// Fixed column order: Dev Type W/L Ids Vov Vds gm Region uCox a_gm lam ro
/// Vth — display units um, uA, mV, uS, uA/V^2, 1/V, kOhm, mV.
inline std::string format_table(const CalibrationTable& table) {
    static const char* headers[] = {"Dev",    "Type",        "W/L(um)", "Ids(uA)", "Vov(mV)",
                                    "Vds(mV)", "gm(uS)",     "Region",  "uCox(uA/V2)",
                                    "a_gm",   "lam(1/V)",    "ro(kOhm)", "Vth(mV)"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : table.rows) {
        std::vector<std::string> row;
        row.push_back(r.device);
        row.push_back(to_string(r.type));
        row.push_back(format_fixed(r.w * 1e6, 1) + "/" + format_fixed(r.l * 1e6, 2));
        row.push_back(format_fixed(r.id * 1e6, 2));
        row.push_back(format_fixed(r.vov * 1e3, 1));
        row.push_back(format_fixed(r.vds * 1e3, 1));
        row.push_back(format_fixed(r.gm * 1e6, 2));
        row.push_back(to_string(r.region));
        row.push_back(r.mu_cox ? format_fixed(*r.mu_cox * 1e6, 1) : "-");
        row.push_back(r.a_gm ? format_fixed(*r.a_gm, 3) : "-");
        row.push_back(r.lambda ? format_fixed(*r.lambda, 4) : "-");
        row.push_back(r.ro ? format_fixed(*r.ro * 1e-3, 1) : "-");
        row.push_back(format_fixed(r.vth * 1e3, 1));
        cells.push_back(std::move(row));
    }

    const std::size_t ncols = std::size(headers);
    std::vector<std::size_t> width(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
        width[c] = std::string(headers[c]).size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    std::ostringstream out;
    for (std::size_t c = 0; c < ncols; ++c)
        out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << headers[c];
    out << "\n";
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < ncols; ++c)
            out << (c ? "  " : "") << std::left << std::setw(static_cast<int>(width[c])) << row[c];
        out << "\n";
    }
    for (const auto& w : table.warnings) out << w << "\n";
    return out.str();
}

} // namespace sizeloop
