#pragma once

#include <json.hpp>

#include "sizeloop/feedback.hpp"

namespace sizeloop {

using json = nlohmann::json;

inline json to_json(const DeviceOp& d) {
    return json{{"type", to_string(d.type)},
                {"w", d.w},
                {"l", d.l},
                {"id", d.id},
                {"gm", d.gm},
                {"gds", d.gds},
                {"gmb", d.gmb},
                {"vgs", d.vgs},
                {"vds", d.vds},
                {"vsb", d.vsb},
                {"vth", d.vth},
                {"vov", d.vov},
                {"region", to_string(d.region)}};
}

inline DeviceOp device_op_from_json(const json& j) {
    DeviceOp d;
    d.type = j.at("type").get<std::string>() == "PMOS" ? MosType::Pmos : MosType::Nmos;
    d.w = j.at("w").get<double>();
    d.l = j.at("l").get<double>();
    d.id = j.at("id").get<double>();
    d.gm = j.at("gm").get<double>();
    d.gds = j.at("gds").get<double>();
    d.gmb = j.value("gmb", 0.0);
    d.vgs = j.at("vgs").get<double>();
    d.vds = j.at("vds").get<double>();
    d.vsb = j.value("vsb", 0.0);
    d.vth = j.at("vth").get<double>();
    d.vov = j.at("vov").get<double>();
    std::string r = j.at("region").get<std::string>();
    d.region = r == "SAT" ? Region::Sat : (r == "TRIODE" ? Region::Triode : Region::Cutoff);
    return d;
}

inline json to_json(const OperatingPoint& op) {
    json devices = json::object();
    for (const auto& [name, d] : op.device_ops) devices[name] = to_json(d);
    return json{{"nodes", op.node_voltages},
                {"devices", devices},
                {"supply_currents", op.supply_currents},
                {"max_residual", op.max_residual}};
}

inline OperatingPoint operating_point_from_json(const json& j) {
    OperatingPoint op;
    op.node_voltages = j.at("nodes").get<std::map<std::string, double>>();
    for (const auto& [name, jd] : j.at("devices").items())
        op.device_ops[name] = device_op_from_json(jd);
    op.supply_currents = j.value("supply_currents", std::map<std::string, double>{});
    op.max_residual = j.value("max_residual", 0.0);
    return op;
}

inline json to_json(const MetricSet& m) {
    return json{{"av_db", m.av_db},   {"gbw_hz", m.gbw_hz},   {"pm_deg", m.pm_deg},
                {"sr_pos", m.sr_pos}, {"sr_neg", m.sr_neg},   {"power_w", m.power_w}};
}

inline MetricSet metric_set_from_json(const json& j) {
    MetricSet m;
    m.av_db = j.at("av_db").get<double>();
    m.gbw_hz = j.at("gbw_hz").get<double>();
    m.pm_deg = j.at("pm_deg").get<double>();
    m.sr_pos = j.at("sr_pos").get<double>();
    m.sr_neg = j.at("sr_neg").get<double>();
    m.power_w = j.at("power_w").get<double>();
    return m;
}

inline json to_json(const DesignVariables& dv) {
    return json{{"widths", dv.widths},
                {"lengths", dv.lengths},
                {"passives", dv.passives},
                {"bias_currents", dv.bias_currents}};
}

inline DesignVariables design_variables_from_json(const json& j) {
    DesignVariables dv;
    dv.widths = j.at("widths").get<std::map<std::string, double>>();
    dv.lengths = j.at("lengths").get<std::map<std::string, double>>();
    dv.passives = j.at("passives").get<std::map<std::string, double>>();
    dv.bias_currents = j.at("bias_currents").get<std::map<std::string, double>>();
    return dv;
}

inline json to_json(const PredictionError& e) {
    return json{{"metric", e.metric},       {"kind", to_string(e.kind)},
                {"predicted", e.predicted}, {"measured", e.measured},
                {"error", e.error},         {"undefined", e.undefined}};
}

inline json to_json(const std::vector<PredictionError>& errors) {
    json arr = json::array();
    for (const auto& e : errors) arr.push_back(to_json(e));
    return arr;
}

inline json to_json(const CalibrationRecord& r) {
    json j{{"device", r.device}, {"type", to_string(r.type)}, {"w", r.w},
           {"l", r.l},           {"id", r.id},                {"vov", r.vov},
           {"vds", r.vds},       {"gm", r.gm},                {"region", to_string(r.region)},
           {"vth", r.vth}};
    if (r.mu_cox) j["mu_cox"] = *r.mu_cox;
    if (r.a_gm) j["a_gm"] = *r.a_gm;
    if (r.lambda) j["lambda"] = *r.lambda;
    if (r.ro) j["ro"] = *r.ro;
    return j;
}

inline json to_json(const CalibrationTable& t) {
    json rows = json::array();
    for (const auto& r : t.rows) rows.push_back(to_json(r));
    return json{{"rows", rows}, {"warnings", t.warnings}};
}

inline CalibrationRecord calibration_record_from_json(const json& j) {
    CalibrationRecord r;
    r.device = j.at("device").get<std::string>();
    r.type = j.at("type").get<std::string>() == "PMOS" ? MosType::Pmos : MosType::Nmos;
    r.w = j.at("w").get<double>();
    r.l = j.at("l").get<double>();
    r.id = j.value("id", 0.0);
    r.vov = j.value("vov", 0.0);
    r.vds = j.value("vds", 0.0);
    r.gm = j.value("gm", 0.0);
    std::string reg = j.value("region", std::string("SAT"));
    r.region = reg == "SAT" ? Region::Sat : (reg == "TRIODE" ? Region::Triode : Region::Cutoff);
    if (j.contains("mu_cox")) r.mu_cox = j.at("mu_cox").get<double>();
    if (j.contains("a_gm")) r.a_gm = j.at("a_gm").get<double>();
    if (j.contains("lambda")) r.lambda = j.at("lambda").get<double>();
    if (j.contains("ro")) r.ro = j.at("ro").get<double>();
    r.vth = j.value("vth", 0.0);
    return r;
}

inline CalibrationMap calibration_map_from_json(const json& j) {
    CalibrationMap map;
    const json& rows = j.contains("rows") ? j.at("rows") : j;
    for (const auto& row : rows) {
        CalibrationRecord rec = calibration_record_from_json(row);
        map[rec.device] = rec;
    }
    return map;
}

} // namespace sizeloop
