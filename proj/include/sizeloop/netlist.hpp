#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "sizeloop/units.hpp"

namespace sizeloop {

class NetlistError : public std::runtime_error {
public:
    NetlistError(const std::string& msg, int line = 0, int column = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ":" +
                                            std::to_string(column) + ": " + msg
                                      : msg),
          line(line), column(column) {}
    int line;
    int column;
};

enum class MosType { Nmos, Pmos };

inline const char* to_string(MosType t) { return t == MosType::Nmos ? "NMOS" : "PMOS"; }

/// Terminals in order: drain, gate, source, bulk.
struct Mosfet {
    MosType type = MosType::Nmos;
    double width = 0.0;
    double length = 0.0;
    bool operator==(const Mosfet&) const = default;
};

struct Resistor {
    double resistance = 0.0;
    bool operator==(const Resistor&) const = default;
};

struct Capacitor {
    double capacitance = 0.0;
    bool operator==(const Capacitor&) const = default;
};

/// DC current source; current flows from the first terminal to the second
/// through the source (injected into the second node).
struct CurrentSourceDc {
    double current = 0.0;
    bool operator==(const CurrentSourceDc&) const = default;
};

struct VoltageSourceDc {
    double voltage = 0.0;
    bool operator==(const VoltageSourceDc&) const = default;
};

using DeviceKind = std::variant<Mosfet, Resistor, Capacitor, CurrentSourceDc, VoltageSourceDc>;

struct Instance {
    std::string name;
    std::vector<std::string> terminals;
    DeviceKind kind;
    bool operator==(const Instance&) const = default;

    [[nodiscard]] bool is_mosfet() const { return std::holds_alternative<Mosfet>(kind); }
    [[nodiscard]] const Mosfet& mosfet() const { return std::get<Mosfet>(kind); }
    [[nodiscard]] Mosfet& mosfet() { return std::get<Mosfet>(kind); }
};

/// Parsed circuit. Node "0" is ground. Instance order is file order and is
/// preserved by serialization.
struct Netlist {
    std::string name;
    std::vector<std::string> nodes;
    std::vector<Instance> instances;

    bool operator==(const Netlist&) const = default;

    [[nodiscard]] const Instance* find(const std::string& iname) const {
        for (const auto& inst : instances)
            if (inst.name == iname) return &inst;
        return nullptr;
    }
    [[nodiscard]] Instance* find(const std::string& iname) {
        for (auto& inst : instances)
            if (inst.name == iname) return &inst;
        return nullptr;
    }

    [[nodiscard]] bool has_ground() const {
        return std::find(nodes.begin(), nodes.end(), "0") != nodes.end();
    }

    /// All DC voltage sources, name -> value. Used as the supply map.
    [[nodiscard]] std::map<std::string, double> supplies() const {
        std::map<std::string, double> out;
        for (const auto& inst : instances)
            if (const auto* v = std::get_if<VoltageSourceDc>(&inst.kind))
                out[inst.name] = v->voltage;
        return out;
    }

    [[nodiscard]] std::vector<const Instance*> mosfets() const {
        std::vector<const Instance*> out;
        for (const auto& inst : instances)
            if (inst.is_mosfet()) out.push_back(&inst);
        return out;
    }
};

namespace detail {

inline std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

struct LogicalLine {
    std::string text;
    int line;
};

// Joins '+' continuations, drops comments and blanks.
inline std::vector<LogicalLine> logical_lines(const std::string& text) {
    std::vector<LogicalLine> out;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        auto first = raw.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (raw[first] == '*') continue;
        if (raw[first] == '+') {
            if (out.empty())
                throw NetlistError("continuation line with nothing to continue", lineno, static_cast<int>(first) + 1);
            out.back().text += " " + raw.substr(first + 1);
            continue;
        }
        out.push_back({raw.substr(first), lineno});
    }
    return out;
}

inline std::vector<std::string> tokens(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string t;
    while (in >> t) out.push_back(t);
    return out;
}

inline double positive_value(const std::string& tok, const char* what, int line) {
    auto v = try_parse_value(tok);
    if (!v) throw NetlistError(std::string("malformed ") + what + " value '" + tok + "'", line, 1);
    if (*v <= 0.0) throw NetlistError(std::string(what) + " value must be > 0, got '" + tok + "'", line, 1);
    return *v;
}

inline double any_value(const std::string& tok, const char* what, int line) {
    auto v = try_parse_value(tok);
    if (!v) throw NetlistError(std::string("malformed ") + what + " value '" + tok + "'", line, 1);
    return *v;
}

} // namespace detail

/// Parse the SPICE-subset grammar: one instance per line, prefixes M/R/C/I/V,
/// '*' comments, '+' continuations, key=value device parameters, unit
/// suffixes f/p/n/u/m/k/meg/g. Identifiers are case-insensitive and
/// normalized to upper case. `.title <name>` names the circuit, `.end` stops.
inline Netlist parse_netlist(const std::string& text) {
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw NetlistError("empty netlist source");

    Netlist net;
    auto add_node = [&net](const std::string& n) {
        if (std::find(net.nodes.begin(), net.nodes.end(), n) == net.nodes.end())
            net.nodes.push_back(n);
    };

    for (const auto& ll : detail::logical_lines(text)) {
        auto toks = detail::tokens(ll.text);
        if (toks.empty()) continue;
        std::string head = detail::upper(toks[0]);

        if (head[0] == '.') {
            if (head == ".END") break;
            if (head == ".TITLE") {
                if (toks.size() < 2)
                    throw NetlistError(".title requires a name", ll.line, 1);
                net.name = detail::upper(toks[1]);
                continue;
            }
            throw NetlistError("unknown directive '" + head + "'", ll.line, 1);
        }

        Instance inst;
        inst.name = head;
        if (net.find(inst.name))
            throw NetlistError("duplicate instance name '" + inst.name + "'", ll.line, 1);

        char prefix = head[0];
        switch (prefix) {
            case 'M': {
                if (toks.size() < 6)
                    throw NetlistError("MOSFET '" + inst.name +
                                           "' needs 4 terminals, a type, and W=/L= parameters",
                                       ll.line, 1);
                for (int i = 1; i <= 4; ++i) inst.terminals.push_back(detail::upper(toks[i]));
                std::string type = detail::upper(toks[5]);
                Mosfet m;
                if (type == "NMOS") m.type = MosType::Nmos;
                else if (type == "PMOS") m.type = MosType::Pmos;
                else throw NetlistError("unknown MOSFET type '" + toks[5] + "'", ll.line, 1);
                for (std::size_t i = 6; i < toks.size(); ++i) {
                    auto eq = toks[i].find('=');
                    if (eq == std::string::npos)
                        throw NetlistError("expected key=value parameter, got '" + toks[i] + "'", ll.line, 1);
                    std::string key = detail::upper(toks[i].substr(0, eq));
                    std::string val = toks[i].substr(eq + 1);
                    if (key == "W") m.width = detail::positive_value(val, "W", ll.line);
                    else if (key == "L") m.length = detail::positive_value(val, "L", ll.line);
                    else throw NetlistError("unknown MOSFET parameter '" + key + "'", ll.line, 1);
                }
                if (m.width <= 0.0 || m.length <= 0.0)
                    throw NetlistError("MOSFET '" + inst.name + "' requires W= and L= > 0", ll.line, 1);
                inst.kind = m;
                break;
            }
            case 'R':
            case 'C':
            case 'I':
            case 'V': {
                if (toks.size() != 3 && toks.size() != 4 &&
                    !((prefix == 'I' || prefix == 'V') && toks.size() == 5))
                    throw NetlistError("instance '" + inst.name + "' expects 2 terminals and a value",
                                       ll.line, 1);
                inst.terminals.push_back(detail::upper(toks[1]));
                inst.terminals.push_back(detail::upper(toks[2]));
                std::size_t vi = 3;
                if ((prefix == 'I' || prefix == 'V') && toks.size() >= 4 &&
                    detail::upper(toks[3]) == "DC") {
                    vi = 4;
                }
                if (vi >= toks.size())
                    throw NetlistError("instance '" + inst.name + "' is missing its value", ll.line, 1);
                if (vi + 1 != toks.size())
                    throw NetlistError("instance '" + inst.name + "' has trailing tokens", ll.line, 1);
                const std::string& vt = toks[vi];
                if (prefix == 'R') inst.kind = Resistor{detail::positive_value(vt, "resistance", ll.line)};
                else if (prefix == 'C') inst.kind = Capacitor{detail::positive_value(vt, "capacitance", ll.line)};
                else if (prefix == 'I') inst.kind = CurrentSourceDc{detail::any_value(vt, "current", ll.line)};
                else inst.kind = VoltageSourceDc{detail::any_value(vt, "voltage", ll.line)};
                break;
            }
            default:
                throw NetlistError("unknown device prefix '" + std::string(1, prefix) + "' in '" +
                                       inst.name + "'",
                                   ll.line, 1);
        }

        for (const auto& t : inst.terminals) add_node(t);
        net.instances.push_back(std::move(inst));
    }
    return net;
}

/// One instance per line in original order; numbers use the shortest form
/// that round-trips the exact double.
inline std::string serialize_netlist(const Netlist& net) {
    std::ostringstream out;
    if (!net.name.empty()) out << ".title " << net.name << "\n";
    for (const auto& inst : net.instances) {
        out << inst.name;
        for (const auto& t : inst.terminals) out << " " << t;
        std::visit(
            [&out](const auto& k) {
                using T = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<T, Mosfet>) {
                    out << " " << to_string(k.type) << " W=" << format_exact(k.width)
                        << " L=" << format_exact(k.length);
                } else if constexpr (std::is_same_v<T, Resistor>) {
                    out << " " << format_exact(k.resistance);
                } else if constexpr (std::is_same_v<T, Capacitor>) {
                    out << " " << format_exact(k.capacitance);
                } else if constexpr (std::is_same_v<T, CurrentSourceDc>) {
                    out << " " << format_exact(k.current);
                } else {
                    out << " " << format_exact(k.voltage);
                }
            },
            inst.kind);
        out << "\n";
    }
    return out.str();
}

/// Geometry, passive, and bias-current updates produced by a sizing plan.
struct DesignVariables {
    std::map<std::string, double> widths;
    std::map<std::string, double> lengths;
    std::map<std::string, double> passives;
    std::map<std::string, double> bias_currents;

    bool operator==(const DesignVariables&) const = default;
};

/// Returns a copy of `net` with the design variables applied. Everything not
/// named in `dv` serializes bit-identically.
inline Netlist apply_design_variables(const Netlist& net, const DesignVariables& dv) {
    Netlist out = net;
    auto expect = [&out](const std::string& name) -> Instance& {
        Instance* inst = out.find(detail::upper(name));
        if (!inst) throw NetlistError("unknown device '" + name + "' in design variables");
        return *inst;
    };
    auto check_positive = [](const std::string& name, double v) {
        if (!(v > 0.0))
            throw NetlistError("design variable for '" + name + "' must be > 0, got " + format_exact(v));
    };

    for (const auto& [name, w] : dv.widths) {
        check_positive(name, w);
        Instance& inst = expect(name);
        if (!inst.is_mosfet()) throw NetlistError("'" + name + "' is not a MOSFET; cannot set W");
        inst.mosfet().width = w;
    }
    for (const auto& [name, l] : dv.lengths) {
        check_positive(name, l);
        Instance& inst = expect(name);
        if (!inst.is_mosfet()) throw NetlistError("'" + name + "' is not a MOSFET; cannot set L");
        inst.mosfet().length = l;
    }
    for (const auto& [name, v] : dv.passives) {
        check_positive(name, v);
        Instance& inst = expect(name);
        if (auto* r = std::get_if<Resistor>(&inst.kind)) r->resistance = v;
        else if (auto* c = std::get_if<Capacitor>(&inst.kind)) c->capacitance = v;
        else throw NetlistError("'" + name + "' is not a passive; cannot set its value");
    }
    for (const auto& [name, i] : dv.bias_currents) {
        check_positive(name, i);
        Instance& inst = expect(name);
        if (auto* s = std::get_if<CurrentSourceDc>(&inst.kind)) s->current = i;
        else throw NetlistError("'" + name + "' is not a current source; cannot set its bias");
    }
    return out;
}

} // namespace sizeloop
