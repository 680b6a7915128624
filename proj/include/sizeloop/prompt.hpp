#pragma once

#include "sizeloop/provider.hpp"

namespace sizeloop {

class PromptError : public std::runtime_error {
public:
    explicit PromptError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Versioned plain-text rule assets; data, not code.
struct PromptRules {
    std::string classification;
    std::string anticircularity;
    std::string dc_consistency;
    std::string parasitic;
    std::string margin_formulas;
    std::string dsl_grammar;

    void validate() const {
        const std::pair<const std::string*, const char*> assets[] = {
            {&classification, "classification"}, {&anticircularity, "anticircularity"},
            {&dc_consistency, "dc_consistency"}, {&parasitic, "parasitic"},
            {&margin_formulas, "margin_formulas"}, {&dsl_grammar, "dsl_grammar"}};
        for (const auto& [txt, name] : assets)
            if (txt->find_first_not_of(" \t\r\n") == std::string::npos)
                throw PromptError(std::string("rules asset '") + name + "' is empty");
    }

    static PromptRules load(const std::string& dir) {
        auto slurp = [&dir](const char* file) {
            std::ifstream in(dir + "/" + file);
            if (!in) throw PromptError("cannot open rules asset '" + dir + "/" + file + "'");
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        PromptRules r;
        r.classification = slurp("rules_classification.txt");
        r.anticircularity = slurp("rules_anticircularity.txt");
        r.dc_consistency = slurp("rules_dc_consistency.txt");
        r.parasitic = slurp("rules_parasitic.txt");
        r.margin_formulas = slurp("margin_formulas.txt");
        r.dsl_grammar = slurp("dsl_grammar.txt");
        r.validate();
        return r;
    }
};

/// Assembled prompt plus named spans covering the full text, for audit.
struct PromptBundle {
    std::string text;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> sections;  // [begin,end)
};

inline const char* kMandatedSections[7] = {
    "Device Roles",    "Device Constraints", "Signal Path",      "Design Equations",
    "DC Bias Verification", "DC OP Consistency", "Plan Code"};

namespace prompt_detail {

class Builder {
public:
    void section(const std::string& name) {
        close();
        current_ = name;
        begin_ = text_.size();
    }
    Builder& line(const std::string& s) {
        text_ += s;
        text_ += '\n';
        return *this;
    }
    Builder& blank() {
        text_ += '\n';
        return *this;
    }
    PromptBundle finish() {
        close();
        return {std::move(text_), std::move(sections_)};
    }

private:
    void close() {
        if (!current_.empty() && text_.size() > begin_)
            sections_.emplace_back(current_, begin_, text_.size());
        current_.clear();
    }
    std::string text_;
    std::string current_;
    std::size_t begin_ = 0;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> sections_;
};

inline std::string targets_block(const DesignTargets& t) {
    std::ostringstream out;
    out << "A_v >= " << format_exact(t.av_db_min) << " dB\n";
    out << "GBW >= " << format_exact(t.gbw_hz_min) << " Hz (" << format_si(t.gbw_hz_min, "Hz")
        << ")\n";
    out << "PM >= " << format_exact(t.pm_deg_min) << " deg\n";
    out << "SR+ and SR- >= " << format_exact(t.sr_min) << " V/s (" << format_si(t.sr_min, "V/s")
        << ")\n";
    if (t.power_max)
        out << "Power <= " << format_exact(*t.power_max) << " W\n";
    out << "Supplies: VDD = " << format_exact(t.vdd) << " V, VSS = " << format_exact(t.vss)
        << " V; load C_L = " << format_exact(t.cl) << " F\n";
    return out.str();
}

inline std::string rules_block(const PromptRules& rules) {
    return rules.classification + "\n" + rules.anticircularity + "\n" + rules.dc_consistency +
           "\n" + rules.parasitic;
}

inline std::string response_structure(bool round0) {
    std::ostringstream out;
    if (round0) {
        out << "Respond with these seven sections, in sequence:\n";
        for (int i = 0; i < 7; ++i)
            out << "(" << (i + 1) << ") " << kMandatedSections[i] << "\n";
        out << "Section (7) must contain a single fenced code block labeled `plan`, plus a\n"
               "fenced block labeled `estimates` giving per-device initial values, one line\n"
               "per transistor: <dev> mu_cox=<A/V^2> a_gm=<1> lambda=<1/V> vth=<V>\n";
    } else {
        out << "Respond with an updated sizing plan only: a single fenced code block labeled\n"
               "`plan`. Do not re-estimate device parameters; use the calibration table\n"
               "values above.\n";
    }
    return out.str();
}

} // namespace prompt_detail

/// Round-0 prompt: netlist, targets, constraint rules, the seven-section
/// response mandate, and the plan-language excerpt.
inline PromptBundle assemble_round0(const Netlist& net, const DesignTargets& targets,
                                    const PromptRules& rules) {
    rules.validate();
    prompt_detail::Builder b;
    b.section("preamble");
    b.line("You are an analog circuit sizing engine. Derive the topology's design");
    b.line("equations from the netlist below and produce an executable sizing plan.");
    b.blank();
    b.section("netlist");
    b.line("== Netlist ==");
    b.line(serialize_netlist(net));
    b.section("targets");
    b.line("== Target Specifications ==");
    b.line(prompt_detail::targets_block(targets));
    b.section("rules");
    b.line("== Design Rules ==");
    b.line(prompt_detail::rules_block(rules));
    b.section("response_structure");
    b.line("== Required Response Structure ==");
    b.line(prompt_detail::response_structure(true));
    b.section("grammar");
    b.line("== Plan Language ==");
    b.line(rules.dsl_grammar);
    return b.finish();
}

/// Round-N prompt: everything the feedback loop produced — calibration
/// table, side-by-side prediction errors with the margin formulas, the
/// cumulative history, and the previous plan.
inline PromptBundle assemble_roundN(const ProviderRequest& req, const PromptRules& rules) {
    if (req.round < 1) throw PromptError("round-N prompt requires round >= 1");
    rules.validate();
    Netlist net = parse_netlist(req.netlist_text);

    prompt_detail::Builder b;
    b.section("preamble");
    b.line("Round " + std::to_string(req.round) +
           ". Update the sizing plan using the measured results below.");
    b.blank();
    b.section("netlist");
    b.line("== Netlist ==");
    b.line(req.netlist_text);
    b.section("targets");
    b.line("== Target Specifications ==");
    b.line(prompt_detail::targets_block(req.base_targets));
    b.section("rules");
    b.line("== Design Rules ==");
    b.line(prompt_detail::rules_block(rules));
    b.section("previous_plan");
    b.line("== Previous Sizing Plan ==");
    b.line("```plan");
    b.line(req.previous_plan);
    b.line("```");
    b.section("calibration");
    b.line("== Calibration Table (extracted from the DC operating point) ==");
    b.line(format_table(req.calibration));
    b.section("errors");
    b.line("== Predicted vs Measured ==");
    {
        std::ostringstream rows;
        rows << "metric    kind      predicted        measured         error\n";
        for (const auto& e : req.errors) {
            char buf[160];
            const char* unit = e.kind == MetricKind::Linear ? "%"
                              : e.kind == MetricKind::LogDb ? " dB"
                                                            : " deg";
            std::snprintf(buf, sizeof(buf), "%-9s %-9s %-16.6g %-16.6g %+.4g%s%s", e.metric.c_str(),
                          to_string(e.kind), e.predicted, e.measured, e.error, unit,
                          e.undefined ? " (undefined: measured zero)" : "");
            rows << buf << "\n";
        }
        b.line(rows.str());
    }
    b.line(rules.margin_formulas);
    {
        std::ostringstream hints;
        for (const auto& e : req.errors) {
            if (e.undefined || e.error <= 0.0) continue;
            char buf[160];
            if (e.kind == MetricKind::Linear)
                std::snprintf(buf, sizeof(buf),
                              "%s was over-predicted by %.1f%%: design for %.2f x target.",
                              e.metric.c_str(), e.error, 1.0 + e.error / 100.0);
            else if (e.kind == MetricKind::LogDb)
                std::snprintf(buf, sizeof(buf),
                              "%s was over-predicted by %.1f dB: design for target + %.1f dB.",
                              e.metric.c_str(), e.error, e.error);
            else
                std::snprintf(buf, sizeof(buf),
                              "%s was over-predicted by %.1f deg: design for target + %.1f deg.",
                              e.metric.c_str(), e.error, e.error);
            hints << buf << "\n";
        }
        std::string text = hints.str();
        if (!text.empty()) b.line(text);
    }
    b.section("history");
    b.line("== Round History ==");
    {
        std::ostringstream rows;
        rows << "round  av_db    gbw_hz       pm_deg   sr_pos       sr_neg       power_w    pass\n";
        if (req.history) {
            for (const auto& r : req.history->rounds) {
                char buf[200];
                std::snprintf(buf, sizeof(buf),
                              "%-6d %-8.4g %-12.6g %-8.4g %-12.6g %-12.6g %-10.4g %s", r.index,
                              r.measured.av_db, r.measured.gbw_hz, r.measured.pm_deg,
                              r.measured.sr_pos, r.measured.sr_neg, r.measured.power_w,
                              r.passed ? "yes" : "no");
                rows << buf << "\n";
            }
        }
        b.line(rows.str());
    }
    b.section("response_structure");
    b.line("== Required Response ==");
    b.line(prompt_detail::response_structure(false));
    b.section("grammar");
    b.line("== Plan Language ==");
    b.line(rules.dsl_grammar);
    return b.finish();
}

} // namespace sizeloop
