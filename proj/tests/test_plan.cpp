#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sizeloop/plan_exec.hpp"
#include "sizeloop/reference_plan.hpp"

using namespace sizeloop;

namespace {

CalibrationRecord rec(MosType type, double mu, double agm, double lambda, double vth) {
    CalibrationRecord r;
    r.type = type;
    r.region = Region::Sat;
    r.mu_cox = mu;
    r.a_gm = agm;
    r.lambda = lambda;
    r.vth = vth;
    return r;
}

CalibrationMap fixture_calib() {
    CalibrationMap m;
    for (const char* d : {"M1", "M2", "M5", "M6", "M7"})
        m[d] = rec(MosType::Nmos, 200e-6, 0.8, 0.1, 0.45);
    for (const char* d : {"M3", "M4", "M8"})
        m[d] = rec(MosType::Pmos, 60e-6, 0.8, 0.1, 0.45);
    return m;
}

DesignTargets t180_targets() {
    DesignTargets t;
    t.av_db_min = 60;
    t.gbw_hz_min = 100e6;
    t.pm_deg_min = 60;
    t.sr_min = 50e6;
    t.vdd = 0.9;
    t.vss = -0.9;
    t.cl = 1e-12;
    return t;
}

double binding(const PlanOutput& out, const std::string& name) {
    for (const auto& [n, v] : out.trace.entries)
        if (n == name) return v;
    FAIL("no binding '" << name << "'");
    return 0.0;
}

} // namespace

TEST_CASE("reference plan parses with 8 classifications") {
    SizingPlan plan = parse_plan(kTwoStageMillerPlan);
    CHECK(plan.name == "two_stage_miller");
    CHECK(plan.topology == "2SMC");
    CHECK(plan.classifications.size() == 8);
    int independents = 0, mirrors = 0, matched = 0;
    for (const auto& [dev, c] : plan.classifications) {
        if (c.cls == DeviceClass::Independent) ++independents;
        if (c.cls == DeviceClass::Mirror) ++mirrors;
        if (c.cls == DeviceClass::Matched) ++matched;
    }
    CHECK(independents == 4);
    CHECK(mirrors == 2);
    CHECK(matched == 2);
}

TEST_CASE("parse errors") {
    SECTION("unclassified device in a size directive") {
        CHECK_THROWS_WITH(
            parse_plan("plan p for X\nlength M8 = 0.2u\n"
                       "size independent M8 current=1u vov=0.1\n"),
            Catch::Matchers::ContainsSubstring("unclassified device 'M8'"));
    }
    SECTION("use before binding is a circularity error") {
        CHECK_THROWS_WITH(parse_plan("plan p for X\nlet a = b\nlet b = 1\n"),
                          Catch::Matchers::ContainsSubstring("bound before use"));
    }
    SECTION("syntax error") {
        CHECK_THROWS_AS(parse_plan("plan p for X\nlet = 3\n"), PlanError);
        CHECK_THROWS_AS(parse_plan("nonsense\n"), PlanError);
    }
    SECTION("mirror literal length mismatch") {
        CHECK_THROWS_WITH(parse_plan("plan p for X\n"
                                     "classify M6 independent\n"
                                     "classify M7 mirror of M6\n"
                                     "length M6 = 0.2u\nlength M7 = 0.4u\n"
                                     "size independent M6 current=1u vov=0.2\n"
                                     "size mirror M7 from M6 carrying 2u\n"),
                          Catch::Matchers::ContainsSubstring("mirrors must share L"));
    }
    SECTION("classification and directive must agree") {
        CHECK_THROWS_WITH(parse_plan("plan p for X\n"
                                     "classify M1 mirror of M2\nclassify M2 independent\n"
                                     "length M1 = 0.2u\nlength M2 = 0.2u\n"
                                     "size independent M2 current=1u vov=0.2\n"
                                     "size independent M1 current=1u vov=0.2\n"),
                          Catch::Matchers::ContainsSubstring("classified MIRROR"));
    }
    SECTION("mirror cycles rejected") {
        CHECK_THROWS_WITH(parse_plan("plan p for X\n"
                                     "classify M1 mirror of M2\nclassify M2 mirror of M1\n"),
                          Catch::Matchers::ContainsSubstring("cycle"));
    }
    SECTION("rebinding rejected") {
        CHECK_THROWS_AS(parse_plan("plan p for X\nlet a = 1\nlet a = 2\n"), PlanError);
    }
}

TEST_CASE("execute: independent square-law width") {
    // Id=6.97uA, L=0.2um, muCox=1613.7uA/V^2, Vov=49mV -> W = 0.719 um
    SizingPlan plan = parse_plan(
        "plan p for X\n"
        "classify M1 independent\n"
        "length M1 = 0.2u\n"
        "size independent M1 current=6.97u vov=0.049\n");
    CalibrationMap calib;
    calib["M1"] = rec(MosType::Nmos, 1613.7e-6, 0.356, 0.64, 0.44);
    PlanOutput out = execute_plan(plan, calib, t180_targets());
    CHECK(out.variables.widths.at("M1") == Catch::Approx(0.719e-6).epsilon(1e-3));
    CHECK(out.variables.lengths.at("M1") == Catch::Approx(0.2e-6));
}

TEST_CASE("execute: mirror width ratio") {
    // W_ref=1um, I_ref=10uA, I=25uA -> W = 2.5um, L forced equal
    SizingPlan plan = parse_plan(
        "plan p for X\n"
        "classify M6 independent\n"
        "classify M7 mirror of M6\n"
        "length M6 = 0.5u\n"
        "size independent M6 current=10u vov=0.2236068\n"
        "size mirror M7 from M6 carrying 25u\n");
    CalibrationMap calib;
    calib["M6"] = rec(MosType::Nmos, 200e-6, 0.8, 0.1, 0.45);
    calib["M7"] = calib["M6"];
    PlanOutput out = execute_plan(plan, calib, t180_targets());
    double w6 = out.variables.widths.at("M6");
    CHECK(out.variables.widths.at("M7") == Catch::Approx(w6 * 2.5).epsilon(1e-12));
    CHECK(out.variables.lengths.at("M7") == Catch::Approx(0.5e-6));
}

TEST_CASE("reference plan: GBW-limited branch and pinned bindings") {
    SizingPlan plan = parse_plan(kTwoStageMillerPlan);
    PlanOutput out = execute_plan(plan, fixture_calib(), t180_targets());
    // SR_internal = 2*pi*GBW*Vov1 = 62.8 V/us >= 50 V/us -> GBW-limited
    CHECK(binding(out, "sr_internal_from_gbw") == Catch::Approx(2 * M_PI * 100e6 * 0.1));
    CHECK(binding(out, "gbw_design") == Catch::Approx(100e6));
    // gm1 = 2*pi*1e8*0.5e-12 = 314.16 uS
    CHECK(binding(out, "gm1") == Catch::Approx(314.159e-6).epsilon(1e-4));

    SECTION("SR-limited branch engages for low-GBW, high-SR targets") {
        DesignTargets t = t180_targets();
        t.gbw_hz_min = 10e6;  // SR_internal = 6.28 V/us < 50 V/us
        PlanOutput o2 = execute_plan(plan, fixture_calib(), t);
        CHECK(binding(o2, "gbw_design") == Catch::Approx(t.sr_min / (2 * M_PI * 0.1)));
    }
}

TEST_CASE("reference plan: predictions implement the two-stage equations") {
    SizingPlan plan = parse_plan(kTwoStageMillerPlan);
    CalibrationMap calib = fixture_calib();
    DesignTargets targets = t180_targets();
    PlanOutput out = execute_plan(plan, calib, targets);

    // hand arithmetic, independent of the executor
    const double vov1 = 0.1, vov8 = 0.15, cc = 0.5e-12;
    const double agm = 0.8, lam = 0.1, cl = 1e-12;
    const double gm1 = 2 * M_PI * 100e6 * cc;
    const double itail = gm1 * vov1 / agm;
    const double id1 = itail / 2;
    const double id2_sr = targets.sr_min * cl;
    const double gm8_req = 2.2 * 2 * M_PI * 100e6 * cl;
    const double id2 = std::max(id2_sr, gm8_req * vov8 / (2 * agm));
    const double w1 = 2 * id1 * 0.2e-6 / (200e-6 * vov1 * vov1);
    const double w8 = 2 * id2 * 0.2e-6 / (60e-6 * vov8 * vov8);
    const double gm1_sized = agm * std::sqrt(2 * 200e-6 * (w1 / 0.2e-6) * id1);
    const double gm8_sized = agm * std::sqrt(2 * 60e-6 * (w8 / 0.2e-6) * id2);
    const double ro12 = 1 / (lam * id1);
    const double ro2p = ro12 * ro12 / (2 * ro12);
    const double ro78 = 1 / (lam * id2);
    const double av = gm1_sized * ro2p * gm8_sized * (ro78 / 2);

    CHECK(out.predicted.av_db == Catch::Approx(20 * std::log10(av)).epsilon(1e-9));
    CHECK(out.predicted.gbw_hz == Catch::Approx(gm1_sized / (2 * M_PI * cc)).epsilon(1e-9));
    const double wu = 2 * M_PI * out.predicted.gbw_hz;
    const double p2 = gm8_sized / cl;
    CHECK(out.predicted.pm_deg == Catch::Approx(90 - std::atan(wu / p2) * 180 / M_PI).epsilon(1e-9));
    CHECK(out.predicted.sr_pos == Catch::Approx(itail / cc).epsilon(1e-9));
    CHECK(out.predicted.sr_neg == Catch::Approx(id2 / cl).epsilon(1e-9));

    SECTION("R_z equals 1/gm8 recomputed from the sized width") {
        CHECK(out.variables.passives.at("RZ") == Catch::Approx(1.0 / gm8_sized).epsilon(1e-9));
    }
    SECTION("sized gm matches the calibration closure") {
        // gm8_sized = a_gm * 2*Id2/Vov(sized W8): same value through the
        // square-law identity
        CHECK(gm8_sized == Catch::Approx(agm * 2 * id2 / vov8).epsilon(1e-12));
    }
}

TEST_CASE("execution error paths") {
    DesignTargets targets = t180_targets();
    SECTION("division by zero") {
        SizingPlan plan = parse_plan("plan p for X\nlet a = 1\nlet b = 1/(a-1)\n");
        CHECK_THROWS_WITH(execute_plan(plan, {}, targets),
                          Catch::Matchers::ContainsSubstring("division by zero"));
    }
    SECTION("missing calibration record") {
        SizingPlan plan = parse_plan("plan p for X\nlet a = calib.M9.mu_cox\n");
        CHECK_THROWS_WITH(execute_plan(plan, {}, targets),
                          Catch::Matchers::ContainsSubstring("M9"));
    }
    SECTION("cutoff record has no parameters") {
        SizingPlan plan = parse_plan("plan p for X\nlet a = calib.M1.mu_cox\n");
        CalibrationMap calib;
        CalibrationRecord r;
        r.device = "M1";
        r.region = Region::Cutoff;
        calib["M1"] = r;
        CHECK_THROWS_WITH(execute_plan(plan, calib, targets),
                          Catch::Matchers::ContainsSubstring("unbound calibration parameter"));
    }
    SECTION("negative width") {
        SizingPlan plan = parse_plan(
            "plan p for X\nclassify M1 independent\nlength M1 = 0.2u\n"
            "size independent M1 current=-1u vov=0.1\n");
        CalibrationMap calib;
        calib["M1"] = rec(MosType::Nmos, 200e-6, 0.8, 0.1, 0.45);
        CHECK_THROWS_WITH(execute_plan(plan, calib, targets),
                          Catch::Matchers::ContainsSubstring("not positive"));
    }
    SECTION("non-finite binding aborts with the binding name") {
        SizingPlan plan = parse_plan("plan p for X\nlet big = 1e308*1e308\n");
        CHECK_THROWS_WITH(execute_plan(plan, {}, targets),
                          Catch::Matchers::ContainsSubstring("big"));
    }
}

TEST_CASE("validate_plan diagnostics") {
    Netlist net = parse_netlist(
        "M1 a b c 0 NMOS W=1u L=0.2u\n"
        "M2 d b c 0 NMOS W=1u L=0.2u\n"
        "V1 a 0 1\n");
    SECTION("full coverage is clean") {
        SizingPlan plan = parse_plan(
            "plan p for X\n"
            "classify M1 independent\nclassify M2 matched M1\n"
            "length M1 = 0.2u\n"
            "size independent M1 current=1u vov=0.1\n"
            "predict av = 1\npredict gbw = 1\npredict pm = 1\n"
            "predict sr_pos = 1\npredict sr_neg = 1\n");
        CHECK(validate_plan(plan, net).empty());
    }
    SECTION("missing device coverage") {
        SizingPlan plan = parse_plan(
            "plan p for X\nclassify M1 independent\nlength M1 = 0.2u\n"
            "size independent M1 current=1u vov=0.1\n"
            "predict av = 1\npredict gbw = 1\npredict pm = 1\n"
            "predict sr_pos = 1\npredict sr_neg = 1\n");
        auto diags = validate_plan(plan, net);
        REQUIRE_FALSE(diags.empty());
        CHECK(diags[0].find("M2") != std::string::npos);
    }
    SECTION("missing prediction slot") {
        SizingPlan plan = parse_plan(
            "plan p for X\n"
            "classify M1 independent\nclassify M2 matched M1\n"
            "length M1 = 0.2u\n"
            "size independent M1 current=1u vov=0.1\n"
            "predict av = 1\npredict gbw = 1\n"
            "predict sr_pos = 1\npredict sr_neg = 1\n");
        auto diags = validate_plan(plan, net);
        bool found = false;
        for (const auto& d : diags) found |= d.find("'pm'") != std::string::npos;
        CHECK(found);
    }
    SECTION("reference plan + 2SMC netlist is clean") {
        std::ifstream in(std::string(SIZELOOP_ASSET_DIR) + "/netlists/2smc_n.sp");
        REQUIRE(in);
        std::ostringstream ss;
        ss << in.rdbuf();
        Netlist two_stage = parse_netlist(ss.str());
        SizingPlan plan = parse_plan(kTwoStageMillerPlan);
        CHECK(validate_plan(plan, two_stage).empty());
    }
}

TEST_CASE("property: generated plans cannot violate the mirror width formula") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        int devices = 2 + static_cast<int>(u(rng) * 6);
        std::ostringstream plan_text;
        plan_text << "plan fuzz for X\n";
        struct Dev {
            DeviceClass cls;
            int ref = -1;
            double current = 0.0;
        };
        std::vector<Dev> devs;
        for (int d = 0; d < devices; ++d) {
            std::string name = "M" + std::to_string(d + 1);
            if (d == 0) {
                devs.push_back({DeviceClass::Independent, -1, 0.0});
                plan_text << "classify " << name << " independent\n";
            } else {
                double roll = u(rng);
                int ref = static_cast<int>(u(rng) * d);
                std::string ref_name = "M" + std::to_string(ref + 1);
                if (roll < 0.4) {
                    devs.push_back({DeviceClass::Independent, -1, 0.0});
                    plan_text << "classify " << name << " independent\n";
                } else if (roll < 0.8 && devs[static_cast<std::size_t>(ref)].cls != DeviceClass::Matched) {
                    devs.push_back({DeviceClass::Mirror, ref, 0.0});
                    plan_text << "classify " << name << " mirror of " << ref_name << "\n";
                } else {
                    devs.push_back({DeviceClass::Matched, ref, 0.0});
                    plan_text << "classify " << name << " matched " << ref_name << "\n";
                }
            }
        }
        CalibrationMap calib;
        for (int d = 0; d < devices; ++d) {
            std::string name = "M" + std::to_string(d + 1);
            Dev& dev = devs[static_cast<std::size_t>(d)];
            dev.current = 1e-6 + 100e-6 * u(rng);
            calib[name] = rec(MosType::Nmos, 100e-6 + 400e-6 * u(rng), 0.5 + 0.4 * u(rng),
                              0.1, 0.45);
            if (dev.cls == DeviceClass::Independent) {
                plan_text << "length " << name << " = " << format_exact(0.18e-6 + 0.4e-6 * u(rng))
                          << "\n";
                plan_text << "size independent " << name << " current="
                          << format_exact(dev.current) << " vov=" << format_exact(0.08 + 0.2 * u(rng))
                          << "\n";
            }
        }
        // mirrors sized in declaration order: references are always earlier
        for (int d = 0; d < devices; ++d) {
            const Dev& dev = devs[static_cast<std::size_t>(d)];
            if (dev.cls != DeviceClass::Mirror) continue;
            std::string name = "M" + std::to_string(d + 1);
            std::string ref_name = "M" + std::to_string(dev.ref + 1);
            plan_text << "size mirror " << name << " from " << ref_name << " carrying "
                      << format_exact(dev.current) << "\n";
        }

        SizingPlan plan;
        PlanOutput out;
        try {
            plan = parse_plan(plan_text.str());
            out = execute_plan(plan, calib, t180_targets());
        } catch (const PlanError&) {
            // a mirror referencing a not-yet-sized mirror is a legal rejection
            continue;
        }
        for (int d = 0; d < devices; ++d) {
            const Dev& dev = devs[static_cast<std::size_t>(d)];
            std::string name = "M" + std::to_string(d + 1);
            std::string ref_name = dev.ref >= 0 ? "M" + std::to_string(dev.ref + 1) : "";
            if (dev.cls == DeviceClass::Mirror) {
                double w = out.variables.widths.at(name);
                double wr = out.variables.widths.at(ref_name);
                double ir = devs[static_cast<std::size_t>(dev.ref)].current;
                CHECK(out.variables.lengths.at(name) ==
                      Catch::Approx(out.variables.lengths.at(ref_name)));
                CHECK(w == Catch::Approx(wr * dev.current / ir).epsilon(1e-9));
            } else if (dev.cls == DeviceClass::Matched) {
                CHECK(out.variables.widths.at(name) ==
                      Catch::Approx(out.variables.widths.at(ref_name)));
                CHECK(out.variables.lengths.at(name) ==
                      Catch::Approx(out.variables.lengths.at(ref_name)));
            }
        }
    }
}

TEST_CASE("determinism: execute_plan is a pure function of its inputs") {
    SizingPlan plan = parse_plan(kTwoStageMillerPlan);
    PlanOutput a = execute_plan(plan, fixture_calib(), t180_targets());
    PlanOutput b = execute_plan(plan, fixture_calib(), t180_targets());
    CHECK(a.variables == b.variables);
    CHECK(a.predicted.gbw_hz == b.predicted.gbw_hz);
    CHECK(a.trace.entries == b.trace.entries);
}
