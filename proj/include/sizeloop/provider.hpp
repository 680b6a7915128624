#pragma once

#include "sizeloop/feedback.hpp"
#include "sizeloop/reference_plan.hpp"

namespace sizeloop {

class ProviderError : public std::runtime_error {
public:
    explicit ProviderError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Everything a provider may see for one round. Round 0 carries no feedback
/// artifacts; round >= 1 carries all of them.
struct ProviderRequest {
    int round = 0;
    std::string netlist_text;
    std::string topology;
    DesignTargets base_targets;
    DesignTargets design_targets;  // margin-inflated; equals base at round 0
    std::string previous_plan;     // round >= 1
    CalibrationTable calibration;  // round >= 1
    std::vector<PredictionError> errors;  // round >= 1
    const RoundHistory* history = nullptr;
};

struct ProviderResponse {
    std::string plan_text;
    CalibrationMap estimates;  // round 0 only
    int retries_used = 0;
};

class PlanProvider {
public:
    virtual ~PlanProvider() = default;
    [[nodiscard]] virtual std::string name() const = 0;
    virtual ProviderResponse respond(const ProviderRequest& req) = 0;
    /// Prompt sent for the most recent respond() call, empty when the
    /// provider does not assemble prompts. Persisted per round.
    [[nodiscard]] virtual std::string last_prompt() const { return ""; }
};

/// Deterministic provider for offline verification: the built-in reference
/// plan plus fixed round-0 parameter estimates derived from the process
/// card. Round N returns the previous plan byte-identically; all adaptation
/// flows through recalibration and derived design targets.
class StaticProvider : public PlanProvider {
public:
    StaticProvider(const Netlist& net, ProcessCard card, double mu_cox_estimate_scale = 1.0)
        : net_(net), card_(std::move(card)), mu_scale_(mu_cox_estimate_scale) {}

    [[nodiscard]] std::string name() const override { return "static"; }

    ProviderResponse respond(const ProviderRequest& req) override {
        if (req.round == 0) return round0(req);
        return round_n(req);
    }

    /// Reference-plan lookup by topology family prefix.
    [[nodiscard]] static const char* reference_plan_for(const std::string& topology) {
        if (topology.rfind("2SMC", 0) == 0) return kTwoStageMillerPlan;
        return nullptr;
    }

    /// Round N >= 1 returns the previous plan unchanged: adaptation flows
    /// only through recalibrated parameters and derived design targets.
    static ProviderResponse round_n(const ProviderRequest& req) {
        if (req.round < 1) throw ProviderError("round index must be >= 1");
        if (req.previous_plan.empty())
            throw ProviderError("round " + std::to_string(req.round) + " carries no previous plan");
        ProviderResponse resp;
        resp.plan_text = req.previous_plan;
        return resp;
    }

private:
    ProviderResponse round0(const ProviderRequest& req) const {
        const char* plan = reference_plan_for(req.topology);
        if (!plan)
            throw ProviderError("no reference plan for topology '" + req.topology +
                                "'; use the HTTP provider for this circuit");
        ProviderResponse resp;
        resp.plan_text = plan;
        for (const auto* inst : net_.mosfets()) {
            const Mosfet& m = inst->mosfet();
            const MosParams& p = card_.params(m.type);
            CalibrationRecord rec;
            rec.device = inst->name;
            rec.type = m.type;
            rec.w = m.width;
            rec.l = m.length;
            rec.region = Region::Sat;
            rec.mu_cox = p.mu0_cox * mu_scale_;
            rec.a_gm = 0.7;  // mid-range of observed 0.21-0.79 spread
            rec.lambda = p.lambda_l / m.length;
            rec.vth = p.vth0;
            resp.estimates[inst->name] = rec;
        }
        return resp;
    }

    Netlist net_;
    ProcessCard card_;
    double mu_scale_;
};

} // namespace sizeloop
