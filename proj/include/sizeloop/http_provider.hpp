#pragma once

#include "sizeloop/json_io.hpp"
#include "sizeloop/prompt.hpp"

// keep httplib after Eigen: it drags in system headers whose macros collide
#include <httplib.h>

namespace sizeloop {

struct HttpProviderConfig {
    std::string endpoint;     // e.g. http://127.0.0.1:8080/generate
    std::string auth_token;   // sent as "Authorization: Bearer <token>" when set
    int max_retries = 2;      // validation-failure retries per round
    int timeout_seconds = 300;
    std::string rules_dir;    // prompt rule assets
};

namespace http_detail {

struct ParsedUrl {
    std::string base;  // scheme://host:port
    std::string path;
};

inline ParsedUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ProviderError("endpoint URL must include a scheme: '" + url + "'");
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// First fenced code block labeled `label` (``` lines), verbatim inner text.
inline std::optional<std::string> fenced_block(const std::string& text, const std::string& label) {
    std::istringstream in(text);
    std::string line;
    bool inside = false;
    std::string body;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!inside) {
            if (line.rfind("```", 0) == 0) {
                std::string tag = line.substr(3);
                auto b = tag.find_first_not_of(" \t");
                auto e = tag.find_last_not_of(" \t");
                tag = b == std::string::npos ? "" : tag.substr(b, e - b + 1);
                if (tag == label) inside = true;
            }
        } else {
            if (line.rfind("```", 0) == 0) return body;
            body += line;
            body += '\n';
        }
    }
    return std::nullopt;
}

/// Round-0 estimates block: one line per device,
/// "M1 mu_cox=300u a_gm=0.7 lambda=0.1 vth=0.45".
inline CalibrationMap parse_estimates(const std::string& block, const Netlist& net) {
    CalibrationMap map;
    std::istringstream in(block);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string device;
        if (!(ls >> device)) continue;
        for (auto& c : device) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        const Instance* inst = net.find(device);
        if (!inst || !inst->is_mosfet())
            throw ProviderError("estimates line " + std::to_string(lineno) + ": '" + device +
                                "' is not a MOSFET in the netlist");
        CalibrationRecord rec;
        rec.device = device;
        rec.type = inst->mosfet().type;
        rec.w = inst->mosfet().width;
        rec.l = inst->mosfet().length;
        rec.region = Region::Sat;
        std::string kv;
        while (ls >> kv) {
            auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw ProviderError("estimates line " + std::to_string(lineno) +
                                    ": expected key=value, got '" + kv + "'");
            std::string key = kv.substr(0, eq);
            double value = parse_value(kv.substr(eq + 1));
            if (key == "mu_cox") rec.mu_cox = value;
            else if (key == "a_gm") rec.a_gm = value;
            else if (key == "lambda") rec.lambda = value;
            else if (key == "vth") rec.vth = value;
            else
                throw ProviderError("estimates line " + std::to_string(lineno) +
                                    ": unknown parameter '" + key + "'");
        }
        if (!rec.mu_cox || !rec.a_gm || !rec.lambda)
            throw ProviderError("estimates for '" + device +
                                "' must include mu_cox, a_gm and lambda");
        map[device] = rec;
    }
    for (const auto* inst : net.mosfets())
        if (!map.count(inst->name))
            throw ProviderError("estimates block is missing device '" + inst->name + "'");
    return map;
}

} // namespace http_detail

/// Drives a live model behind a chat-completion gateway. Wire contract:
/// request JSON {"prompt": <string>}, response JSON {"text": <string>}; the
/// plan is the first fenced block labeled `plan`. Every call is a fresh
/// session: the full context travels in the prompt.
class HttpProvider : public PlanProvider {
public:
    explicit HttpProvider(HttpProviderConfig cfg)
        : cfg_(std::move(cfg)), rules_(PromptRules::load(cfg_.rules_dir)) {
        if (cfg_.endpoint.empty()) throw ProviderError("HTTP provider requires an endpoint URL");
    }

    [[nodiscard]] std::string name() const override { return "http"; }
    [[nodiscard]] std::string last_prompt() const override { return last_prompt_; }

    ProviderResponse respond(const ProviderRequest& req) override {
        PromptBundle bundle =
            req.round == 0 ? assemble_round0(parse_netlist(req.netlist_text), req.base_targets, rules_)
                           : assemble_roundN(req, rules_);
        std::string prompt = bundle.text;
        Netlist net = parse_netlist(req.netlist_text);

        std::string failure;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            last_prompt_ = prompt;
            std::string text = post(prompt);
            try {
                ProviderResponse resp = accept(text, net, req);
                resp.retries_used = attempt;
                return resp;
            } catch (const std::exception& e) {
                failure = e.what();
                prompt += "\n== Validation Errors (attempt " + std::to_string(attempt + 1) +
                          ") ==\n" + failure + "\nRe-emit the corrected block(s).\n";
            }
        }
        throw ProviderError("plan validation failed after " + std::to_string(cfg_.max_retries) +
                            " retries: " + failure);
    }

private:
    std::string post(const std::string& prompt) {
        auto url = http_detail::split_url(cfg_.endpoint);
        httplib::Client client(url.base);  // fresh connection per request: no session state
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        client.set_connection_timeout(10, 0);
        httplib::Headers headers;
        if (!cfg_.auth_token.empty())
            headers.emplace("Authorization", "Bearer " + cfg_.auth_token);
        json body{{"prompt", prompt}};
        auto res = client.Post(url.path, headers, body.dump(), "application/json");
        if (!res)
            throw ProviderError("endpoint unreachable: " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw ProviderError("endpoint returned HTTP " + std::to_string(res->status));
        json parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded() || !parsed.contains("text"))
            throw ProviderError("endpoint response is not JSON with a 'text' field");
        return parsed["text"].get<std::string>();
    }

    /// Acceptance gate: the plan block must parse and validate against the
    /// netlist before it is returned.
    ProviderResponse accept(const std::string& text, const Netlist& net,
                            const ProviderRequest& req) const {
        auto block = http_detail::fenced_block(text, "plan");
        if (!block) throw ProviderError("response contains no fenced block labeled 'plan'");
        SizingPlan plan = parse_plan(*block);
        auto diags = validate_plan(plan, net, &req.base_targets);
        if (!diags.empty()) {
            std::string msg = "plan failed validation:";
            for (const auto& d : diags) msg += "\n  " + d;
            throw ProviderError(msg);
        }
        ProviderResponse resp;
        resp.plan_text = *block;
        if (req.round == 0) {
            auto est = http_detail::fenced_block(text, "estimates");
            if (!est)
                throw ProviderError("round-0 response contains no fenced block labeled 'estimates'");
            resp.estimates = http_detail::parse_estimates(*est, net);
        }
        return resp;
    }

    HttpProviderConfig cfg_;
    PromptRules rules_;
    std::string last_prompt_;
};

} // namespace sizeloop
