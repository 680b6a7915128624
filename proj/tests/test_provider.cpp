#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "sizeloop/http_provider.hpp"

using namespace sizeloop;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ProcessCard toy_card() {
    return ProcessCard::load(std::string(SIZELOOP_ASSET_DIR) + "/process/t180_toy.cfg");
}

DesignTargets t180_targets() {
    return DesignTargets::load(std::string(SIZELOOP_ASSET_DIR) + "/targets/t180.cfg");
}

Netlist two_stage() {
    return parse_netlist(slurp(std::string(SIZELOOP_ASSET_DIR) + "/netlists/2smc_n.sp"));
}

ProviderRequest round0_request(const Netlist& net) {
    ProviderRequest req;
    req.round = 0;
    req.netlist_text = serialize_netlist(net);
    req.topology = net.name;
    req.base_targets = t180_targets();
    req.design_targets = req.base_targets;
    return req;
}

} // namespace

TEST_CASE("static provider round 0: reference plan plus estimates") {
    Netlist net = two_stage();
    StaticProvider provider(net, toy_card());
    ProviderResponse resp = provider.respond(round0_request(net));

    SizingPlan plan = parse_plan(resp.plan_text);
    CHECK(plan.classifications.size() == 8);
    CHECK(validate_plan(plan, net).empty());

    REQUIRE(resp.estimates.size() == 8);
    const CalibrationRecord& m1 = resp.estimates.at("M1");
    CHECK(*m1.mu_cox == Catch::Approx(300e-6));       // card mu0Cox, NMOS
    CHECK(*m1.a_gm == Catch::Approx(0.7));            // fixed initial estimate
    CHECK(*m1.lambda == Catch::Approx(0.02e-6 / 0.2e-6));
    CHECK(m1.vth == Catch::Approx(0.45));
    const CalibrationRecord& m8 = resp.estimates.at("M8");
    CHECK(m8.type == MosType::Pmos);
    CHECK(*m8.mu_cox == Catch::Approx(80e-6));

    SECTION("a_gm estimate stays 0.7 regardless of theta") {
        ProcessCard card = toy_card();
        card.nmos.theta = 3.0;
        StaticProvider p2(net, card);
        ProviderResponse r2 = p2.respond(round0_request(net));
        CHECK(*r2.estimates.at("M1").a_gm == Catch::Approx(0.7));
    }
}

TEST_CASE("static provider: unknown topology directs to the HTTP provider") {
    Netlist net = parse_netlist(".title FC-N\nV1 a 0 1\nM1 a a 0 0 NMOS W=1u L=0.2u\n");
    StaticProvider provider(net, toy_card());
    ProviderRequest req = round0_request(net);
    CHECK_THROWS_WITH(provider.respond(req),
                      Catch::Matchers::ContainsSubstring("HTTP provider"));
}

TEST_CASE("static provider round N is the identity on the plan") {
    Netlist net = two_stage();
    StaticProvider provider(net, toy_card());
    ProviderRequest req = round0_request(net);
    req.round = 3;
    req.previous_plan = "plan p for 2SMC\n# opaque bytes\n";
    ProviderResponse resp = provider.respond(req);
    CHECK(resp.plan_text == req.previous_plan);  // byte-identical
    CHECK(resp.estimates.empty());

    SECTION("round index 0 violates the round-N precondition") {
        ProviderRequest bad = req;
        bad.round = 0;
        CHECK_THROWS_AS(StaticProvider::round_n(bad), ProviderError);
    }
}

TEST_CASE("with the static provider the response is a deterministic function of inputs") {
    Netlist net = two_stage();
    StaticProvider a(net, toy_card());
    StaticProvider b(net, toy_card());
    ProviderRequest req = round0_request(net);
    ProviderResponse ra = a.respond(req);
    ProviderResponse rb = b.respond(req);
    CHECK(ra.plan_text == rb.plan_text);
    CHECK(*ra.estimates.at("M5").mu_cox == *rb.estimates.at("M5").mu_cox);
}

namespace {

// Scripted fake LLM endpoint; serves canned responses in sequence.
class FakeEndpoint {
public:
    explicit FakeEndpoint(std::vector<std::string> responses)
        : responses_(std::move(responses)) {
        server_.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body);
            prompts_.push_back(body.at("prompt").get<std::string>());
            std::size_t idx = std::min(hits_.fetch_add(1), responses_.size() - 1);
            res.set_content(json{{"text", responses_[idx]}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeEndpoint() {
        server_.stop();
        thread_.join();
    }
    [[nodiscard]] std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/generate";
    }
    [[nodiscard]] const std::vector<std::string>& prompts() const { return prompts_; }

private:
    httplib::Server server_;
    std::vector<std::string> responses_;
    std::vector<std::string> prompts_;
    std::atomic<std::size_t> hits_{0};
    std::thread thread_;
    int port_ = 0;
};

const char* kMiniNetlist =
    ".title MINI\n"
    "VDD vdd 0 0.9\n"
    "VIN in 0 0\n"
    "I1 vdd d1 10u\n"
    "M1 d1 in 0 0 NMOS W=1u L=0.2u\n";

std::string valid_mini_response() {
    return "analysis text...\n"
           "```plan\n"
           "plan mini for MINI\n"
           "classify M1 independent\n"
           "length M1 = 0.2u\n"
           "size independent M1 current=10u vov=0.15\n"
           "predict av = 20\npredict gbw = 1meg\npredict pm = 80\n"
           "predict sr_pos = 1meg\npredict sr_neg = 1meg\n"
           "```\n"
           "```estimates\n"
           "M1 mu_cox=300u a_gm=0.7 lambda=0.1 vth=0.45\n"
           "```\n";
}

HttpProviderConfig http_cfg(const std::string& url) {
    HttpProviderConfig cfg;
    cfg.endpoint = url;
    cfg.rules_dir = std::string(SIZELOOP_ASSET_DIR) + "/prompt";
    return cfg;
}

ProviderRequest mini_request() {
    ProviderRequest req;
    req.round = 0;
    req.netlist_text = kMiniNetlist;
    req.topology = "MINI";
    req.base_targets = t180_targets();
    req.design_targets = req.base_targets;
    return req;
}

} // namespace

TEST_CASE("http provider: well-formed response accepted") {
    FakeEndpoint server({valid_mini_response()});
    HttpProvider provider(http_cfg(server.url()));
    ProviderResponse resp = provider.respond(mini_request());
    CHECK(resp.retries_used == 0);
    CHECK(resp.plan_text.find("plan mini for MINI") != std::string::npos);
    REQUIRE(resp.estimates.count("M1"));
    CHECK(*resp.estimates.at("M1").mu_cox == Catch::Approx(300e-6));
    CHECK_FALSE(provider.last_prompt().empty());
}

TEST_CASE("http provider: invalid plan then valid on retry") {
    FakeEndpoint server({"no plan block at all, just prose\n", valid_mini_response()});
    HttpProvider provider(http_cfg(server.url()));
    ProviderResponse resp = provider.respond(mini_request());
    CHECK(resp.retries_used == 1);
    REQUIRE(server.prompts().size() == 2);
    // the retry prompt carries the validation diagnostics
    CHECK(server.prompts()[1].find("Validation Errors") != std::string::npos);
    // fresh-session contract: every request is self-contained and includes
    // the netlist
    CHECK(server.prompts()[0].find("M1") != std::string::npos);
    CHECK(server.prompts()[1].find("M1") != std::string::npos);
}

TEST_CASE("http provider: retries exhausted is a hard error") {
    FakeEndpoint server({"still no plan\n"});
    HttpProviderConfig cfg = http_cfg(server.url());
    cfg.max_retries = 2;
    HttpProvider provider(cfg);
    CHECK_THROWS_WITH(provider.respond(mini_request()),
                      Catch::Matchers::ContainsSubstring("after 2 retries"));
    CHECK(server.prompts().size() == 3);  // initial + 2 retries
}

TEST_CASE("http provider: network failure") {
    HttpProviderConfig cfg = http_cfg("http://127.0.0.1:1/generate");  // nothing listens
    HttpProvider provider(cfg);
    CHECK_THROWS_AS(provider.respond(mini_request()), ProviderError);
}

TEST_CASE("http provider: round-0 response must include estimates") {
    std::string no_estimates =
        "```plan\n"
        "plan mini for MINI\n"
        "classify M1 independent\n"
        "length M1 = 0.2u\n"
        "size independent M1 current=10u vov=0.15\n"
        "predict av = 20\npredict gbw = 1meg\npredict pm = 80\n"
        "predict sr_pos = 1meg\npredict sr_neg = 1meg\n"
        "```\n";
    FakeEndpoint server({no_estimates});
    HttpProviderConfig cfg = http_cfg(server.url());
    cfg.max_retries = 0;
    HttpProvider provider(cfg);
    CHECK_THROWS_WITH(provider.respond(mini_request()),
                      Catch::Matchers::ContainsSubstring("estimates"));
}
