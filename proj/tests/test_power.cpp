#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>
#include <utility>

#include "tcpa/power.hpp"

using namespace tcpa;

namespace {

ArrayConfig grid(int rows, int cols, std::vector<Coord> seeds) {
    ArrayConfig cfg;
    cfg.rows = rows;
    cfg.cols = cols;
    cfg.seed_candidates = std::move(seeds);
    return cfg;
}

InvadeRequest linear_req(AppId app, int n) {
    InvadeRequest r;
    r.app_id = app;
    r.strategy = LinearShape{n};
    return r;
}

PowerModel model(DomainGranularity ictrl, int d_switch, double e_switch = 50.0) {
    PowerModel m;
    m.ictrl_domains = ictrl;
    m.d_switch = d_switch;
    m.e_switch = e_switch;
    return m;
}

// steps protocol and energy accounting together up to the given cycle
void run_to(ProtocolEngine& proto, PowerManager& pm, Cycle upto) {
    while (proto.now() < upto) {
        Cycle c = proto.now();
        proto.step();
        pm.accumulate(c);
    }
}

// boustrophedon chain covering the whole grid
std::vector<Coord> full_snake(int rows, int cols) {
    std::vector<Coord> out;
    for (int r = 0; r < rows; ++r) {
        if (r % 2 == 0)
            for (int c = 0; c < cols; ++c) out.push_back({r, c});
        else
            for (int c = cols - 1; c >= 0; --c) out.push_back({r, c});
    }
    return out;
}

}  // namespace

TEST_CASE("per-iCtrl domains pay one switching delay per wave hop") {
    ArrayState a = build_array(grid(2, 2, {{0, 0}}));
    PowerManager pm(a, model(DomainGranularity::Single, 10));
    ProtocolEngine proto(a, ProtocolParams{}, &pm);
    std::optional<Claim> claim = proto.invade(linear_req(1, 4));
    REQUIRE(claim.has_value());
    CHECK(claim->granted == 4);
    // four serial domain wakes of 10 cycles each on top of the closed form
    CHECK(claim->total_latency() == 2 + 2 * 3 + 4 * 10);
    CHECK(proto.stall_cycles() == 40);
    CHECK(pm.toggles(DomainKind::ICtrl) == 4);
    for (Coord c : claim->pes) {
        CHECK(a.at(c).ictrl_power == PowerState::On);
        if (a.at(c).pe_power == PowerState::On) CHECK(a.at(c).owner.has_value());
    }
}

TEST_CASE("a quad domain wakes once for four members") {
    ArrayState a = build_array(grid(2, 2, {{0, 0}}));
    PowerManager pm(a, model(DomainGranularity::Quad, 10));
    ProtocolEngine proto(a, ProtocolParams{}, &pm);
    std::optional<Claim> claim = proto.invade(linear_req(1, 4));
    REQUIRE(claim.has_value());
    CHECK(claim->total_latency() == 2 + 2 * 3 + 1 * 10);
    CHECK(proto.stall_cycles() == 10);
    CHECK(pm.toggles(DomainKind::ICtrl) == 1);
}

TEST_CASE("a shared domain powers off only when every member is released") {
    ArrayState a = build_array(grid(2, 2, {{0, 0}, {1, 0}}));
    PowerManager pm(a, model(DomainGranularity::Quad, 0));
    ProtocolEngine proto(a, ProtocolParams{}, &pm);
    std::optional<Claim> c1 = proto.invade(linear_req(1, 2));
    std::optional<Claim> c2 = proto.invade(linear_req(2, 2));
    REQUIRE(c1.has_value());
    REQUIRE(c2.has_value());
    CHECK(std::as_const(pm).domain_of(DomainKind::ICtrl, {0, 0}).state == PowerState::On);

    proto.retreat(*c1);
    CHECK(std::as_const(pm).domain_of(DomainKind::ICtrl, {0, 0}).state == PowerState::On);

    proto.retreat(*c2);
    CHECK(std::as_const(pm).domain_of(DomainKind::ICtrl, {0, 0}).state == PowerState::Off);
}

TEST_CASE("energy accumulation charges members by domain state") {
    SUBCASE("an idle array with zero leakage costs nothing") {
        ArrayState a = build_array(grid(4, 4, {{0, 0}}));
        PowerManager pm(a, model(DomainGranularity::Single, 0));
        ProtocolEngine proto(a, ProtocolParams{}, &pm);
        run_to(proto, pm, 100);
        CHECK(pm.energy_total() == 0.0);
        CHECK(pm.energy_baseline() == doctest::Approx(100 * 16 * 11.0));
    }
    SUBCASE("one powered PE for 100 cycles costs 100 * p_pe_on") {
        ArrayState a = build_array(grid(1, 1, {{0, 0}}));
        PowerManager pm(a, model(DomainGranularity::Single, 0, 0.0));
        ProtocolEngine proto(a, ProtocolParams{}, &pm);
        std::optional<Claim> claim = proto.invade(linear_req(1, 1));
        REQUIRE(claim.has_value());
        Cycle start = proto.now();
        double before = pm.breakdown().pe_active;
        run_to(proto, pm, start + 100);
        CHECK(pm.breakdown().pe_active - before == doctest::Approx(1000.0));
    }
    SUBCASE("breakdown components always sum to the total") {
        ArrayState a = build_array(grid(4, 4, {{0, 0}, {3, 3}}));
        PowerModel m = model(DomainGranularity::Quad, 10);
        m.p_pe_off = 0.5;
        m.p_ictrl_off = 0.25;
        PowerManager pm(a, m);
        ProtocolEngine proto(a, ProtocolParams{}, &pm);
        std::optional<Claim> c1 = proto.invade(linear_req(1, 5));
        run_to(proto, pm, 120);
        REQUIRE(c1.has_value());
        proto.retreat(*c1);
        run_to(proto, pm, 240);
        const EnergyBreakdown& b = pm.breakdown();
        CHECK(b.total() == doctest::Approx(b.pe_active + b.pe_leak + b.ictrl_active +
                                           b.ictrl_leak + b.switching));
        CHECK(pm.energy_total() > 0.0);
        CHECK(pm.energy_total() <= pm.energy_baseline());
    }
}

TEST_CASE("finer gating never loses energy when switching is free") {
    // identical request traces per grouping; with d_switch = 0 the protocol
    // timing is grouping-independent, so member on-cycles are comparable
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 8; ++trial) {
        std::vector<std::pair<int, Cycle>> plan;  // (pe count, hold cycles)
        int napps = 2 + static_cast<int>(rng() % 4);
        for (int i = 0; i < napps; ++i)
            plan.emplace_back(1 + static_cast<int>(rng() % 8),
                              20 + static_cast<Cycle>(rng() % 120));

        auto run_grouping = [&](DomainGranularity g) {
            ArrayState a = build_array(grid(4, 4, {{0, 0}, {0, 3}, {3, 0}, {3, 3}}));
            PowerManager pm(a, model(g, 0, 0.0));
            ProtocolEngine proto(a, ProtocolParams{}, &pm);
            std::vector<std::pair<Claim, Cycle>> live;
            for (auto [count, hold] : plan) {
                std::optional<Claim> c =
                    proto.invade(linear_req(static_cast<int>(live.size()) + 1, count));
                if (c && c->granted > 0) live.emplace_back(*c, proto.now() + hold);
            }
            Cycle horizon = proto.now();
            for (auto& [claim, until] : live) horizon = std::max(horizon, until);
            for (auto& [claim, until] : live) {
                run_to(proto, pm, until);
                proto.retreat(claim);
            }
            run_to(proto, pm, horizon + 64);
            return std::pair{pm.energy_total(), pm.toggles(DomainKind::ICtrl)};
        };

        auto [e1, t1] = run_grouping(DomainGranularity::Single);
        auto [e4, t4] = run_grouping(DomainGranularity::Quad);
        auto [erow, trow] = run_grouping(DomainGranularity::Row);
        auto [earr, tarr] = run_grouping(DomainGranularity::Array);
        // orderings hold between refinement-comparable groupings (quad and
        // row partition the array differently and are incomparable)
        CHECK(e1 <= e4 + 1e-9);
        CHECK(e1 <= erow + 1e-9);
        CHECK(e4 <= earr + 1e-9);
        CHECK(erow <= earr + 1e-9);
        CHECK(t1 >= t4);
        CHECK(t1 >= trow);
        CHECK(t4 >= tarr);
        CHECK(trow >= tarr);
    }
}

TEST_CASE("quad grouping requires even array dimensions") {
    PowerModel m = model(DomainGranularity::Quad, 0);
    CHECK_THROWS_WITH_AS(m.validate(5, 4), doctest::Contains("does not tile"), ConfigError);
    CHECK_NOTHROW(m.validate(4, 4));
}

TEST_CASE("analytic estimator closed-form extremes") {
    ArrayConfig cfg = grid(4, 4, {{0, 0}});
    PowerModel m = model(DomainGranularity::Single, 0, 0.0);

    SUBCASE("no applications means leakage-only energy") {
        ScenarioSummary s;
        s.span = 1000;
        CHECK(analytic_estimate(s, m, cfg) == 0.0);
    }
    SUBCASE("a full-array claim held for the whole span approaches the baseline") {
        ScenarioSummary s;
        s.span = 10000;
        AppEnergySummary app;
        app.pes = full_snake(4, 4);
        app.invade_at = 0;
        app.has_retreat = false;
        s.apps.push_back(app);
        double est = analytic_estimate(s, m, cfg);
        double baseline = 10000.0 * 16 * (10.0 + 1.0);
        CHECK(est == doctest::Approx(baseline).epsilon(0.01));
        CHECK(est <= baseline);
    }
}

TEST_CASE("report arithmetic") {
    EnergyBreakdown b;
    b.pe_active = 300;
    EnergyReport r = make_report(300.0, 1000.0, 310.0, b, 5, 8, 8);
    CHECK(r.savings_fraction == doctest::Approx(0.70));
    CHECK(r.estimate_error == doctest::Approx(10.0 / 300.0));
    CHECK(r.stall_cycles == 5);

    EnergyReport flat = make_report(1000.0, 1000.0, 1000.0, b, 0, 0, 0);
    CHECK(flat.savings_fraction == doctest::Approx(0.0));
    CHECK(flat.estimate_error == doctest::Approx(0.0));
}
