#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "oracles.hpp"
#include "tcpa/engine.hpp"

using namespace tcpa;

namespace {

std::string scenario_path(const char* name) {
    return std::string(TCPASIM_SCENARIO_DIR) + "/" + name;
}

const char* kLatencyScenario = R"({
  "array": {"rows": 4, "cols": 4, "seed_candidates": [[0,0]]},
  "power": {"d_switch": 0, "e_switch": 0.0},
  "events": [
    {"at_cycle": 0, "action": "invade", "app_id": 1, "strategy": {"linear": 4}},
    {"at_cycle": 100, "action": "retreat", "app_id": 1},
    {"at_cycle": 200, "action": "end"}
  ]
})";

}  // namespace

TEST_CASE("a full run reproduces the protocol closed forms") {
    Metrics m = run(load_scenario(kLatencyScenario)).metrics;
    CHECK(m.total_cycles == 200);
    REQUIRE(m.apps.size() == 1);
    const AppMetrics& a = m.apps[0];
    CHECK(a.status == "ok");
    CHECK(a.granted == 4);
    CHECK(a.complete);
    CHECK(a.total_latency == oracles::linear_latency(2, 1, 4));
    CHECK(a.invade_latency == 5);
    CHECK(a.claim_latency == 3);
    CHECK(a.infect_cycles == 4);  // pipelined loads, one cycle per PE
    CHECK(a.retreat_latency == 6);
    CHECK(a.centralized_baseline == 180);
    CHECK(a.speedup_vs_centralized == doctest::Approx(22.5));
    CHECK(m.energy.e_baseline == doctest::Approx(200.0 * 16 * 11));
    CHECK(m.utilization.size() == 200);
    for (double u : m.utilization) {
        CHECK(u >= 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("an empty event list terminates immediately") {
    Scenario sc = load_scenario(R"({
      "array": {"rows": 4, "cols": 4, "seed_candidates": [[0,0]]},
      "events": []
    })");
    Metrics m = run(sc).metrics;
    CHECK(m.total_cycles == 0);
    CHECK(m.apps.empty());
    CHECK(m.energy.e_total == 0.0);
}

TEST_CASE("competing same-cycle invades both land with disjoint claims") {
    Scenario sc = load_scenario(R"({
      "array": {"rows": 4, "cols": 4, "seed_candidates": [[0,0],[3,3]]},
      "power": {"d_switch": 0},
      "events": [
        {"at_cycle": 0, "action": "invade", "app_id": 1, "strategy": {"linear": 6}},
        {"at_cycle": 0, "action": "invade", "app_id": 2, "strategy": {"linear": 6}},
        {"at_cycle": 500, "action": "end"}
      ]
    })");
    Metrics m = run(sc).metrics;
    REQUIRE(m.apps.size() == 2);
    // the waves meet at (0,3)/(1,3): app 1 wins the contested hop at cycle 5
    // but is then boxed in by app 2's column and stalls at four PEs, while
    // app 2 reroutes westward and completes
    CHECK(m.apps[0].granted == 4);
    CHECK_FALSE(m.apps[0].complete);
    CHECK(m.apps[1].granted == 6);
    CHECK(m.apps[1].complete);
    std::set<Coord> seen;
    for (const AppMetrics& a : m.apps)
        for (Coord c : a.pes) CHECK(seen.insert(c).second);
}

TEST_CASE("reruns of a scenario file are byte-identical") {
    std::string path = scenario_path("demo.json");
    Scenario sc1 = load_scenario_file(path);
    Scenario sc2 = load_scenario_file(path);
    RunResult a = run(sc1);
    RunResult b = run(sc2);
    CHECK(metrics_to_json(a.metrics) == metrics_to_json(b.metrics));
    CHECK(trace_to_text(a.trace) == trace_to_text(b.trace));
    CHECK_FALSE(a.trace.empty());
}

TEST_CASE("the demo scenario corrects its injected fault") {
    Metrics m = run(load_scenario_file(scenario_path("demo.json"))).metrics;
    REQUIRE(m.apps.size() == 2);
    const AppMetrics& ft_app = m.apps[1];
    REQUIRE(ft_app.ft.has_value());
    CHECK(ft_app.status == "ok");
    CHECK(ft_app.ft->injected == 1);
    CHECK(ft_app.ft->corrected == 1);
    CHECK(ft_app.ft->silent == 0);
    CHECK(ft_app.ft->outputs_valid);
    CHECK(ft_app.retreat_latency >= 0);
}

TEST_CASE("the energy workload stays under the utilization target") {
    Metrics m = run(load_scenario_file(scenario_path("energy_bench.json"))).metrics;
    CHECK(m.utilization_mean <= 0.25);
    CHECK(m.energy.savings_fraction >= 0.70);
    CHECK(m.energy.estimate_error <= 0.036);
    CHECK(m.energy.e_total ==
          doctest::Approx(m.energy.by_component.pe_active + m.energy.by_component.pe_leak +
                          m.energy.by_component.ictrl_active +
                          m.energy.by_component.ictrl_leak + m.energy.by_component.switching));
}

TEST_CASE("energy accounting matches a hand-integrated two-PE trace") {
    // 1x2 array, free switching delay. Wave timing: seed iCtrl on at cycle
    // 2, neighbor at 3, both PEs on at the claim confirms (cycle 4). The
    // retreat request fires at 50, the wave departs at 51 and both PEs
    // release at 53, so components are charged through cycle 52: iCtrl
    // spans 51 and 50 cycles, PE spans 49 each, plus eight 50-unit toggles.
    Scenario sc = load_scenario(R"({
      "array": {"rows": 1, "cols": 2, "seed_candidates": [[0,0]]},
      "power": {"d_switch": 0, "e_switch": 50.0},
      "events": [
        {"at_cycle": 0, "action": "invade", "app_id": 1, "strategy": {"linear": 2}},
        {"at_cycle": 50, "action": "retreat", "app_id": 1},
        {"at_cycle": 100, "action": "end"}
      ]
    })");
    Metrics m = run(sc).metrics;
    CHECK(m.energy.e_total == doctest::Approx(51 + 50 + 2 * 49 * 10.0 + 8 * 50.0));
    CHECK(m.energy.e_baseline == doctest::Approx(100 * 2 * 11.0));
    CHECK(m.energy.toggles_ictrl == 4);
    CHECK(m.energy.toggles_pe == 4);
}

TEST_CASE("sweeping the voting scheme compares overhead per grid row") {
    std::string text = R"({
      "array": {"rows": 8, "cols": 8, "seed_candidates": [[0,0],[0,7],[7,0],[7,7]]},
      "power": {"d_switch": 0, "e_switch": 0.0},
      "events": [
        {"at_cycle": 0, "action": "invade", "app_id": 1, "strategy": {"linear": 4},
         "reliability": "tmr",
         "ft": {"loop": {"taps": [3,1,4,1], "input": [1,2,3,4,5,6,7,8,9,10,11,12,13,14,15,16],
                         "frame_size": 16, "buffer_size": 4},
                "scheme": "4c"}},
        {"at_cycle": 400, "action": "end"}
      ]
    })";
    SweepParameter p;
    p.path = "events.0.ft.scheme";
    p.values = {"\"4a\"", "\"4c\"", "\"4d\""};
    SweepResult table = sweep(text, {p});
    REQUIRE(table.rows.size() == 3);
    std::vector<double> overhead;
    for (const SweepRow& r : table.rows) {
        REQUIRE(r.metrics.apps.size() == 1);
        REQUIRE(r.metrics.apps[0].ft.has_value());
        CHECK(r.metrics.apps[0].ft->silent == 0);
        overhead.push_back(r.metrics.apps[0].ft->timing_overhead);
    }
    CHECK(overhead[0] == doctest::Approx(0.0));   // overlapped output voter
    CHECK(overhead[1] == doctest::Approx(1.0));   // one hardware stage per iteration
    CHECK(overhead[2] == doctest::Approx(10.0));  // software vote + gather
    std::string csv = sweep_to_csv(table);
    CHECK(csv.find("ft_timing_overhead") != std::string::npos);
}

TEST_CASE("sweep expands the grid deterministically") {
    std::string text = R"({
      "array": {"rows": 4, "cols": 4, "seed_candidates": [[0,0]]},
      "power": {"d_switch": 0, "e_switch": 0.0, "ictrl_domain_size": "1"},
      "rng_seed": 5,
      "events": [
        {"at_cycle": 0, "action": "invade", "app_id": 1, "strategy": {"rect": [2, 2]}},
        {"at_cycle": 200, "action": "retreat", "app_id": 1},
        {"at_cycle": 300, "action": "end"}
      ]
    })";
    SweepParameter p;
    p.path = "power.ictrl_domain_size";
    p.values = {"\"1\"", "\"4\"", "\"row\""};
    SweepResult table = sweep(text, {p});
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[0].metrics.energy.e_total <= table.rows[1].metrics.energy.e_total);
    CHECK(table.rows[1].metrics.energy.e_total <= table.rows[2].metrics.energy.e_total);
    std::string csv = sweep_to_csv(table);
    CHECK(csv.find("power.ictrl_domain_size") != std::string::npos);
    CHECK(csv.find("savings_fraction") != std::string::npos);

    SweepResult again = sweep(text, {p});
    CHECK(sweep_to_csv(again) == csv);

    SweepResult empty = sweep(text, {});
    CHECK(empty.rows.empty());

    SweepParameter bad;
    bad.path = "power.not_a_field";
    bad.values = {"1"};
    CHECK_THROWS_AS(sweep(text, {bad}), ScenarioError);
}
