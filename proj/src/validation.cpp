#include "tcpa/validation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tcpa {

namespace {

using json = nlohmann::ordered_json;

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ArrayConfig square_array(int side, ICtrlKind kind = ICtrlKind::FSM) {
    ArrayConfig cfg;
    cfg.rows = side;
    cfg.cols = side;
    cfg.ictrl_kind = kind;
    cfg.seed_candidates = {{0, 0}};
    return cfg;
}

}  // namespace

CheckResult check_latency_closed_form() {
    CheckResult r{"latency_closed_form", true, ""};
    for (ICtrlKind kind : {ICtrlKind::FSM, ICtrlKind::Programmable}) {
        for (int n = 1; n <= 16; ++n) {
            ArrayConfig cfg = square_array(16, kind);
            ArrayState array = build_array(cfg);
            ProtocolParams params;
            ProtocolEngine proto(array, params);
            InvadeRequest req;
            req.app_id = 1;
            req.strategy = LinearShape{n};
            std::optional<Claim> claim = proto.invade(req);
            Cycle expected = params.seed_select_cycles +
                             2L * cfg.hop_latency() * (n - 1);
            if (!claim || claim->granted != n || claim->total_latency() != expected) {
                r.pass = false;
                r.detail = "n=" + std::to_string(n) + " kind=" +
                           (kind == ICtrlKind::FSM ? "fsm" : "programmable") + " expected=" +
                           std::to_string(expected) + " got=" +
                           std::to_string(claim ? claim->total_latency() : -1);
                return r;
            }
        }
    }
    r.detail = "n=1..16, both controller kinds, exact";
    return r;
}

SpeedupBenchResult run_speedup_bench(const std::string& bench_file) {
    json j = json::parse(slurp(bench_file));
    SpeedupBenchResult out;
    out.envelope_lo = j.value("envelope_lo", 2.6);
    out.envelope_hi = j.value("envelope_hi", 45.0);
    ProtocolParams params;
    params.seed_select_cycles = j.value("seed_select_cycles", 2);
    params.centralized_fixed = j.value("c_fixed", 100);
    params.centralized_per_pe = j.value("c_per_pe", 20);

    std::vector<int> sizes = j.at("sizes").get<std::vector<int>>();
    std::vector<std::string> kinds = j.at("kinds").get<std::vector<std::string>>();
    out.fsm_in_envelope = true;
    for (int size : sizes) {
        int side = 1;
        while (side * side < size) ++side;
        for (const std::string& kind : kinds) {
            ArrayConfig cfg = square_array(
                side, kind == "fsm" ? ICtrlKind::FSM : ICtrlKind::Programmable);
            ArrayState array = build_array(cfg);
            ProtocolEngine proto(array, params);
            InvadeRequest req;
            req.app_id = 1;
            req.strategy = LinearShape{size};
            std::optional<Claim> claim = proto.invade(req);
            SpeedupRow row;
            row.size = size;
            row.kind = kind;
            row.granted = claim ? claim->granted : 0;
            row.distributed = claim ? claim->total_latency() : 0;
            row.centralized = centralized_baseline_cycles(params, std::max(1, row.granted));
            row.speedup = row.distributed > 0
                              ? static_cast<double>(row.centralized) /
                                    static_cast<double>(row.distributed)
                              : 0.0;
            row.in_envelope = row.speedup >= out.envelope_lo && row.speedup <= out.envelope_hi;
            if (kind == "fsm" && !row.in_envelope) out.fsm_in_envelope = false;
            out.rows.push_back(row);
        }
    }
    return out;
}

EnergyBenchResult run_energy_bench(const std::string& scenario_file,
                                   const std::vector<std::string>& groupings) {
    std::string text = slurp(scenario_file);
    EnergyBenchResult out;
    for (const std::string& g : groupings) {
        std::string overridden =
            apply_overrides(text, {{"power.ictrl_domain_size", "\"" + g + "\""}});
        Scenario sc = load_scenario(overridden);
        Metrics m = run(sc).metrics;
        EnergyRow row;
        row.grouping = g;
        row.e_total = m.energy.e_total;
        row.e_baseline = m.energy.e_baseline;
        row.savings = m.energy.savings_fraction;
        row.analytic = m.energy.analytic_estimate;
        row.error = m.energy.estimate_error;
        row.stall_cycles = m.energy.stall_cycles;
        row.toggles_ictrl = m.energy.toggles_ictrl;
        row.toggles_pe = m.energy.toggles_pe;
        row.utilization_mean = m.utilization_mean;
        if (g == "1") out.fine_savings = row.savings;
        out.max_error = std::max(out.max_error, row.error);
        out.rows.push_back(row);
    }
    return out;
}

FaultSweepStats single_fault_sweep(Redundancy mode, SchemeKind scheme, const LoopSpec& loop,
                                   VoteCosts costs) {
    ArrayConfig cfg = square_array(8);
    cfg.seed_candidates = {{0, 0}, {0, 7}, {7, 0}, {7, 7}};
    ArrayState array = build_array(cfg);
    ProtocolEngine proto(array, ProtocolParams{});
    InvadeRequest req;
    req.app_id = 1;
    req.strategy = LinearShape{loop.tap_count()};
    req.reliability = mode;
    PlanOutcome plan = plan_replication(proto, req, loop, scheme, default_voted_vars(scheme), 1,
                                        costs, RecoveryPolicy{});
    if (!plan.ok) throw std::runtime_error("fault sweep: " + plan.error);
    ReplicatedProgram prog = replicate_loop(loop, plan.plan);
    std::vector<Word> golden = loop.golden();

    FaultSweepStats st;
    auto run_one = [&](const FaultEvent& f) {
        FTResult r = execute_with_faults(array, proto, plan.plan, prog, {f}, 1);
        st.runs++;
        if (r.stats.detected > 0) st.detected++;
        if (r.stats.corrected > 0) st.corrected++;
        st.vote_corrections += r.stats.corrected;
        st.silent += r.stats.silent;
        if (!r.stats.outputs_valid || r.outputs != golden) st.wrong_outputs++;
    };

    const int N = loop.length(), T = loop.tap_count();
    for (int it = 0; it < N; ++it)
        for (int pe = 0; pe < T; ++pe)
            for (int bit = 0; bit < 16; ++bit)
                run_one({it, 0, pe, FaultTarget::PartialSum, bit});
    for (int it = 0; it < N; ++it)
        for (int bit = 0; bit < 16; ++bit)
            run_one({it, 0, T - 1, FaultTarget::Output, bit});
    return st;
}

CoverageGapResult two_fault_coverage(const LoopSpec& loop, VoteCosts costs, int bits) {
    const int N = loop.length(), T = loop.tap_count();
    std::vector<FaultEvent> singles;
    for (int it = 0; it < N; ++it)
        for (int replica = 0; replica < 3; ++replica) {
            for (int pe = 0; pe < T; ++pe)
                for (int bit = 0; bit < bits; ++bit)
                    singles.push_back({it, replica, pe, FaultTarget::PartialSum, bit});
            for (int bit = 0; bit < bits; ++bit)
                singles.push_back({it, replica, T - 1, FaultTarget::Output, bit});
        }

    struct SchemeRun {
        ArrayState array;
        ProtocolEngine proto;
        ReplicationPlan plan;
        ReplicatedProgram prog;
        SchemeRun(const LoopSpec& loop, SchemeKind scheme, VoteCosts costs)
            : array(build_array([] {
                  ArrayConfig cfg;
                  cfg.rows = 8;
                  cfg.cols = 8;
                  cfg.seed_candidates = {{0, 0}, {0, 7}, {7, 0}, {7, 7}};
                  return cfg;
              }())),
              proto(array, ProtocolParams{}) {
            InvadeRequest req;
            req.app_id = 1;
            req.strategy = LinearShape{loop.tap_count()};
            req.reliability = Redundancy::TMR;
            PlanOutcome out = plan_replication(proto, req, loop, scheme,
                                               default_voted_vars(scheme), 1, costs,
                                               RecoveryPolicy{});
            if (!out.ok) throw std::runtime_error("coverage: " + out.error);
            plan = out.plan;
            prog = replicate_loop(loop, plan);
        }
        bool silent(const std::vector<FaultEvent>& faults) {
            FTResult r = execute_with_faults(array, proto, plan, prog, faults, 1);
            return r.stats.silent > 0;
        }
    };

    SchemeRun output_only(loop, SchemeKind::OutputHW, costs);
    SchemeRun intermediate(loop, SchemeKind::IntermediateHW, costs);

    CoverageGapResult out;
    out.subset = true;
    for (std::size_t i = 0; i < singles.size(); ++i) {
        for (std::size_t j = i + 1; j < singles.size(); ++j) {
            std::vector<FaultEvent> pair{singles[i], singles[j]};
            bool sa = output_only.silent(pair);
            bool sc = intermediate.silent(pair);
            out.pairs++;
            if (sa) out.silent_output_only++;
            if (sc) out.silent_intermediate++;
            if (sc && !sa) out.subset = false;
            if (sa && !sc && !out.strict) {
                out.strict = true;
                const FaultEvent& a = singles[i];
                const FaultEvent& b = singles[j];
                out.witness = "faults (it=" + std::to_string(a.iteration) + ",r=" +
                              std::to_string(a.replica) + ",pe=" + std::to_string(a.pe_offset) +
                              ",bit=" + std::to_string(a.bit) + ") + (it=" +
                              std::to_string(b.iteration) + ",r=" + std::to_string(b.replica) +
                              ",pe=" + std::to_string(b.pe_offset) + ",bit=" +
                              std::to_string(b.bit) + ")";
            }
        }
    }
    return out;
}

FuzzReport fuzz_protocol(int count, std::uint64_t seed) {
    FuzzReport report;
    report.runs = count;

    for (int run_idx = 0; run_idx < count; ++run_idx) {
        std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(run_idx + 1));
        auto rnd = [&](int lo, int hi) {
            return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
        };

        int rows = rnd(3, 8), cols = rnd(3, 8);
        ArrayConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.ictrl_kind = rng() % 2 == 0 ? ICtrlKind::FSM : ICtrlKind::Programmable;
        std::vector<Coord> border;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (cfg.on_border({r, c})) border.push_back({r, c});
        int nseeds = rnd(1, 4);
        for (int i = 0; i < nseeds; ++i) {
            Coord cand = border[static_cast<std::size_t>(rnd(0, static_cast<int>(border.size()) - 1))];
            if (std::find(cfg.seed_candidates.begin(), cfg.seed_candidates.end(), cand) ==
                cfg.seed_candidates.end())
                cfg.seed_candidates.push_back(cand);
        }

        ArrayState array = build_array(cfg);
        ProtocolParams params;
        ProtocolEngine proto(array, params);
        const Cycle bound = params.seed_select_cycles + 2L * cfg.hop_latency() * rows * cols;

        struct Pending {
            InvadeRequest req;
            Cycle issue;
            int handle = -1;
            std::optional<Claim> claim;
            std::optional<Cycle> retreat_at;
            bool retreated = false;
            int retreat_handle = -1;
        };
        int napps = rnd(2, 8);
        std::vector<Pending> pend(static_cast<std::size_t>(napps));
        for (int a = 0; a < napps; ++a) {
            Pending& p = pend[static_cast<std::size_t>(a)];
            p.req.app_id = a + 1;
            if (rng() % 10 < 6)
                p.req.strategy = LinearShape{rnd(1, rows * cols)};
            else
                p.req.strategy = RectShape{rnd(1, cols), rnd(1, rows)};
            p.issue = rnd(0, 40);
        }

        auto fail = [&](const std::string& msg) {
            if (report.failures++ == 0)
                report.first_failure = "run " + std::to_string(run_idx) + ": " + msg;
        };

        const Cycle hard_cap = 64 * bound + 4096;
        bool done = false;
        while (!done) {
            Cycle now = proto.now();
            if (now > hard_cap) {
                fail("non-termination: exceeded hard cap");
                break;
            }
            for (Pending& p : pend) {
                if (p.handle < 0 && p.issue == now) p.handle = proto.start_invade(p.req);
                if (p.claim && !p.retreated && p.retreat_at && *p.retreat_at == now &&
                    p.claim->granted > 0) {
                    p.retreat_handle = proto.start_retreat(*p.claim);
                    p.retreated = true;
                }
            }
            proto.step();
            for (Pending& p : pend) {
                if (p.handle >= 0 && !p.claim) {
                    if (auto o = proto.take_invade_outcome(p.handle)) {
                        if (o->no_seed) {
                            p.claim = Claim{};  // rejected
                            continue;
                        }
                        p.claim = o->claim;
                        Cycle latency = o->done_cycle - p.issue;
                        if (latency > bound)
                            fail("invade latency " + std::to_string(latency) + " exceeds bound " +
                                 std::to_string(bound));
                        if (rng() % 2 == 0 && p.claim->granted > 0)
                            p.retreat_at = o->done_cycle + rnd(1, 100);
                    }
                }
                if (p.retreat_handle >= 0)
                    if (proto.take_retreat_latency(p.retreat_handle)) p.retreat_handle = -2;
            }
            done = proto.quiescent();
            for (const Pending& p : pend) {
                if (p.handle < 0 && p.issue > now) done = false;
                if (p.retreat_at && !p.retreated) done = false;
            }
        }
        if (report.failures > 0 && report.first_failure.find("non-termination") != std::string::npos)
            continue;

        // shape soundness and ownership disjointness
        std::set<Coord> owned;
        for (const Pending& p : pend) {
            report.apps_executed++;
            if (!p.claim || p.claim->granted == 0) continue;
            report.claims_granted += p.claim->granted;
            const Claim& c = *p.claim;
            if (static_cast<int>(c.pes.size()) != c.granted) fail("granted != |pes|");
            if (!c.pes.empty() && c.pes.front() != c.seed) fail("pes[0] != seed");
            if (is_linear(p.req.strategy)) {
                for (std::size_t i = 1; i < c.pes.size(); ++i) {
                    int d = std::abs(c.pes[i].row - c.pes[i - 1].row) +
                            std::abs(c.pes[i].col - c.pes[i - 1].col);
                    if (d != 1) fail("linear claim is not a connected chain");
                }
            } else {
                const auto& rect = std::get<RectShape>(p.req.strategy);
                if (c.granted != 0 && c.granted != rect.width * rect.height)
                    fail("rect claim is not all-or-nothing");
                if (c.granted > 0) {
                    int rlo = c.pes[0].row, rhi = c.pes[0].row;
                    int clo = c.pes[0].col, chi = c.pes[0].col;
                    for (Coord pc : c.pes) {
                        rlo = std::min(rlo, pc.row);
                        rhi = std::max(rhi, pc.row);
                        clo = std::min(clo, pc.col);
                        chi = std::max(chi, pc.col);
                    }
                    if ((rhi - rlo + 1) * (chi - clo + 1) != rect.width * rect.height)
                        fail("rect claim bounding box mismatch");
                }
            }
            if (p.retreated) continue;
            for (Coord pc : c.pes) {
                if (!owned.insert(pc).second) fail("ownership overlap at " + to_string(pc));
                const ProcessorElement& pe = array.at(pc);
                if (pe.ictrl.phase != Phase::Claimed || !pe.owner || *pe.owner != c.app)
                    fail("claimed PE not owned by its app");
            }
        }

        // conservation and retreat completeness
        for (const ProcessorElement& pe : array.pes()) {
            if (pe.ictrl.pending_confirms != 0) fail("pending confirms nonzero at quiescence");
            bool is_owned = owned.count(pe.coord) > 0;
            if (is_owned != (pe.ictrl.phase == Phase::Claimed))
                fail("phase/ownership inconsistency at " + to_string(pe.coord));
            if (!is_owned && pe.ictrl.phase != Phase::Idle)
                fail("unowned PE not idle at quiescence");
        }
    }
    return report;
}

CheckResult check_determinism(const std::string& scenario_file) {
    CheckResult r{"determinism", false, ""};
    std::string text = slurp(scenario_file);
    Scenario sc1 = load_scenario(text);
    RunResult a = run(sc1);
    Scenario sc2 = load_scenario(text);
    RunResult b = run(sc2);
    bool metrics_equal = metrics_to_json(a.metrics) == metrics_to_json(b.metrics);
    bool trace_equal = trace_to_text(a.trace) == trace_to_text(b.trace);
    r.pass = metrics_equal && trace_equal;
    r.detail = r.pass ? "metrics and trace byte-identical across reruns"
                      : std::string("mismatch in ") + (metrics_equal ? "trace" : "metrics");
    return r;
}

CheckResult check_grouping_orderings(const std::string& scenario_file) {
    CheckResult r{"grouping_orderings", false, ""};
    std::string text = slurp(scenario_file);
    const std::vector<std::string> groupings = {"1", "4", "row"};

    std::vector<double> energy_free;
    for (const std::string& g : groupings) {
        std::string t = apply_overrides(text, {{"power.ictrl_domain_size", "\"" + g + "\""},
                                               {"power.e_switch", "0"},
                                               {"power.d_switch", "0"}});
        energy_free.push_back(run(load_scenario(t)).metrics.energy.e_total);
    }
    bool energy_ordered = energy_free[0] <= energy_free[1] && energy_free[1] <= energy_free[2];

    std::vector<long> toggles;
    for (const std::string& g : groupings) {
        std::string t = apply_overrides(text, {{"power.ictrl_domain_size", "\"" + g + "\""}});
        const Metrics m = run(load_scenario(t)).metrics;
        toggles.push_back(m.energy.toggles_ictrl);
    }
    bool toggles_ordered = toggles[0] >= toggles[1] && toggles[1] >= toggles[2];

    r.pass = energy_ordered && toggles_ordered;
    std::ostringstream ss;
    ss << "energy(1)=" << energy_free[0] << " energy(4)=" << energy_free[1]
       << " energy(row)=" << energy_free[2] << (energy_ordered ? " ordered" : " ORDER VIOLATED")
       << "; toggles(1)=" << toggles[0] << " toggles(4)=" << toggles[1] << " toggles(row)="
       << toggles[2] << (toggles_ordered ? " non-increasing" : " ORDER VIOLATED");
    r.detail = ss.str();
    return r;
}

}  // namespace tcpa
