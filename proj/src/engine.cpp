#include "tcpa/engine.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace tcpa {

namespace {

using json = nlohmann::ordered_json;

std::string format_event(const ProtocolEvent& ev) {
    std::string s = event_kind_name(ev.kind);
    s += " app=" + std::to_string(ev.app);
    if (ev.from) s += " from=" + to_string(*ev.from);
    s += " to=" + to_string(ev.to);
    return s;
}

struct AppRun {
    InvadeEvent spec;
    Cycle invade_at = 0;

    enum class St { Invading, WaitPower, Infecting, Executing, Idle, Retreating, Done };
    St st = St::Invading;

    int invade_handle = -1;
    int replicas_needed = 1;
    std::vector<Claim> claims;
    ReplicationPlan plan;
    ReplicatedProgram prog;
    std::unique_ptr<FTExecutor> exec;
    std::vector<int> infect_handles;
    std::vector<bool> infect_ok;
    std::vector<Cycle> infect_spans;
    std::vector<int> retreat_handles;
    std::vector<bool> retreat_ok;
    Cycle max_retreat = 0;
    bool retreat_requested = false;
    bool rollback = false;  // retreating because replica planning failed
    std::optional<Cycle> retreat_event_at;
    std::vector<FaultEvent> pending_faults;
    std::vector<Claim> held_claims;  // final geometry, kept for reporting
    AppMetrics m;

    bool finished() const {
        return st == St::Done || (st == St::Idle && !retreat_requested);
    }
};

struct Engine {
    const Scenario& scenario;
    ArrayState array;
    PowerManager power;
    ProtocolEngine proto;
    std::map<AppId, AppRun> apps;
    std::vector<std::string> trace;
    std::vector<double> utilization;
    Cycle cycle = 0;

    explicit Engine(const Scenario& sc)
        : scenario(sc),
          array(build_array(sc.array)),
          power(array, sc.power),
          proto(array, sc.protocol, &power) {}

    void line(const std::string& s) { trace.push_back(std::to_string(cycle) + " " + s); }

    InvadeRequest replica_request(const AppRun& app) const {
        InvadeRequest r;
        r.app_id = app.spec.request.app_id;
        r.strategy = LinearShape{app.spec.ft->loop.tap_count()};
        r.reliability = app.spec.request.reliability;
        r.issue_cycle = proto.now();
        return r;
    }

    void fire(const ScenarioEvent& ev) {
        if (std::holds_alternative<InvadeEvent>(ev.action)) {
            const auto& inv = std::get<InvadeEvent>(ev.action);
            AppRun& app = apps[inv.request.app_id];
            app.spec = inv;
            app.invade_at = ev.at_cycle;
            app.m.app_id = inv.request.app_id;
            app.m.requested = requested_count(inv.request.strategy);
            app.m.status = "ok";
            app.replicas_needed =
                inv.request.reliability == Redundancy::None
                    ? 1
                    : (inv.request.reliability == Redundancy::TMR ? 3 : 2);
            InvadeRequest first =
                inv.request.reliability == Redundancy::None ? inv.request : replica_request(app);
            first.issue_cycle = ev.at_cycle;
            app.invade_handle = proto.start_invade(first);
            line("request app=" + std::to_string(inv.request.app_id));
        } else if (std::holds_alternative<RetreatEvent>(ev.action)) {
            AppId id = std::get<RetreatEvent>(ev.action).app_id;
            auto it = apps.find(id);
            if (it != apps.end()) {
                it->second.retreat_requested = true;
                it->second.retreat_event_at = ev.at_cycle;
                line("retreat_requested app=" + std::to_string(id));
            }
        } else if (std::holds_alternative<InjectFaultsEvent>(ev.action)) {
            const auto& f = std::get<InjectFaultsEvent>(ev.action);
            auto it = apps.find(f.app_id);
            if (it != apps.end()) {
                if (it->second.exec)
                    it->second.exec->add_faults(f.faults);
                else
                    it->second.pending_faults.insert(it->second.pending_faults.end(),
                                                     f.faults.begin(), f.faults.end());
                line("inject_faults app=" + std::to_string(f.app_id) +
                     " count=" + std::to_string(f.faults.size()));
            }
        }
    }

    void begin_retreat(AppRun& app) {
        app.retreat_handles.clear();
        for (const Claim& c : app.claims) app.retreat_handles.push_back(proto.start_retreat(c));
        app.retreat_ok.assign(app.retreat_handles.size(), false);
        app.max_retreat = 0;
        app.st = AppRun::St::Retreating;
    }

    void finish(AppRun& app, const std::string& status) {
        app.m.status = status;
        app.st = AppRun::St::Done;
        line("app=" + std::to_string(app.m.app_id) + " done status=" + status);
    }

    void advance(AppRun& app) {
        switch (app.st) {
            case AppRun::St::Invading:   step_invading(app); break;
            case AppRun::St::WaitPower:  step_wait_power(app); break;
            case AppRun::St::Infecting:  step_infecting(app); break;
            case AppRun::St::Executing:  step_executing(app); break;
            case AppRun::St::Idle:
                if (app.retreat_requested && !app.claims.empty())
                    begin_retreat(app);
                else if (app.retreat_requested)
                    finish(app, app.m.status);
                break;
            case AppRun::St::Retreating: step_retreating(app); break;
            case AppRun::St::Done:       break;
        }
    }

    void step_invading(AppRun& app) {
        if (app.invade_handle < 0) {
            app.invade_handle = proto.start_invade(replica_request(app));
            return;
        }
        auto outcome = proto.take_invade_outcome(app.invade_handle);
        if (!outcome) return;
        app.invade_handle = -1;

        bool ft = app.spec.request.reliability != Redundancy::None;
        const int want = ft ? app.spec.ft->loop.tap_count() : app.m.requested;
        if (outcome->no_seed || outcome->claim.granted == 0 ||
            (ft && outcome->claim.granted < want)) {
            if (!outcome->no_seed && outcome->claim.granted > 0)
                app.claims.push_back(outcome->claim);  // rolled back below
            std::string status = outcome->no_seed && app.claims.empty() ? "rejected" : "failed";
            line("plan_failed app=" + std::to_string(app.m.app_id) + " status=" + status);
            app.m.status = status;
            app.m.granted = 0;
            app.m.pes.clear();
            if (app.claims.empty()) {
                finish(app, status);
            } else {
                app.rollback = true;
                begin_retreat(app);
            }
            return;
        }

        const Claim& claim = outcome->claim;
        if (app.claims.empty()) {
            app.m.seed = claim.seed;
            app.m.invade_latency = claim.invade_latency;
            app.m.claim_latency = claim.claim_latency;
        }
        app.claims.push_back(claim);
        app.m.granted += claim.granted;
        app.m.pes.insert(app.m.pes.end(), claim.pes.begin(), claim.pes.end());
        line("claim app=" + std::to_string(app.m.app_id) + " granted=" +
             std::to_string(claim.granted) + " seed=" + to_string(claim.seed) +
             " latency=" + std::to_string(claim.total_latency()));

        if (static_cast<int>(app.claims.size()) < app.replicas_needed) {
            app.invade_handle = proto.start_invade(replica_request(app));
            return;
        }

        app.m.total_latency = outcome->done_cycle - app.invade_at;
        app.held_claims = app.claims;
        app.m.complete = std::all_of(app.claims.begin(), app.claims.end(),
                                     [](const Claim& c) { return c.complete; });
        app.m.centralized_baseline =
            centralized_baseline_cycles(scenario.protocol, app.m.granted);
        if (app.m.total_latency > 0)
            app.m.speedup_vs_centralized = static_cast<double>(app.m.centralized_baseline) /
                                           static_cast<double>(app.m.total_latency);
        if (ft) {
            const FtSpec& f = *app.spec.ft;
            app.plan.mode = app.spec.request.reliability;
            app.plan.replicas = app.claims;
            app.plan.scheme = f.scheme;
            app.plan.vote_every = f.vote_every;
            app.plan.voted = f.voted;
            app.plan.costs = f.costs;
            app.plan.policy = f.policy;
            if (app.plan.policy.rewind == RewindTarget::PreviousIteration &&
                f.loop.tap_count() > 1) {
                app.plan.policy.rewind = RewindTarget::BufferStart;
                app.plan.rewind_fallback = true;
                line("app=" + std::to_string(app.m.app_id) +
                     " rewind fallback: previous_iteration needs single-iteration register "
                     "lifetimes, using buffer_start");
            }
            place_voters(app.plan);
        }
        app.st = app.retreat_requested ? AppRun::St::Idle : AppRun::St::WaitPower;
    }

    void step_wait_power(AppRun& app) {
        for (Coord c : app.m.pes)
            if (!power.pe_ready(c)) return;
        app.infect_handles.clear();
        for (const Claim& c : app.claims)
            app.infect_handles.push_back(proto.start_infect(c, app.m.app_id));
        app.infect_ok.assign(app.infect_handles.size(), false);
        app.infect_spans.assign(app.infect_handles.size(), 0);
        app.st = AppRun::St::Infecting;
    }

    void step_infecting(AppRun& app) {
        bool all = true;
        for (std::size_t i = 0; i < app.infect_handles.size(); ++i) {
            if (!app.infect_ok[i]) {
                if (auto span = proto.take_infect_cycles(app.infect_handles[i])) {
                    app.infect_ok[i] = true;
                    app.infect_spans[i] = *span;
                }
            }
            all = all && app.infect_ok[i];
        }
        if (!all) return;
        app.m.infect_cycles =
            *std::max_element(app.infect_spans.begin(), app.infect_spans.end());
        line("infect app=" + std::to_string(app.m.app_id) + " cycles=" +
             std::to_string(app.m.infect_cycles));
        if (app.spec.ft) {
            std::vector<FaultEvent> faults = app.spec.ft->faults;
            faults.insert(faults.end(), app.pending_faults.begin(), app.pending_faults.end());
            app.pending_faults.clear();
            app.prog = replicate_loop(app.spec.ft->loop, app.plan);
            app.exec = std::make_unique<FTExecutor>(array, proto, app.plan, app.prog,
                                                    std::move(faults), app.m.app_id, &power);
            app.st = AppRun::St::Executing;
        } else {
            app.st = AppRun::St::Idle;
        }
    }

    void step_executing(AppRun& app) {
        if (app.retreat_requested) {
            app.exec->cancel();
            for (const std::string& s : app.exec->drain_trace()) line(s);
            FTResult r = app.exec->result();
            app.m.ft = r.stats;
            app.m.ft_outputs = r.outputs;
            app.m.status = "aborted";
            app.claims = app.exec->plan().replicas;
            begin_retreat(app);
            return;
        }
        bool running = app.exec->step();
        for (const std::string& s : app.exec->drain_trace()) line(s);
        if (running) return;
        FTResult r = app.exec->result();
        app.m.ft = r.stats;
        app.m.ft_outputs = r.outputs;
        if (!r.stats.outputs_valid) app.m.status = "aborted";
        // migration may have moved the claims
        app.claims = app.exec->plan().replicas;
        app.held_claims = app.claims;
        app.m.pes.clear();
        for (const Claim& c : app.claims)
            app.m.pes.insert(app.m.pes.end(), c.pes.begin(), c.pes.end());
        line("ft_done app=" + std::to_string(app.m.app_id) +
             " detected=" + std::to_string(r.stats.detected) +
             " corrected=" + std::to_string(r.stats.corrected) +
             " silent=" + std::to_string(r.stats.silent));
        app.st = AppRun::St::Idle;
    }

    void step_retreating(AppRun& app) {
        bool all = true;
        for (std::size_t i = 0; i < app.retreat_handles.size(); ++i) {
            if (!app.retreat_ok[i]) {
                if (auto lat = proto.take_retreat_latency(app.retreat_handles[i])) {
                    app.retreat_ok[i] = true;
                    app.max_retreat = std::max(app.max_retreat, *lat);
                }
            }
            all = all && app.retreat_ok[i];
        }
        if (!all) return;
        app.claims.clear();
        if (app.rollback) {
            finish(app, "failed");
            return;
        }
        app.m.retreat_latency = app.max_retreat;
        line("retreat app=" + std::to_string(app.m.app_id) + " latency=" +
             std::to_string(app.max_retreat));
        finish(app, app.m.status);
    }

    bool all_finished() const {
        for (const auto& [id, app] : apps)
            if (!app.finished()) return false;
        return true;
    }

    // cross-module consistency: with per-PE power domains, a powered
    // processing unit always belongs to a claim
    void check_power_ownership() const {
        if (scenario.power.pe_domains != DomainGranularity::Single) return;
        for (const ProcessorElement& pe : array.pes())
            if (pe.pe_power == PowerState::On && !pe.owner)
                throw std::logic_error("powered PE without an owner at " + to_string(pe.coord));
    }

    RunResult run() {
        std::optional<Cycle> end_at;
        for (const ScenarioEvent& ev : scenario.events)
            if (std::holds_alternative<EndEvent>(ev.action)) {
                end_at = ev.at_cycle;
                break;
            }

        std::size_t next_ev = 0;
        constexpr Cycle kSafetyCap = 100'000'000;
        while (true) {
            if (end_at && cycle == *end_at) break;
            while (next_ev < scenario.events.size() &&
                   scenario.events[next_ev].at_cycle <= cycle) {
                fire(scenario.events[next_ev]);
                ++next_ev;
            }
            if (!end_at && next_ev >= scenario.events.size() && proto.quiescent() &&
                all_finished())
                break;
            std::vector<ProtocolEvent> evs = proto.step();
            for (const ProtocolEvent& ev : evs) line(format_event(ev));
            for (const std::string& s : power.drain_trace()) line(s);
            for (auto& [id, app] : apps) advance(app);
            power.accumulate(cycle);
            utilization.push_back(array.pe_count() > 0
                                      ? static_cast<double>(power.pe_on_count()) /
                                            static_cast<double>(array.pe_count())
                                      : 0.0);
            check_power_ownership();
            ++cycle;
            if (cycle > kSafetyCap)
                throw std::runtime_error("simulation exceeded the safety cycle cap");
        }
        return finalize();
    }

    RunResult finalize() {
        RunResult out;
        Metrics& m = out.metrics;
        m.total_cycles = cycle;
        ScenarioSummary summary;
        summary.span = cycle;
        summary.seed_select_cycles = scenario.protocol.seed_select_cycles;
        summary.hop_latency = scenario.array.hop_latency();
        for (auto& [id, app] : apps) {
            if (app.st == AppRun::St::Executing && app.exec) {
                app.exec->cancel();
                FTResult r = app.exec->result();
                app.m.ft = r.stats;
                app.m.ft_outputs = r.outputs;
                app.m.status = "aborted";
            } else if (app.st == AppRun::St::Invading || app.st == AppRun::St::WaitPower ||
                       app.st == AppRun::St::Infecting || app.st == AppRun::St::Retreating) {
                app.m.status = "incomplete";
            }
            for (const Claim& c : app.held_claims) {
                AppEnergySummary s;
                s.pes = c.pes;
                s.invade_at = app.invade_at;
                s.has_retreat = app.retreat_event_at.has_value();
                s.retreat_at = app.retreat_event_at.value_or(cycle);
                summary.apps.push_back(std::move(s));
            }
            m.apps.push_back(app.m);
        }
        double analytic = analytic_estimate(summary, power.model(), scenario.array);
        m.energy = make_report(power.energy_total(), power.energy_baseline(), analytic,
                               power.breakdown(), proto.stall_cycles(),
                               power.toggles(DomainKind::ICtrl), power.toggles(DomainKind::PE));
        m.utilization = utilization;
        for (double u : utilization) {
            m.utilization_mean += u;
            m.utilization_peak = std::max(m.utilization_peak, u);
        }
        if (!utilization.empty()) m.utilization_mean /= static_cast<double>(utilization.size());
        out.trace = trace;
        return out;
    }
};

json coord_json(Coord c) { return json::array({c.row, c.col}); }

}  // namespace

RunResult run(const Scenario& scenario) {
    Engine engine(scenario);
    return engine.run();
}

std::string metrics_to_json(const Metrics& m) {
    json j;
    j["total_cycles"] = m.total_cycles;
    json apps = json::array();
    for (const AppMetrics& a : m.apps) {
        json ja;
        ja["app"] = a.app_id;
        ja["status"] = a.status;
        ja["requested"] = a.requested;
        ja["granted"] = a.granted;
        ja["complete"] = a.complete;
        ja["seed"] = coord_json(a.seed);
        json pes = json::array();
        for (Coord c : a.pes) pes.push_back(coord_json(c));
        ja["pes"] = pes;
        ja["invade_latency"] = a.invade_latency;
        ja["claim_latency"] = a.claim_latency;
        ja["total_latency"] = a.total_latency;
        ja["infect_cycles"] = a.infect_cycles;
        ja["retreat_latency"] = a.retreat_latency;
        ja["centralized_baseline"] = a.centralized_baseline;
        ja["speedup_vs_centralized"] = a.speedup_vs_centralized;
        if (a.ft) {
            json ft;
            ft["injected"] = a.ft->injected;
            ft["detected"] = a.ft->detected;
            ft["corrected"] = a.ft->corrected;
            ft["silent"] = a.ft->silent;
            ft["halts"] = a.ft->halts;
            ft["migrations"] = a.ft->migrations;
            json rw;
            for (const auto& [target, count] : a.ft->rewinds)
                rw[rewind_target_name(target)] = count;
            ft["rewinds"] = rw;
            ft["execution_cycles"] = a.ft->execution_cycles;
            ft["timing_overhead"] = a.ft->timing_overhead;
            ft["voter_fu_count"] = a.ft->voter_fu_count;
            ft["extra_pes"] = a.ft->extra_pes;
            ft["outputs_valid"] = a.ft->outputs_valid;
            ft["outputs"] = a.ft_outputs;
            ja["ft"] = ft;
        }
        apps.push_back(ja);
    }
    j["apps"] = apps;
    json e;
    e["e_total"] = m.energy.e_total;
    e["e_baseline"] = m.energy.e_baseline;
    e["savings_fraction"] = m.energy.savings_fraction;
    json bc;
    bc["pe_active"] = m.energy.by_component.pe_active;
    bc["pe_leak"] = m.energy.by_component.pe_leak;
    bc["ictrl_active"] = m.energy.by_component.ictrl_active;
    bc["ictrl_leak"] = m.energy.by_component.ictrl_leak;
    bc["switching"] = m.energy.by_component.switching;
    e["by_component"] = bc;
    e["stall_cycles"] = m.energy.stall_cycles;
    e["analytic_estimate"] = m.energy.analytic_estimate;
    e["estimate_error"] = m.energy.estimate_error;
    e["toggles_ictrl"] = m.energy.toggles_ictrl;
    e["toggles_pe"] = m.energy.toggles_pe;
    j["energy"] = e;
    json u;
    u["mean"] = m.utilization_mean;
    u["peak"] = m.utilization_peak;
    u["samples"] = m.utilization;
    j["utilization"] = u;
    return j.dump(2) + "\n";
}

std::string trace_to_text(const std::vector<std::string>& trace) {
    std::string out;
    for (const std::string& s : trace) {
        out += s;
        out += '\n';
    }
    return out;
}

SweepResult sweep(const std::string& scenario_text, const std::vector<SweepParameter>& grid) {
    SweepResult table;
    for (const SweepParameter& p : grid) table.paths.push_back(p.path);

    std::vector<std::size_t> sizes;
    std::size_t total = 1;
    for (const SweepParameter& p : grid) {
        if (p.values.empty()) return table;
        sizes.push_back(p.values.size());
        total *= p.values.size();
    }
    if (grid.empty()) total = 0;

    for (std::size_t idx = 0; idx < total; ++idx) {
        std::vector<std::pair<std::string, std::string>> overrides;
        std::vector<std::string> values;
        std::size_t rem = idx;
        for (std::size_t p = grid.size(); p-- > 0;) {
            std::size_t v = rem % sizes[p];
            rem /= sizes[p];
            overrides.emplace_back(grid[p].path, grid[p].values[v]);
            values.push_back(grid[p].values[v]);
        }
        std::reverse(overrides.begin(), overrides.end());
        std::reverse(values.begin(), values.end());
        Scenario sc = load_scenario(apply_overrides(scenario_text, overrides));
        sc.rng_seed = sc.rng_seed + 0x9E3779B97F4A7C15ull * (idx + 1);
        SweepRow row;
        row.index = static_cast<int>(idx);
        row.values = values;
        row.metrics = run(sc).metrics;
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string sweep_to_csv(const SweepResult& table) {
    auto num = [](double v) { return json(v).dump(); };
    std::string out = "index";
    for (const std::string& p : table.paths) out += "," + p;
    out += ",total_cycles,apps_ok,mean_total_latency,e_total,e_baseline,savings_fraction,"
           "analytic_estimate,estimate_error,stall_cycles,toggles_ictrl,toggles_pe,"
           "utilization_mean,ft_injected,ft_detected,ft_corrected,ft_silent,"
           "ft_timing_overhead\n";
    for (const SweepRow& r : table.rows) {
        out += std::to_string(r.index);
        for (const std::string& v : r.values) {
            std::string clean = v;
            std::erase(clean, '"');
            out += "," + clean;
        }
        long ok = 0;
        double lat = 0;
        long ft_injected = 0, ft_detected = 0, ft_corrected = 0, ft_silent = 0;
        double ft_overhead = 0;
        for (const AppMetrics& a : r.metrics.apps) {
            if (a.status == "ok") ++ok;
            lat += static_cast<double>(a.total_latency);
            if (a.ft) {
                ft_injected += a.ft->injected;
                ft_detected += a.ft->detected;
                ft_corrected += a.ft->corrected;
                ft_silent += a.ft->silent;
                ft_overhead = std::max(ft_overhead, a.ft->timing_overhead);
            }
        }
        if (!r.metrics.apps.empty()) lat /= static_cast<double>(r.metrics.apps.size());
        out += "," + std::to_string(r.metrics.total_cycles);
        out += "," + std::to_string(ok);
        out += "," + num(lat);
        out += "," + num(r.metrics.energy.e_total);
        out += "," + num(r.metrics.energy.e_baseline);
        out += "," + num(r.metrics.energy.savings_fraction);
        out += "," + num(r.metrics.energy.analytic_estimate);
        out += "," + num(r.metrics.energy.estimate_error);
        out += "," + std::to_string(r.metrics.energy.stall_cycles);
        out += "," + std::to_string(r.metrics.energy.toggles_ictrl);
        out += "," + std::to_string(r.metrics.energy.toggles_pe);
        out += "," + num(r.metrics.utilization_mean);
        out += "," + std::to_string(ft_injected);
        out += "," + std::to_string(ft_detected);
        out += "," + std::to_string(ft_corrected);
        out += "," + std::to_string(ft_silent);
        out += "," + num(ft_overhead);
        out += "\n";
    }
    return out;
}

}  // namespace tcpa
