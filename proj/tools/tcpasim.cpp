// tcpasim: scenario runner, parameter sweeps, and the built-in speedup /
// energy / fault-tolerance benchmarks for the invasive processor-array
// simulator.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tcpa/engine.hpp"
#include "tcpa/validation.hpp"

namespace fs = std::filesystem;
using tcpa::CheckResult;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitThreshold = 1;
constexpr int kExitUsage = 2;

std::string default_scenario_dir() {
    if (const char* env = std::getenv("TCPASIM_SCENARIO_DIR")) return env;
#ifdef TCPASIM_DEFAULT_SCENARIO_DIR
    return TCPASIM_DEFAULT_SCENARIO_DIR;
#else
    return "scenarios";
#endif
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << content;
}

std::vector<std::pair<std::string, std::string>> parse_sets(const std::vector<std::string>& sets) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const std::string& s : sets) {
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--set expects path=value, got '" + s + "'");
        out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return out;
}

int cmd_simulate(const std::string& scenario_path, const std::string& outdir, bool with_trace,
                 const std::vector<std::string>& sets, std::optional<long> seed) {
    std::string text = slurp(scenario_path);
    auto overrides = parse_sets(sets);
    if (!overrides.empty()) text = tcpa::apply_overrides(text, overrides);
    tcpa::Scenario sc = tcpa::load_scenario(text);
    if (seed) sc.rng_seed = static_cast<std::uint64_t>(*seed);
    tcpa::RunResult result = tcpa::run(sc);
    write_file(fs::path(outdir) / "metrics.json", tcpa::metrics_to_json(result.metrics));
    if (with_trace)
        write_file(fs::path(outdir) / "trace.txt", tcpa::trace_to_text(result.trace));
    std::cout << "simulated " << result.metrics.total_cycles << " cycles, "
              << result.metrics.apps.size() << " apps, energy savings "
              << std::fixed << std::setprecision(3)
              << result.metrics.energy.savings_fraction << "\n";
    std::cout << "wrote " << (fs::path(outdir) / "metrics.json").string();
    if (with_trace) std::cout << " and " << (fs::path(outdir) / "trace.txt").string();
    std::cout << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& scenario_path, const std::vector<std::string>& params,
              const std::string& outdir) {
    std::vector<tcpa::SweepParameter> grid;
    for (const std::string& p : params) {
        auto eq = p.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("--param expects path=v1,v2,..., got '" + p + "'");
        tcpa::SweepParameter sp;
        sp.path = p.substr(0, eq);
        std::string rest = p.substr(eq + 1);
        std::string cur;
        for (char c : rest) {
            if (c == ',') {
                sp.values.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        sp.values.push_back(cur);
        grid.push_back(std::move(sp));
    }
    tcpa::SweepResult table = tcpa::sweep(slurp(scenario_path), grid);
    std::string csv = tcpa::sweep_to_csv(table);
    write_file(fs::path(outdir) / "sweep.csv", csv);
    std::cout << csv;
    std::cout << "wrote " << (fs::path(outdir) / "sweep.csv").string() << " (" << table.rows.size()
              << " runs)\n";
    return kExitOk;
}

int cmd_speedup_bench(const std::string& bench_file, bool strict, const std::string& outdir) {
    tcpa::SpeedupBenchResult bench = tcpa::run_speedup_bench(bench_file);
    std::cout << "size  kind          granted  distributed  centralized  speedup  in["
              << bench.envelope_lo << "," << bench.envelope_hi << "]\n";
    std::string csv = "size,kind,granted,distributed,centralized,speedup,in_envelope\n";
    for (const tcpa::SpeedupRow& r : bench.rows) {
        std::cout << std::left << std::setw(6) << r.size << std::setw(14) << r.kind
                  << std::setw(9) << r.granted << std::setw(13) << r.distributed << std::setw(13)
                  << r.centralized << std::setw(9) << std::fixed << std::setprecision(2)
                  << r.speedup << (r.in_envelope ? "yes" : "NO") << "\n";
        csv += std::to_string(r.size) + "," + r.kind + "," + std::to_string(r.granted) + "," +
               std::to_string(r.distributed) + "," + std::to_string(r.centralized) + "," +
               nlohmann::json(r.speedup).dump() + "," + (r.in_envelope ? "1" : "0") + "\n";
    }
    if (!outdir.empty()) write_file(fs::path(outdir) / "speedup.csv", csv);
    std::cout << "dedicated (fsm) rows " << (bench.fsm_in_envelope ? "all inside" : "OUTSIDE")
              << " the envelope\n";
    if (strict && !bench.fsm_in_envelope) return kExitThreshold;
    return kExitOk;
}

int cmd_energy_bench(const std::string& scenario_file, const std::vector<std::string>& groupings,
                     bool strict, const std::string& outdir, double min_savings,
                     double max_error) {
    tcpa::EnergyBenchResult bench = tcpa::run_energy_bench(scenario_file, groupings);
    std::cout << "grouping  savings  est_error  stalls  toggles(ictrl/pe)  mean_util\n";
    std::string csv =
        "grouping,e_total,e_baseline,savings,analytic,estimate_error,stall_cycles,"
        "toggles_ictrl,toggles_pe,utilization_mean\n";
    for (const tcpa::EnergyRow& r : bench.rows) {
        std::cout << std::left << std::setw(10) << r.grouping << std::setw(9) << std::fixed
                  << std::setprecision(3) << r.savings << std::setw(11) << r.error << std::setw(8)
                  << r.stall_cycles << std::setw(7) << r.toggles_ictrl << "/" << std::setw(11)
                  << r.toggles_pe << std::setprecision(3) << r.utilization_mean << "\n";
        csv += r.grouping + "," + nlohmann::json(r.e_total).dump() + "," +
               nlohmann::json(r.e_baseline).dump() + "," + nlohmann::json(r.savings).dump() + "," +
               nlohmann::json(r.analytic).dump() + "," + nlohmann::json(r.error).dump() + "," +
               std::to_string(r.stall_cycles) + "," + std::to_string(r.toggles_ictrl) + "," +
               std::to_string(r.toggles_pe) + "," + nlohmann::json(r.utilization_mean).dump() +
               "\n";
    }
    if (!outdir.empty()) write_file(fs::path(outdir) / "energy.csv", csv);
    bool ok = bench.fine_savings >= min_savings && bench.max_error <= max_error;
    std::cout << "fine-grained savings " << std::setprecision(3) << bench.fine_savings
              << " (threshold " << min_savings << "), worst model error " << bench.max_error
              << " (threshold " << max_error << ") -> " << (ok ? "ok" : "THRESHOLD MISS") << "\n";
    if (strict && !ok) return kExitThreshold;
    return kExitOk;
}

int cmd_ft_run(const std::string& bench_file, bool strict, const std::string& outdir) {
    nlohmann::json j = nlohmann::json::parse(slurp(bench_file));
    auto parse_loop = [](const nlohmann::json& lj) {
        tcpa::LoopSpec loop;
        for (long t : lj.at("taps").get<std::vector<long>>())
            loop.taps.push_back(static_cast<tcpa::Word>(t));
        for (long t : lj.at("input").get<std::vector<long>>())
            loop.input.push_back(static_cast<tcpa::Word>(t));
        loop.frame_size = lj.value("frame_size", loop.length());
        loop.buffer_size = lj.value("buffer_size", loop.frame_size);
        loop.validate();
        return loop;
    };
    tcpa::LoopSpec loop = parse_loop(j.at("loop"));
    tcpa::VoteCosts costs;
    if (j.contains("costs")) {
        costs.v_hw = j["costs"].value("v_hw", costs.v_hw);
        costs.v_sw = j["costs"].value("v_sw", costs.v_sw);
        costs.prop_hops = j["costs"].value("prop_hops", costs.prop_hops);
        costs.gather_hops = j["costs"].value("gather_hops", costs.gather_hops);
    }

    bool all_ok = true;
    std::string csv = "mode,scheme,runs,detected,corrected,silent,wrong_outputs,pass\n";
    std::cout << "single-fault sweep (" << loop.length() << " iterations x "
              << loop.tap_count() << " positions x 16 bits + output faults)\n";
    auto report = [&](tcpa::Redundancy mode, tcpa::SchemeKind scheme) {
        tcpa::FaultSweepStats st = tcpa::single_fault_sweep(mode, scheme, loop, costs);
        bool pass;
        if (mode == tcpa::Redundancy::TMR)
            pass = st.corrected == st.runs && st.silent == 0 && st.wrong_outputs == 0;
        else
            pass = st.detected == st.runs && st.silent == 0 && st.corrected == 0 &&
                   st.wrong_outputs == 0;
        all_ok = all_ok && pass;
        const char* mode_name = mode == tcpa::Redundancy::TMR ? "tmr" : "dmr";
        std::cout << "  " << mode_name << " " << std::left << std::setw(24)
                  << tcpa::scheme_name(scheme) << " runs=" << st.runs
                  << " detected=" << st.detected << " corrected=" << st.corrected
                  << " silent=" << st.silent << " wrong=" << st.wrong_outputs << " -> "
                  << (pass ? "pass" : "FAIL") << "\n";
        csv += std::string(mode_name) + "," + tcpa::scheme_name(scheme) + "," +
               std::to_string(st.runs) + "," + std::to_string(st.detected) + "," +
               std::to_string(st.corrected) + "," + std::to_string(st.silent) + "," +
               std::to_string(st.wrong_outputs) + "," + (pass ? "1" : "0") + "\n";
    };
    report(tcpa::Redundancy::TMR, tcpa::SchemeKind::IntermediateSWMiddle);
    report(tcpa::Redundancy::TMR, tcpa::SchemeKind::IntermediateHW);
    report(tcpa::Redundancy::TMR, tcpa::SchemeKind::IntermediateSWAll);
    report(tcpa::Redundancy::DMR, tcpa::SchemeKind::IntermediateHW);

    tcpa::LoopSpec small = parse_loop(j.at("two_fault").at("loop"));
    int bits = j.at("two_fault").value("bits", 4);
    tcpa::CoverageGapResult gap = tcpa::two_fault_coverage(small, costs, bits);
    bool gap_ok = gap.subset && gap.strict;
    all_ok = all_ok && gap_ok;
    std::cout << "two-fault coverage: " << gap.pairs << " pairs, silent under output-only voting "
              << gap.silent_output_only << ", under per-iteration voting "
              << gap.silent_intermediate << " -> " << (gap_ok ? "strict subset" : "FAIL") << "\n";
    if (gap.strict) std::cout << "  separating case: " << gap.witness << "\n";

    if (!outdir.empty()) write_file(fs::path(outdir) / "ft.csv", csv);
    if (strict && !all_ok) return kExitThreshold;
    return kExitOk;
}

int cmd_validate(const std::string& scenario_dir, int fuzz_runs) {
    std::vector<CheckResult> results;
    results.push_back(tcpa::check_latency_closed_form());

    tcpa::SpeedupBenchResult sp =
        tcpa::run_speedup_bench((fs::path(scenario_dir) / "speedup_bench.json").string());
    results.push_back({"speedup_envelope", sp.fsm_in_envelope,
                       std::to_string(sp.rows.size()) + " bench points"});

    tcpa::EnergyBenchResult en = tcpa::run_energy_bench(
        (fs::path(scenario_dir) / "energy_bench.json").string(), {"1", "4", "row", "array"});
    bool en_ok = en.fine_savings >= 0.70 && en.max_error <= 0.036;
    results.push_back({"energy_headline", en_ok,
                       "savings=" + nlohmann::json(en.fine_savings).dump() +
                           " max_error=" + nlohmann::json(en.max_error).dump()});

    results.push_back(tcpa::check_grouping_orderings(
        (fs::path(scenario_dir) / "grouping_mixed.json").string()));

    nlohmann::json fj =
        nlohmann::json::parse(slurp((fs::path(scenario_dir) / "ft_bench.json").string()));
    tcpa::LoopSpec loop;
    for (long t : fj["loop"]["taps"].get<std::vector<long>>())
        loop.taps.push_back(static_cast<tcpa::Word>(t));
    for (long t : fj["loop"]["input"].get<std::vector<long>>())
        loop.input.push_back(static_cast<tcpa::Word>(t));
    loop.frame_size = fj["loop"].value("frame_size", loop.length());
    loop.buffer_size = fj["loop"].value("buffer_size", loop.frame_size);
    bool ft_ok = true;
    for (tcpa::SchemeKind s : {tcpa::SchemeKind::IntermediateSWMiddle,
                               tcpa::SchemeKind::IntermediateHW,
                               tcpa::SchemeKind::IntermediateSWAll}) {
        tcpa::FaultSweepStats st =
            tcpa::single_fault_sweep(tcpa::Redundancy::TMR, s, loop, tcpa::VoteCosts{});
        ft_ok = ft_ok && st.corrected == st.runs && st.silent == 0 && st.wrong_outputs == 0;
    }
    tcpa::FaultSweepStats dmr = tcpa::single_fault_sweep(
        tcpa::Redundancy::DMR, tcpa::SchemeKind::IntermediateHW, loop, tcpa::VoteCosts{});
    ft_ok = ft_ok && dmr.detected == dmr.runs && dmr.silent == 0 && dmr.corrected == 0;
    results.push_back({"ft_single_fault_sweep", ft_ok, "exhaustive sweep"});

    tcpa::LoopSpec small;
    for (long t : fj["two_fault"]["loop"]["taps"].get<std::vector<long>>())
        small.taps.push_back(static_cast<tcpa::Word>(t));
    for (long t : fj["two_fault"]["loop"]["input"].get<std::vector<long>>())
        small.input.push_back(static_cast<tcpa::Word>(t));
    small.frame_size = fj["two_fault"]["loop"].value("frame_size", small.length());
    small.buffer_size = fj["two_fault"]["loop"].value("buffer_size", small.frame_size);
    tcpa::CoverageGapResult gap =
        tcpa::two_fault_coverage(small, tcpa::VoteCosts{}, fj["two_fault"].value("bits", 4));
    results.push_back({"ft_coverage_gap", gap.subset && gap.strict,
                       std::to_string(gap.pairs) + " pairs"});

    tcpa::FuzzReport fuzz = tcpa::fuzz_protocol(fuzz_runs, 20240901);
    results.push_back({"protocol_fuzz", fuzz.failures == 0,
                       std::to_string(fuzz.runs) + " randomized scenarios, " +
                           std::to_string(fuzz.apps_executed) + " apps, " +
                           std::to_string(fuzz.claims_granted) + " PEs claimed" +
                           (fuzz.failures ? "; first failure: " + fuzz.first_failure : "")});

    results.push_back(
        tcpa::check_determinism((fs::path(scenario_dir) / "demo.json").string()));

    bool all = true;
    for (const CheckResult& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << std::left << std::setw(24) << r.name
                  << " " << r.detail << "\n";
        all = all && r.pass;
    }
    return all ? kExitOk : kExitThreshold;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cycle-stepped simulator for invasive tightly coupled processor arrays"};
    app.require_subcommand(1);

    std::string scenario_path;
    std::string outdir = std::getenv("TCPASIM_OUT") ? std::getenv("TCPASIM_OUT") : "out";
    std::vector<std::string> sets;
    std::optional<long> seed;
    bool with_trace = false, strict = false;

    CLI::App* simulate = app.add_subcommand("simulate", "run one scenario file");
    simulate->add_option("scenario", scenario_path, "scenario file (JSON)")->required();
    simulate->add_option("-o,--out", outdir, "output directory");
    simulate->add_flag("--trace", with_trace, "also write the cycle trace");
    simulate->add_option("--set", sets, "override a scenario field (dotted.path=value)");
    long seed_val = 0;
    CLI::Option* seed_opt = simulate->add_option("--seed", seed_val, "override rng_seed");

    std::vector<std::string> params;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "run a parameter grid over a scenario");
    sweep_cmd->add_option("scenario", scenario_path, "scenario file (JSON)")->required();
    sweep_cmd->add_option("--param", params, "grid parameter (dotted.path=v1,v2,...)")
        ->required();
    sweep_cmd->add_option("-o,--out", outdir, "output directory");

    std::string bench_file;
    CLI::App* speedup = app.add_subcommand(
        "speedup-bench", "distributed vs centralized resource-management latency");
    speedup->add_option("--bench", bench_file, "bench workload file");
    speedup->add_flag("--strict", strict, "nonzero exit on envelope violations");
    speedup->add_option("-o,--out", outdir, "output directory");

    std::string groupings_csv = "1,4,row,array";
    double min_savings = 0.70, max_error = 0.036;
    CLI::App* energy = app.add_subcommand(
        "energy-bench", "power-gating savings and analytic-model error across domain groupings");
    energy->add_option("--scenario", bench_file, "energy workload scenario");
    energy->add_option("--groupings", groupings_csv, "iCtrl domain sizes to sweep");
    energy->add_option("--min-savings", min_savings, "savings threshold for fine domains");
    energy->add_option("--max-error", max_error, "analytic-model error threshold");
    energy->add_flag("--strict", strict, "nonzero exit on threshold misses");
    energy->add_option("-o,--out", outdir, "output directory");

    CLI::App* ft = app.add_subcommand(
        "ft-run", "exhaustive fault sweeps and the voting-scheme coverage comparison");
    ft->add_option("--bench", bench_file, "fault-tolerance bench file");
    ft->add_flag("--strict", strict, "nonzero exit on coverage misses");
    ft->add_option("-o,--out", outdir, "output directory");

    std::string scenario_dir = default_scenario_dir();
    int fuzz_runs = 10000;
    CLI::App* validate = app.add_subcommand("validate", "run the full self-check suite");
    validate->add_option("--scenario-dir", scenario_dir, "directory with the shipped scenarios");
    validate->add_option("--fuzz", fuzz_runs, "number of randomized protocol scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (simulate->parsed()) {
            if (*seed_opt) seed = seed_val;
            return cmd_simulate(scenario_path, outdir, with_trace, sets, seed);
        }
        if (sweep_cmd->parsed()) return cmd_sweep(scenario_path, params, outdir);
        if (speedup->parsed()) {
            if (bench_file.empty())
                bench_file = (fs::path(scenario_dir) / "speedup_bench.json").string();
            return cmd_speedup_bench(bench_file, strict, outdir);
        }
        if (energy->parsed()) {
            if (bench_file.empty())
                bench_file = (fs::path(scenario_dir) / "energy_bench.json").string();
            std::vector<std::string> groupings;
            std::string cur;
            for (char c : groupings_csv) {
                if (c == ',') {
                    groupings.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            groupings.push_back(cur);
            return cmd_energy_bench(bench_file, groupings, strict, outdir, min_savings,
                                    max_error);
        }
        if (ft->parsed()) {
            if (bench_file.empty())
                bench_file = (fs::path(scenario_dir) / "ft_bench.json").string();
            return cmd_ft_run(bench_file, strict, outdir);
        }
        if (validate->parsed()) return cmd_validate(scenario_dir, fuzz_runs);
    } catch (const tcpa::ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return kExitThreshold;
    } catch (const tcpa::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return kExitThreshold;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitThreshold;
    }
    return kExitUsage;
}
