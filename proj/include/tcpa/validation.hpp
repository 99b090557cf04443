// Headless self-check suite: protocol latency closed forms, speedup and
// energy benchmarks, fault-sweep coverage, randomized protocol fuzzing,
// and reproducibility checks. Used by the `validate` subcommand and the
// acceptance test suite.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcpa/engine.hpp"

namespace tcpa {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Unobstructed Linear{n} latency must equal
/// seed_select_cycles + 2*hop_latency*(n-1) for n in 1..16, both controller
/// kinds, exactly. Runs with power switching disabled.
CheckResult check_latency_closed_form();

struct SpeedupRow {
    int size = 0;
    std::string kind;
    int granted = 0;
    Cycle distributed = 0;
    long centralized = 0;
    double speedup = 0;
    bool in_envelope = false;
};

struct SpeedupBenchResult {
    std::vector<SpeedupRow> rows;
    bool fsm_in_envelope = false;  // strict gate: the dedicated-controller rows
    double envelope_lo = 2.6;
    double envelope_hi = 45.0;
};

/// Distributed invasion latency vs the centralized software manager over a
/// set of claim sizes and both controller kinds. Reads the workload table
/// from a bench file (sizes, kinds, calibration constants).
SpeedupBenchResult run_speedup_bench(const std::string& bench_file);

struct EnergyRow {
    std::string grouping;
    double e_total = 0;
    double e_baseline = 0;
    double savings = 0;
    double analytic = 0;
    double error = 0;
    long stall_cycles = 0;
    long toggles_ictrl = 0;
    long toggles_pe = 0;
    double utilization_mean = 0;
};

struct EnergyBenchResult {
    std::vector<EnergyRow> rows;
    double fine_savings = 0;  // savings with single-iCtrl domains
    double max_error = 0;     // worst analytic-model error over the grid
};

/// Runs the scenario once per iCtrl-domain grouping and reports savings vs
/// the always-on baseline plus the analytic-model error.
EnergyBenchResult run_energy_bench(const std::string& scenario_file,
                                   const std::vector<std::string>& groupings);

struct FaultSweepStats {
    long runs = 0;
    long detected = 0;       // runs with at least one detection
    long corrected = 0;      // runs with at least one correction
    long vote_corrections = 0;
    long silent = 0;         // silent-corruption words across all runs
    long wrong_outputs = 0;  // runs whose final outputs differ from golden
};

/// Exhaustive single-bit fault sweep (every iteration x chain position x
/// bit on partial sums, every iteration x bit on the border output) against
/// the golden FIR oracle.
FaultSweepStats single_fault_sweep(Redundancy mode, SchemeKind scheme, const LoopSpec& loop,
                                   VoteCosts costs);

struct CoverageGapResult {
    long pairs = 0;
    long silent_output_only = 0;    // pairs silent under output-only voting
    long silent_intermediate = 0;   // pairs silent under per-iteration voting
    bool subset = false;            // intermediate silent set within output-only set
    bool strict = false;            // at least one pair separates the schemes
    std::string witness;
};

/// Brute force over all two-fault combinations on a small kernel comparing
/// output-only hardware voting with per-iteration intermediate voting.
CoverageGapResult two_fault_coverage(const LoopSpec& loop, VoteCosts costs, int bits);

struct FuzzReport {
    int runs = 0;
    int failures = 0;
    long claims_granted = 0;  // total PEs captured across all runs
    long apps_executed = 0;
    std::string first_failure;
};

/// Randomized multi-application protocol scenarios: checks termination
/// bounds, ownership disjointness, claim-shape soundness, confirmation
/// conservation, and retreat completeness.
FuzzReport fuzz_protocol(int count, std::uint64_t seed);

/// Runs the scenario twice and compares trace and metrics byte for byte.
CheckResult check_determinism(const std::string& scenario_file);

/// Grouping trade-off on a mixed workload: energy ordering with free
/// switching, toggle-count ordering with the default switching costs.
CheckResult check_grouping_orderings(const std::string& scenario_file);

}  // namespace tcpa
