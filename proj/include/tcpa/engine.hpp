// The cycle loop: fires scenario events, steps the protocol, applies power
// transitions, advances fault-tolerant execution, accumulates energy, and
// produces the trace and metrics.
#pragma once

#include <string>
#include <vector>

#include "tcpa/scenario.hpp"

namespace tcpa {

struct AppMetrics {
    AppId app_id = 0;
    std::string status;  // ok | rejected | failed | aborted
    int requested = 0;
    int granted = 0;  // across all replica claims
    bool complete = false;
    Coord seed{};
    std::vector<Coord> pes;
    Cycle invade_latency = 0;
    Cycle claim_latency = 0;
    Cycle total_latency = 0;  // request to last claim confirmation
    Cycle infect_cycles = 0;
    Cycle retreat_latency = -1;  // -1: never retreated
    long centralized_baseline = 0;
    double speedup_vs_centralized = 0;
    std::optional<FTStats> ft;
    std::vector<Word> ft_outputs;
};

struct Metrics {
    Cycle total_cycles = 0;
    std::vector<AppMetrics> apps;  // ascending app id
    EnergyReport energy;
    std::vector<double> utilization;  // fraction of PEs powered on, per cycle
    double utilization_mean = 0;
    double utilization_peak = 0;
};

struct RunResult {
    Metrics metrics;
    std::vector<std::string> trace;  // one record per line, cycle-prefixed
};

RunResult run(const Scenario& scenario);

/// Stable machine-readable encodings; reruns of the same scenario produce
/// byte-identical output.
std::string metrics_to_json(const Metrics& m);
std::string trace_to_text(const std::vector<std::string>& trace);

struct SweepParameter {
    std::string path;                 // dotted override path
    std::vector<std::string> values;  // JSON-encoded values
};

struct SweepRow {
    int index = 0;
    std::vector<std::string> values;
    Metrics metrics;
};

struct SweepResult {
    std::vector<std::string> paths;
    std::vector<SweepRow> rows;
};

/// One run per grid point (cartesian product, row-major over the parameter
/// list); each run's rng_seed is derived from the base seed and the index.
SweepResult sweep(const std::string& scenario_text, const std::vector<SweepParameter>& grid);

std::string sweep_to_csv(const SweepResult& table);

}  // namespace tcpa
