// Distributed invade/infect/retreat protocol, stepped cycle by cycle.
//
// Every in-flight operation (invasion wave, claim-confirmation wave, retreat
// wave, infect pipeline) advances one hop per hop_latency cycles. Outcomes
// are reported as Claim records plus a deterministic ProtocolEvent stream.
#pragma once

#include <map>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "tcpa/array.hpp"

namespace tcpa {

class StaleClaimError : public std::runtime_error {
public:
    explicit StaleClaimError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Redundancy { None, DMR, TMR };

struct LinearShape {
    int count = 1;
};

struct RectShape {
    int width = 1;
    int height = 1;
};

using Strategy = std::variant<LinearShape, RectShape>;

int requested_count(const Strategy& s);
bool is_linear(const Strategy& s);

struct InvadeRequest {
    AppId app_id = 0;
    Strategy strategy = LinearShape{1};
    Redundancy reliability = Redundancy::None;
    Cycle issue_cycle = 0;

    void validate() const;  // throws ConfigError
};

struct ProtocolParams {
    int seed_select_cycles = 2;       // control-processor overhead per invade
    int config_load_cycles_per_pe = 1;
    long centralized_fixed = 100;     // software-manager cost model
    long centralized_per_pe = 20;
};

enum class EventKind {
    SeedSelected,
    InvadeSignal,
    ClaimConfirm,
    RetreatSignal,
    RetreatConfirm,
    InfectLoaded,
};

const char* event_kind_name(EventKind k);

struct ProtocolEvent {
    Cycle cycle = 0;
    EventKind kind = EventKind::InvadeSignal;
    std::optional<Coord> from;  // absent for control-processor endpoints
    Coord to;
    AppId app = 0;
};

/// The set of PEs captured by one invasion, reported back by the reverse
/// confirmation wave.
struct Claim {
    AppId app = 0;
    int claim_id = 0;
    Coord seed;
    std::vector<Coord> pes;     // invasion order; pes[0] == seed
    int requested = 0;
    int granted = 0;            // == pes.size()
    Cycle invade_latency = 0;   // issue -> last invade-signal arrival
    Cycle claim_latency = 0;    // last arrival -> confirmation at the seed
    bool complete = false;      // granted == requested

    Cycle total_latency() const { return invade_latency + claim_latency; }
};

/// Power-gating integration point. The default implementation models an
/// always-on array: every component ready, no stalls.
class PowerHook {
public:
    virtual ~PowerHook() = default;
    virtual bool ictrl_ready(Coord) const { return true; }
    virtual bool pe_ready(Coord) const { return true; }
    virtual void on_protocol_event(const ProtocolEvent&) {}
    virtual void on_cycle(Cycle) {}  // switching-timer advance hook
};

/// Modeled cost of a purely software, centralized resource manager scanning
/// and reserving `granted` PEs on the control processor.
long centralized_baseline_cycles(const ProtocolParams& params, int granted);

class ProtocolEngine {
public:
    ProtocolEngine(ArrayState& array, ProtocolParams params, PowerHook* power = nullptr);
    ~ProtocolEngine();

    ProtocolEngine(const ProtocolEngine&) = delete;
    ProtocolEngine& operator=(const ProtocolEngine&) = delete;

    Cycle now() const;
    bool quiescent() const;
    long stall_cycles() const;  // cycles waves/loads spent waiting on power

    // --- stepped interface -------------------------------------------------
    // Advances the engine by one cycle (the engine's own clock) and returns
    // the events that fired. The simulation loop calls this once per cycle.
    std::vector<ProtocolEvent> step();

    /// Registers an invasion; the seed is selected seed_select_cycles later.
    int start_invade(const InvadeRequest& request);
    /// Starts the retreat wave over the claim's invasion tree.
    int start_retreat(const Claim& claim);
    /// Starts the pipelined configuration load over the claim.
    int start_infect(const Claim& claim, int program_id);

    struct InvadeOutcome {
        bool no_seed = false;  // rejected: no available seed candidate
        Claim claim;
        Cycle done_cycle = 0;
    };
    std::optional<InvadeOutcome> take_invade_outcome(int handle);
    std::optional<Cycle> take_retreat_latency(int handle);
    std::optional<Cycle> take_infect_cycles(int handle);

    // --- one-shot drivers --------------------------------------------------
    // Each runs the engine's clock forward until the operation (and any
    // cleanup it spawned) finishes. Outstanding operations advance too.

    /// Selects a seed, runs the wave to quiescence and returns the claim;
    /// nullopt when no seed candidate is available (array unchanged).
    std::optional<Claim> invade(const InvadeRequest& request);
    Cycle retreat(const Claim& claim);
    Cycle infect(const Claim& claim, int program_id);

    /// Dry-run availability probe: how many PEs the strategy would capture
    /// starting from `seed` on the current occupancy, without mutating state.
    int probe(Coord seed, const Strategy& strategy) const;

    /// Best available seed candidate for the request (greedy probe, ties by
    /// ascending (row, col)); nullopt when every candidate is unavailable.
    std::optional<Coord> select_seed(const InvadeRequest& request) const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tcpa
