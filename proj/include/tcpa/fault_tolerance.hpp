// On-demand DMR/TMR for systolic FIR kernels: replicated claims, voting
// schemes, single-bit fault injection, halt/rewind recovery, and
// quarantine-based migration.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tcpa/array.hpp"
#include "tcpa/protocol.hpp"

namespace tcpa {

using Word = std::uint16_t;  // 16-bit datapath words, wrap-around arithmetic

/// A T-tap FIR kernel mapped onto a linear chain of T PEs.
/// Reference semantics: y[i] = sum_{j<T} taps[j] * x[i-j], x[k<0] = 0.
struct LoopSpec {
    std::vector<Word> taps;
    std::vector<Word> input;
    int frame_size = 0;
    int buffer_size = 0;

    int tap_count() const { return static_cast<int>(taps.size()); }
    int length() const { return static_cast<int>(input.size()); }
    void validate() const;
    /// Direct (non-systolic) computation; the ground truth for fault runs.
    std::vector<Word> golden() const;
};

enum class SchemeKind {
    OutputHW,              // hardware voter on border-PE outputs only
    IntermediateSWMiddle,  // software voting on the middle replica, voted
                           // values propagated back to the others
    IntermediateHW,        // hardware voters in every middle-replica PE
    IntermediateSWAll,     // software voting on all replicas
};

const char* scheme_name(SchemeKind s);

struct VoteCosts {
    int v_hw = 1;         // hardware vote, cycles
    int v_sw = 8;         // software vote routine, cycles
    int prop_hops = 1;    // middle-row write-back distance (SW middle)
    int gather_hops = 2;  // farthest replica-row separation (SW all)

    void validate() const;  // v_hw <= v_sw
};

enum class VotedVars { OutputsOnly, OutputsAndPartials };

enum class FaultTarget { PartialSum, Output };

/// A transient single-bit flip in a named register at a named iteration.
/// Duplicate entries model an intermittent fault: each entry fires once,
/// replays consume the next copy.
struct FaultEvent {
    int iteration = 0;
    int replica = 0;
    int pe_offset = 0;
    FaultTarget target = FaultTarget::PartialSum;
    int bit = 0;
};

enum class RewindTarget { PreviousIteration, BufferStart, FrameStart };

const char* rewind_target_name(RewindTarget t);

struct RecoveryPolicy {
    RewindTarget rewind = RewindTarget::BufferStart;
    int migrate_threshold = 3;

    void validate() const;
};

struct ReplicationPlan {
    Redundancy mode = Redundancy::TMR;
    std::vector<Claim> replicas;  // pairwise-disjoint Linear{T} claims
    SchemeKind scheme = SchemeKind::IntermediateHW;
    int vote_every = 1;
    VotedVars voted = VotedVars::OutputsAndPartials;
    VoteCosts costs;
    RecoveryPolicy policy;
    std::vector<Coord> voter_pes;
    bool rewind_fallback = false;  // PreviousIteration rejected at plan time

    int replica_count() const { return mode == Redundancy::TMR ? 3 : 2; }
    /// Index of the replica that hosts voters / drives unvoted emission.
    int reference_replica() const { return mode == Redundancy::TMR ? 1 : 0; }
    void validate(const LoopSpec& loop) const;
};

/// Default voted-variable selection for a scheme: the output-only scheme
/// checks border outputs, the intermediate schemes check partials too.
VotedVars default_voted_vars(SchemeKind s);

/// Places voter functional units for the plan's scheme (border PE of the
/// reference replica for output voting, its whole chain for intermediate
/// hardware voting, none for software schemes).
void place_voters(ReplicationPlan& plan);

struct VoteOutcome {
    enum Kind { Match, Corrected, Mismatch } kind = Match;
    Word value = 0;    // agreed or majority value (Match/Corrected)
    int deviant = -1;  // outvoted replica (Corrected only)
};

/// Majority vote (TMR) or comparison (DMR) over one register across
/// replicas. Throws on wrong arity.
VoteOutcome vote(std::span<const Word> values, Redundancy mode);

/// Iteration schedule of the replicated kernel: which iterations vote,
/// what gets voted, and what each vote point costs.
struct ReplicatedProgram {
    LoopSpec loop;
    int replicas = 3;
    Redundancy mode = Redundancy::TMR;
    SchemeKind scheme = SchemeKind::IntermediateHW;
    int vote_every = 1;
    VotedVars voted = VotedVars::OutputsAndPartials;
    VoteCosts costs;

    bool vote_due(int iteration) const { return (iteration + 1) % vote_every == 0; }
    int vote_points() const { return loop.length() / vote_every; }
    int votes_per_point() const {
        return voted == VotedVars::OutputsAndPartials ? loop.tap_count() + 1 : 1;
    }
    long output_votes() const { return vote_points(); }
    long partial_votes() const {
        return voted == VotedVars::OutputsAndPartials
                   ? static_cast<long>(vote_points()) * loop.tap_count()
                   : 0;
    }
    /// Added latency per due-vote iteration.
    int vote_overhead_cycles() const;
    long nominal_protected_cycles() const {
        return loop.length() + static_cast<long>(vote_points()) * vote_overhead_cycles();
    }
};

ReplicatedProgram replicate_loop(const LoopSpec& loop, const ReplicationPlan& plan);

struct FTStats {
    long injected = 0;
    long detected = 0;   // non-Match vote outcomes
    long corrected = 0;  // majority corrections
    long silent = 0;     // final outputs differing from golden, undetected
    long halts = 0;
    long migrations = 0;
    std::map<RewindTarget, long> rewinds;
    Cycle execution_cycles = 0;
    double timing_overhead = 0;  // vs the unprotected kernel
    int voter_fu_count = 0;
    int extra_pes = 0;
    bool outputs_valid = true;
};

struct FTResult {
    std::vector<Word> outputs;
    FTStats stats;
};

struct PlanOutcome {
    bool ok = false;
    std::string error;
    ReplicationPlan plan;
};

/// Claims the replica regions through the invasion protocol (2 for DMR,
/// 3 for TMR, Linear{T} each) and places voters. All-or-nothing: a partial
/// replica claim rolls back everything already claimed.
PlanOutcome plan_replication(ProtocolEngine& protocol, const InvadeRequest& request,
                             const LoopSpec& loop, SchemeKind scheme, VotedVars voted,
                             int vote_every, VoteCosts costs, RecoveryPolicy policy);

struct OverheadReport {
    double timing_overhead_fraction = 0;
    int voter_fu_count = 0;
    int extra_pes = 0;
};

OverheadReport overhead_report(const ReplicatedProgram& program, const ReplicationPlan& plan);

/// Cycle-stepped executor for the replicated kernel. Call step() once per
/// simulation cycle; it commits an iteration whenever the iteration's cycle
/// budget (1 + vote overhead) has elapsed, injecting due faults, voting,
/// and applying halt/rewind/migrate recovery.
class FTExecutor {
public:
    FTExecutor(ArrayState& array, ProtocolEngine& protocol, ReplicationPlan plan,
               ReplicatedProgram program, std::vector<FaultEvent> faults,
               int program_id, PowerHook* power = nullptr);
    ~FTExecutor();

    FTExecutor(const FTExecutor&) = delete;
    FTExecutor& operator=(const FTExecutor&) = delete;

    void add_faults(const std::vector<FaultEvent>& faults);
    /// Advances one cycle; returns true while still running.
    bool step();
    bool finished() const;
    /// Abandon execution (external retreat). Outputs are marked invalid.
    void cancel();
    FTResult result() const;
    const ReplicationPlan& plan() const;
    std::vector<std::string> drain_trace();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// One-shot driver: plans are executed to completion on the protocol
/// engine's clock. Faults are applied as their iterations execute.
FTResult execute_with_faults(ArrayState& array, ProtocolEngine& protocol,
                             const ReplicationPlan& plan, const ReplicatedProgram& program,
                             std::vector<FaultEvent> faults, int program_id = 0);

}  // namespace tcpa
