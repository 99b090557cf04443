#include "tcpa/fault_tolerance.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <stdexcept>

namespace tcpa {

void LoopSpec::validate() const {
    if (taps.empty()) throw ConfigError("loop.taps: at least one tap is required");
    if (length() < tap_count())
        throw ConfigError("loop.input: input length must be >= tap count");
    if (frame_size < 1) throw ConfigError("loop.frame_size: must be >= 1");
    if (buffer_size < 1) throw ConfigError("loop.buffer_size: must be >= 1");
    if (frame_size % buffer_size != 0)
        throw ConfigError("loop.buffer_size: must divide frame_size");
    if (length() % frame_size != 0)
        throw ConfigError("loop.frame_size: must divide input length");
}

std::vector<Word> LoopSpec::golden() const {
    std::vector<Word> y(static_cast<std::size_t>(length()));
    for (int i = 0; i < length(); ++i) {
        Word acc = 0;
        for (int j = 0; j < tap_count() && j <= i; ++j)
            acc = static_cast<Word>(acc + static_cast<Word>(taps[static_cast<std::size_t>(j)] *
                                                            input[static_cast<std::size_t>(i - j)]));
        y[static_cast<std::size_t>(i)] = acc;
    }
    return y;
}

const char* scheme_name(SchemeKind s) {
    switch (s) {
        case SchemeKind::OutputHW:             return "output_hw";
        case SchemeKind::IntermediateSWMiddle: return "intermediate_sw_middle";
        case SchemeKind::IntermediateHW:       return "intermediate_hw";
        default:                               return "intermediate_sw_all";
    }
}

const char* rewind_target_name(RewindTarget t) {
    switch (t) {
        case RewindTarget::PreviousIteration: return "previous_iteration";
        case RewindTarget::BufferStart:       return "buffer_start";
        default:                              return "frame_start";
    }
}

void VoteCosts::validate() const {
    if (v_hw < 0 || v_sw < 0 || prop_hops < 0 || gather_hops < 0)
        throw ConfigError("ft.costs: vote costs must be non-negative");
    if (v_hw > v_sw)
        throw ConfigError("ft.costs: v_hw must not exceed v_sw");
}

void RecoveryPolicy::validate() const {
    if (migrate_threshold < 1)
        throw ConfigError("ft.policy.migrate_threshold: must be >= 1");
}

VotedVars default_voted_vars(SchemeKind s) {
    return s == SchemeKind::OutputHW ? VotedVars::OutputsOnly : VotedVars::OutputsAndPartials;
}

void place_voters(ReplicationPlan& plan) {
    plan.voter_pes.clear();
    const Claim& ref = plan.replicas[static_cast<std::size_t>(plan.reference_replica())];
    if (plan.scheme == SchemeKind::OutputHW)
        plan.voter_pes.push_back(ref.pes.back());
    else if (plan.scheme == SchemeKind::IntermediateHW)
        plan.voter_pes = ref.pes;
}

void ReplicationPlan::validate(const LoopSpec& loop) const {
    loop.validate();
    costs.validate();
    policy.validate();
    if (vote_every < 1) throw ConfigError("ft.vote_every: must be >= 1");
    if (static_cast<int>(replicas.size()) != replica_count())
        throw ConfigError("plan.replicas: replica count does not match redundancy mode");
    std::set<Coord> seen;
    for (const Claim& c : replicas) {
        if (c.granted != loop.tap_count())
            throw ConfigError("plan.replicas: every replica must claim exactly one PE per tap");
        for (Coord p : c.pes)
            if (!seen.insert(p).second)
                throw ConfigError("plan.replicas: replica claims overlap at " + to_string(p));
    }
    bool hw = scheme == SchemeKind::OutputHW || scheme == SchemeKind::IntermediateHW;
    if (hw && voter_pes.empty())
        throw ConfigError("plan.voter_pes: hardware voting scheme requires voter FUs");
}

VoteOutcome vote(std::span<const Word> values, Redundancy mode) {
    if (mode == Redundancy::TMR) {
        if (values.size() != 3)
            throw std::invalid_argument("vote: TMR expects 3 values, got " +
                                        std::to_string(values.size()));
        if (values[0] == values[1] && values[1] == values[2])
            return {VoteOutcome::Match, values[0], -1};
        if (values[0] == values[1]) return {VoteOutcome::Corrected, values[0], 2};
        if (values[0] == values[2]) return {VoteOutcome::Corrected, values[0], 1};
        if (values[1] == values[2]) return {VoteOutcome::Corrected, values[1], 0};
        return {VoteOutcome::Mismatch, 0, -1};
    }
    if (mode == Redundancy::DMR) {
        if (values.size() != 2)
            throw std::invalid_argument("vote: DMR expects 2 values, got " +
                                        std::to_string(values.size()));
        if (values[0] == values[1]) return {VoteOutcome::Match, values[0], -1};
        return {VoteOutcome::Mismatch, 0, -1};
    }
    throw std::invalid_argument("vote: redundancy mode must be DMR or TMR");
}

int ReplicatedProgram::vote_overhead_cycles() const {
    switch (scheme) {
        case SchemeKind::OutputHW:             return 0;  // overlapped with the beat
        case SchemeKind::IntermediateHW:       return costs.v_hw;
        case SchemeKind::IntermediateSWMiddle: return costs.v_sw + costs.prop_hops;
        default:                               return costs.v_sw + costs.gather_hops;
    }
}

ReplicatedProgram replicate_loop(const LoopSpec& loop, const ReplicationPlan& plan) {
    plan.validate(loop);
    ReplicatedProgram prog;
    prog.loop = loop;
    prog.replicas = plan.replica_count();
    prog.mode = plan.mode;
    prog.scheme = plan.scheme;
    prog.vote_every = plan.vote_every;
    prog.voted = plan.voted;
    prog.costs = plan.costs;
    return prog;
}

PlanOutcome plan_replication(ProtocolEngine& protocol, const InvadeRequest& request,
                             const LoopSpec& loop, SchemeKind scheme, VotedVars voted,
                             int vote_every, VoteCosts costs, RecoveryPolicy policy) {
    loop.validate();
    costs.validate();
    policy.validate();
    if (request.reliability == Redundancy::None)
        throw ConfigError("plan_replication: request must ask for DMR or TMR");

    PlanOutcome out;
    ReplicationPlan& plan = out.plan;
    plan.mode = request.reliability;
    plan.scheme = scheme;
    plan.vote_every = vote_every;
    plan.voted = voted;
    plan.costs = costs;
    plan.policy = policy;
    if (plan.policy.rewind == RewindTarget::PreviousIteration && loop.tap_count() > 1) {
        // partial-sum lifetimes span the whole chain; single-iteration
        // rewind cannot rebuild them
        plan.policy.rewind = RewindTarget::BufferStart;
        plan.rewind_fallback = true;
    }

    const int T = loop.tap_count();
    auto rollback = [&]() {
        for (const Claim& c : plan.replicas) protocol.retreat(c);
        plan.replicas.clear();
    };
    for (int r = 0; r < plan.replica_count(); ++r) {
        InvadeRequest rr;
        rr.app_id = request.app_id;
        rr.strategy = LinearShape{T};
        rr.reliability = request.reliability;
        rr.issue_cycle = protocol.now();
        std::optional<Claim> claim = protocol.invade(rr);
        int granted = claim ? claim->granted : 0;
        if (granted > 0 && granted < T) {
            protocol.retreat(*claim);
            granted = 0;
        }
        if (granted != T) {
            rollback();
            out.error = "insufficient resources: replica " + std::to_string(r) +
                        " could not claim " + std::to_string(T) + " PEs";
            return out;
        }
        plan.replicas.push_back(*claim);
    }
    place_voters(plan);
    plan.validate(loop);
    out.ok = true;
    return out;
}

OverheadReport overhead_report(const ReplicatedProgram& program, const ReplicationPlan& plan) {
    OverheadReport r;
    long n = program.loop.length();
    r.timing_overhead_fraction =
        static_cast<double>(program.nominal_protected_cycles() - n) / static_cast<double>(n);
    r.voter_fu_count = static_cast<int>(plan.voter_pes.size());
    r.extra_pes = (plan.replica_count() - 1) * program.loop.tap_count();
    return r;
}

// ---- executor ---------------------------------------------------------------

struct FTExecutor::Impl {
    enum class St {
        WaitPower,
        Running,
        MigrateRetreat,
        MigrateInvade,
        MigrateInfect,
        MigrateRollback,
        Done,
        Aborted,
    };

    struct PendingFault {
        FaultEvent ev;
        bool consumed = false;
    };

    ArrayState& array;
    ProtocolEngine& proto;
    ReplicationPlan plan;
    ReplicatedProgram prog;
    std::vector<PendingFault> faults;
    int program_id;
    PowerHook* power;
    AppId app;

    int T, N, R;
    std::vector<Word> tap_rev;           // tap_rev[k] = taps[T-1-k]
    std::vector<std::vector<Word>> p;    // partial-sum registers per replica
    std::vector<Word> out_vals;          // border output register per replica
    std::vector<Word> final_out;
    int iter = 0;
    int countdown = 0;
    St st = St::WaitPower;

    std::map<int, int> mismatch_count;   // consecutive mismatches per iteration
    int corr_streak = 0;                 // consecutive iterations blaming one replica
    int corr_replica = -1;
    int resume_iter = 0;

    std::vector<int> retreat_handles;
    std::vector<bool> retreat_done;
    std::vector<Coord> quarantine_set;
    int invade_handle = -1;
    std::vector<Claim> new_claims;
    std::vector<int> infect_handles;
    std::vector<bool> infect_done;

    FTStats stats;
    std::vector<std::string> trace;
    bool finalized = false;

    Impl(ArrayState& a, ProtocolEngine& pr, ReplicationPlan pl, ReplicatedProgram pg,
         std::vector<FaultEvent> f, int prog_id, PowerHook* pw)
        : array(a), proto(pr), plan(std::move(pl)), prog(std::move(pg)),
          program_id(prog_id), power(pw) {
        app = plan.replicas.front().app;
        T = prog.loop.tap_count();
        N = prog.loop.length();
        R = plan.replica_count();
        tap_rev.resize(static_cast<std::size_t>(T));
        for (int k = 0; k < T; ++k)
            tap_rev[static_cast<std::size_t>(k)] = prog.loop.taps[static_cast<std::size_t>(T - 1 - k)];
        p.assign(static_cast<std::size_t>(R), std::vector<Word>(static_cast<std::size_t>(T), 0));
        out_vals.assign(static_cast<std::size_t>(R), 0);
        final_out.assign(static_cast<std::size_t>(N), 0);
        add(f);
        if (!power) st = St::Running;
        countdown = iteration_cost(0);
    }

    void add(const std::vector<FaultEvent>& evs) {
        for (const FaultEvent& e : evs) {
            if (e.iteration < 0 || e.iteration >= N || e.replica < 0 || e.replica >= R ||
                e.pe_offset < 0 || e.pe_offset >= T || e.bit < 0 || e.bit > 15)
                throw ConfigError("fault event out of range for the replication plan");
            faults.push_back({e, false});
        }
    }

    int iteration_cost(int i) const {
        return 1 + (prog.vote_due(i) ? prog.vote_overhead_cycles() : 0);
    }

    void note(const std::string& s) { trace.push_back(s); }

    bool power_ready() const {
        if (!power) return true;
        for (const Claim& c : plan.replicas)
            for (Coord pe : c.pes)
                if (!power->pe_ready(pe)) return false;
        return true;
    }

    // partial-register state entering iteration `target`, rebuilt from the
    // (protected) input buffers
    void reset_pipeline(int target) {
        for (int k = 0; k < T; ++k) {
            Word v = 0;
            for (int m = 0; m <= k; ++m) {
                int idx = (target - 1) - (k - m);
                if (idx >= 0)
                    v = static_cast<Word>(
                        v + static_cast<Word>(tap_rev[static_cast<std::size_t>(m)] *
                                              prog.loop.input[static_cast<std::size_t>(idx)]));
            }
            for (int r = 0; r < R; ++r) p[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = v;
        }
        std::fill(out_vals.begin(), out_vals.end(), 0);
    }

    int rewind_target_of(int i) const {
        switch (plan.policy.rewind) {
            case RewindTarget::PreviousIteration: return std::max(0, i - 1);
            case RewindTarget::BufferStart: return (i / prog.loop.buffer_size) * prog.loop.buffer_size;
            default: return (i / prog.loop.frame_size) * prog.loop.frame_size;
        }
    }

    bool step() {
        if (st == St::Done || st == St::Aborted) return false;
        if (st == St::WaitPower) {
            if (!power_ready()) {
                stats.execution_cycles++;
                return true;
            }
            st = St::Running;
            countdown = iteration_cost(iter);
        }
        stats.execution_cycles++;
        switch (st) {
            case St::Running:
                if (--countdown > 0) return true;
                commit_iteration();
                return st != St::Done && st != St::Aborted;
            case St::MigrateRetreat:   step_migrate_retreat(); return true;
            case St::MigrateInvade:    step_migrate_invade(); return true;
            case St::MigrateInfect:    step_migrate_infect(); return true;
            case St::MigrateRollback:  step_migrate_rollback(); return true;
            default:                   return false;
        }
    }

    void commit_iteration() {
        const Word x = prog.loop.input[static_cast<std::size_t>(iter)];
        for (int r = 0; r < R; ++r) {
            std::vector<Word>& pr = p[static_cast<std::size_t>(r)];
            for (int k = T - 1; k >= 1; --k)
                pr[static_cast<std::size_t>(k)] = static_cast<Word>(
                    pr[static_cast<std::size_t>(k - 1)] +
                    static_cast<Word>(tap_rev[static_cast<std::size_t>(k)] * x));
            pr[0] = static_cast<Word>(tap_rev[0] * x);
            out_vals[static_cast<std::size_t>(r)] = pr[static_cast<std::size_t>(T - 1)];
        }

        inject_due_faults();

        bool mismatch = false;
        int corrections = 0;
        int deviant = -1;
        bool deviant_mixed = false;
        if (prog.vote_due(iter)) {
            auto run_vote = [&](int k /* -1 = output */) {
                std::vector<Word> vals(static_cast<std::size_t>(R));
                for (int r = 0; r < R; ++r)
                    vals[static_cast<std::size_t>(r)] =
                        k < 0 ? out_vals[static_cast<std::size_t>(r)]
                              : p[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)];
                VoteOutcome o = vote(vals, plan.mode);
                if (o.kind == VoteOutcome::Match) return true;
                stats.detected++;
                std::string var = k < 0 ? "out" : "p" + std::to_string(k);
                if (o.kind == VoteOutcome::Corrected) {
                    stats.corrected++;
                    corrections++;
                    if (deviant >= 0 && deviant != o.deviant) deviant_mixed = true;
                    deviant = o.deviant;
                    for (int r = 0; r < R; ++r) {
                        if (k < 0)
                            out_vals[static_cast<std::size_t>(r)] = o.value;
                        else
                            p[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] = o.value;
                    }
                    note("vote app=" + std::to_string(app) + " iter=" + std::to_string(iter) +
                         " var=" + var + " outcome=corrected deviant=" + std::to_string(o.deviant));
                    return true;
                }
                note("vote app=" + std::to_string(app) + " iter=" + std::to_string(iter) +
                     " var=" + var + " outcome=mismatch");
                mismatch = true;
                return false;
            };
            if (prog.voted == VotedVars::OutputsAndPartials)
                for (int k = 0; k < T && !mismatch; ++k) run_vote(k);
            if (!mismatch) run_vote(-1);
        }

        if (mismatch) {
            stats.halts++;
            int count = ++mismatch_count[iter];
            note("recovery app=" + std::to_string(app) + " kind=halt iter=" + std::to_string(iter));
            if (count >= plan.policy.migrate_threshold) {
                start_migration(-1);
                return;
            }
            int target = rewind_target_of(iter);
            stats.rewinds[plan.policy.rewind]++;
            note("recovery app=" + std::to_string(app) + " kind=rewind target=" +
                 rewind_target_name(plan.policy.rewind) + " to_iter=" + std::to_string(target));
            reset_pipeline(target);
            iter = target;
            countdown = iteration_cost(iter);
            return;
        }

        // iteration completed: emit through the reference replica (vote
        // write-back already synchronized the copies at due points)
        mismatch_count.erase(iter);
        final_out[static_cast<std::size_t>(iter)] =
            out_vals[static_cast<std::size_t>(plan.reference_replica())];

        if (corrections > 0 && !deviant_mixed && deviant >= 0) {
            if (corr_replica == deviant)
                corr_streak++;
            else {
                corr_replica = deviant;
                corr_streak = 1;
            }
        } else {
            corr_streak = 0;
            corr_replica = -1;
        }
        if (corr_streak >= plan.policy.migrate_threshold) {
            // repetitive misbehavior attributed by majority voting
            resume_iter = rewind_target_of(iter);
            start_migration(corr_replica);
            return;
        }

        if (++iter >= N) {
            finalize(true);
            return;
        }
        countdown = iteration_cost(iter);
    }

    void inject_due_faults() {
        std::set<std::tuple<int, int, int, int>> applied;  // replica, pe, target, bit
        for (PendingFault& f : faults) {
            if (f.consumed || f.ev.iteration != iter) continue;
            auto sig = std::make_tuple(f.ev.replica, f.ev.pe_offset,
                                       static_cast<int>(f.ev.target), f.ev.bit);
            if (applied.count(sig)) continue;  // duplicates fire on later passes
            applied.insert(sig);
            f.consumed = true;
            stats.injected++;
            Word mask = static_cast<Word>(1u << f.ev.bit);
            if (f.ev.target == FaultTarget::PartialSum)
                p[static_cast<std::size_t>(f.ev.replica)][static_cast<std::size_t>(f.ev.pe_offset)] ^= mask;
            else
                out_vals[static_cast<std::size_t>(f.ev.replica)] ^= mask;
        }
    }

    void start_migration(int attributed) {
        resume_iter = rewind_target_of(iter);
        quarantine_set.clear();
        if (attributed >= 0) {
            quarantine_set = plan.replicas[static_cast<std::size_t>(attributed)].pes;
        } else {
            for (const Claim& c : plan.replicas)
                quarantine_set.insert(quarantine_set.end(), c.pes.begin(), c.pes.end());
        }
        note("recovery app=" + std::to_string(app) + " kind=migrate quarantine=" +
             std::to_string(quarantine_set.size()) + " resume_iter=" + std::to_string(resume_iter));
        retreat_handles.clear();
        for (const Claim& c : plan.replicas) retreat_handles.push_back(proto.start_retreat(c));
        retreat_done.assign(retreat_handles.size(), false);
        st = St::MigrateRetreat;
    }

    void step_migrate_retreat() {
        bool all = true;
        for (std::size_t i = 0; i < retreat_handles.size(); ++i) {
            if (!retreat_done[i] && proto.take_retreat_latency(retreat_handles[i]))
                retreat_done[i] = true;
            all = all && retreat_done[i];
        }
        if (!all) return;
        for (Coord c : quarantine_set) array.at(c).quarantined = true;
        new_claims.clear();
        invade_handle = -1;
        st = St::MigrateInvade;
    }

    void step_migrate_invade() {
        if (invade_handle < 0) {
            InvadeRequest rr;
            rr.app_id = app;
            rr.strategy = LinearShape{T};
            rr.reliability = plan.mode;
            rr.issue_cycle = proto.now();
            invade_handle = proto.start_invade(rr);
            return;
        }
        auto o = proto.take_invade_outcome(invade_handle);
        if (!o) return;
        invade_handle = -1;
        if (o->no_seed || o->claim.granted != T) {
            if (!o->no_seed && o->claim.granted > 0) new_claims.push_back(o->claim);
            note("recovery app=" + std::to_string(app) + " kind=migration_failed");
            begin_rollback();
            return;
        }
        new_claims.push_back(o->claim);
        if (static_cast<int>(new_claims.size()) == R) {
            plan.replicas = new_claims;
            place_voters(plan);
            infect_handles.clear();
            for (const Claim& c : plan.replicas)
                infect_handles.push_back(proto.start_infect(c, program_id));
            infect_done.assign(infect_handles.size(), false);
            st = St::MigrateInfect;
        }
    }

    void step_migrate_infect() {
        bool all = true;
        for (std::size_t i = 0; i < infect_handles.size(); ++i) {
            if (!infect_done[i] && proto.take_infect_cycles(infect_handles[i]))
                infect_done[i] = true;
            all = all && infect_done[i];
        }
        if (!all) return;
        stats.migrations++;
        mismatch_count.clear();
        corr_streak = 0;
        corr_replica = -1;
        reset_pipeline(resume_iter);
        iter = resume_iter;
        countdown = iteration_cost(iter);
        st = power ? St::WaitPower : St::Running;
    }

    void begin_rollback() {
        retreat_handles.clear();
        for (const Claim& c : new_claims)
            retreat_handles.push_back(proto.start_retreat(c));
        retreat_done.assign(retreat_handles.size(), false);
        new_claims.clear();
        st = St::MigrateRollback;
    }

    void step_migrate_rollback() {
        bool all = true;
        for (std::size_t i = 0; i < retreat_handles.size(); ++i) {
            if (!retreat_done[i] && proto.take_retreat_latency(retreat_handles[i]))
                retreat_done[i] = true;
            all = all && retreat_done[i];
        }
        if (all) finalize(false);
    }

    void finalize(bool completed) {
        if (finalized) return;
        finalized = true;
        st = completed ? St::Done : St::Aborted;
        stats.outputs_valid = completed;
        if (completed) {
            std::vector<Word> ref = prog.loop.golden();
            for (int i = 0; i < N; ++i)
                if (final_out[static_cast<std::size_t>(i)] != ref[static_cast<std::size_t>(i)])
                    stats.silent++;
        }
        stats.timing_overhead =
            static_cast<double>(stats.execution_cycles - N) / static_cast<double>(N);
        stats.voter_fu_count = static_cast<int>(plan.voter_pes.size());
        stats.extra_pes = (R - 1) * T;
    }
};

FTExecutor::FTExecutor(ArrayState& array, ProtocolEngine& protocol, ReplicationPlan plan,
                       ReplicatedProgram program, std::vector<FaultEvent> faults,
                       int program_id, PowerHook* power)
    : impl_(std::make_unique<Impl>(array, protocol, std::move(plan), std::move(program),
                                   std::move(faults), program_id, power)) {}

FTExecutor::~FTExecutor() = default;

void FTExecutor::add_faults(const std::vector<FaultEvent>& faults) { impl_->add(faults); }

bool FTExecutor::step() { return impl_->step(); }

bool FTExecutor::finished() const {
    return impl_->st == Impl::St::Done || impl_->st == Impl::St::Aborted;
}

void FTExecutor::cancel() {
    if (!finished()) impl_->finalize(false);
}

FTResult FTExecutor::result() const { return {impl_->final_out, impl_->stats}; }

const ReplicationPlan& FTExecutor::plan() const { return impl_->plan; }

std::vector<std::string> FTExecutor::drain_trace() {
    std::vector<std::string> out;
    out.swap(impl_->trace);
    return out;
}

FTResult execute_with_faults(ArrayState& array, ProtocolEngine& protocol,
                             const ReplicationPlan& plan, const ReplicatedProgram& program,
                             std::vector<FaultEvent> faults, int program_id) {
    FTExecutor ex(array, protocol, plan, program, std::move(faults), program_id);
    while (!ex.finished()) {
        protocol.step();
        ex.step();
    }
    return ex.result();
}

}  // namespace tcpa
