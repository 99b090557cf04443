#include "tcpa/protocol.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <tuple>

namespace tcpa {

int requested_count(const Strategy& s) {
    if (const auto* l = std::get_if<LinearShape>(&s)) return l->count;
    const auto& r = std::get<RectShape>(s);
    return r.width * r.height;
}

bool is_linear(const Strategy& s) {
    return std::holds_alternative<LinearShape>(s);
}

void InvadeRequest::validate() const {
    if (const auto* l = std::get_if<LinearShape>(&strategy)) {
        if (l->count < 1)
            throw ConfigError("request.strategy.linear: count must be >= 1");
    } else {
        const auto& r = std::get<RectShape>(strategy);
        if (r.width < 1 || r.height < 1)
            throw ConfigError("request.strategy.rect: width and height must be >= 1");
    }
}

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::SeedSelected:  return "seed_selected";
        case EventKind::InvadeSignal:  return "invade_signal";
        case EventKind::ClaimConfirm:  return "claim_confirm";
        case EventKind::RetreatSignal: return "retreat_signal";
        case EventKind::RetreatConfirm:return "retreat_confirm";
        default:                       return "infect_loaded";
    }
}

long centralized_baseline_cycles(const ProtocolParams& params, int granted) {
    return params.centralized_fixed + params.centralized_per_pe * granted;
}

namespace {

enum class Role { Linear, RectHead, RectCol };

struct Node {
    Role role = Role::Linear;
    std::optional<Dir> parent;
    Dir heading = Dir::E;
    int remaining = 0;            // linear: PEs still to capture after this one
    int row_rem = 0, col_rem = 0; // rect wavefront counters
    int granted_acc = 1;          // this PE plus its confirmed subtree
    bool failed = false;
    Cycle activated_at = 0;
};

}  // namespace

struct ProtocolEngine::Impl {
    enum class AKind {
        SelectSeed,
        InvadeDeliver,
        WaveAct,
        ConfirmDeliver,
        RetreatDeliver,
        RetreatWaveAct,
        RetreatConfirmDeliver,
        InfectLoad,
    };

    struct Action {
        Cycle at = 0;
        AppId app = 0;
        long seq = 0;
        AKind kind = AKind::WaveAct;
        int handle = 0;
        Coord pe{};
        std::optional<Coord> from;
        std::optional<Dir> parent_dir;
        Dir heading = Dir::E;
        Role role = Role::Linear;
        int remaining = 0, row_rem = 0, col_rem = 0;
        int granted = 0;
        bool failed = false;
        bool rejected = false;
        int index = 0;
    };

    struct ActionCmp {
        bool operator()(const Action& a, const Action& b) const {
            return std::tie(a.at, a.app, a.seq) < std::tie(b.at, b.app, b.seq);
        }
    };

    struct InvadeOp {
        InvadeRequest req;
        Cycle issue = 0;
        std::optional<Coord> seed;
        Dir row_dir = Dir::E, col_dir = Dir::S;
        int rect_height = 1;
        std::map<Coord, Node> nodes;
        std::vector<Coord> order;  // activation order; order[0] == seed
        Cycle last_arrival = 0;
    };

    struct RetreatOp {
        AppId app = 0;
        Coord seed{};
        Cycle start = 0;
    };

    struct InfectOp {
        AppId app = 0;
        std::vector<Coord> pes;
        Cycle start = 0;
        int loaded = 0;
        int program = 0;
    };

    ArrayState& array;
    ProtocolParams params;
    PowerHook* power;
    Cycle now = 0;
    long next_seq = 0;
    long stalls = 0;
    int next_handle = 1;
    int next_claim_id = 1;

    std::set<Action, ActionCmp> queue;
    std::map<int, InvadeOp> invades;
    std::map<int, RetreatOp> retreats;
    std::map<int, InfectOp> infects;
    std::map<int, InvadeOutcome> invade_results;
    std::map<int, Cycle> retreat_results;
    std::map<int, Cycle> infect_results;
    std::vector<ProtocolEvent>* out = nullptr;

    Impl(ArrayState& a, ProtocolParams p, PowerHook* pw) : array(a), params(p), power(pw) {}

    int hop() const { return array.config().hop_latency(); }

    void push(Action a) {
        a.seq = next_seq++;
        queue.insert(a);
    }

    void emit(EventKind kind, std::optional<Coord> from, Coord to, AppId app) {
        ProtocolEvent ev{now, kind, from, to, app};
        if (out) out->push_back(ev);
        if (power) power->on_protocol_event(ev);
    }

    bool ictrl_ready(Coord c) const { return !power || power->ictrl_ready(c); }
    bool pe_ready(Coord c) const { return !power || power->pe_ready(c); }

    // ---- probes (read-only dry runs) ---------------------------------------

    int probe_linear(Coord seed, int count) const {
        std::set<Coord> visited{seed};
        Coord cur = seed;
        std::optional<Dir> heading;
        int got = 1;
        while (got < count) {
            std::optional<Dir> pick;
            Dir d = heading.value_or(Dir::N);
            for (int i = 0; i < 4; ++i) {
                Coord t = step_toward(cur, d);
                if (array.in_bounds(t) && array.available(t) && !visited.count(t)) {
                    pick = d;
                    break;
                }
                d = heading ? clockwise(d) : static_cast<Dir>((static_cast<int>(d) + 1) % 4);
            }
            if (!pick) break;
            cur = step_toward(cur, *pick);
            heading = *pick;
            visited.insert(cur);
            ++got;
        }
        return got;
    }

    // Orientation: expand east if the width fits, else west; south if the
    // height fits, else north. Returns false when the rectangle cannot be
    // anchored at the seed at all.
    bool rect_orientation(Coord seed, int w, int h, Dir& row_dir, Dir& col_dir) const {
        if (seed.col + w <= array.cols()) row_dir = Dir::E;
        else if (seed.col + 1 - w >= 0) row_dir = Dir::W;
        else return false;
        if (seed.row + h <= array.rows()) col_dir = Dir::S;
        else if (seed.row + 1 - h >= 0) col_dir = Dir::N;
        else return false;
        return true;
    }

    int probe_rect(Coord seed, int w, int h) const {
        Dir rd, cd;
        if (!rect_orientation(seed, w, h, rd, cd)) return 0;
        for (int j = 0; j < w; ++j) {
            for (int i = 0; i < h; ++i) {
                Coord c = seed;
                for (int s = 0; s < j; ++s) c = step_toward(c, rd);
                for (int s = 0; s < i; ++s) c = step_toward(c, cd);
                if (!array.available(c)) return 0;
            }
        }
        return w * h;
    }

    int probe(Coord seed, const Strategy& strategy) const {
        if (const auto* l = std::get_if<LinearShape>(&strategy))
            return probe_linear(seed, l->count);
        const auto& r = std::get<RectShape>(strategy);
        return probe_rect(seed, r.width, r.height);
    }

    std::optional<Coord> select_seed(const InvadeRequest& req) const {
        std::vector<Coord> candidates = array.config().seed_candidates;
        std::sort(candidates.begin(), candidates.end());
        std::optional<Coord> best;
        int best_score = -1;
        for (Coord c : candidates) {
            if (!array.available(c)) continue;
            int score = probe(c, req.strategy);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        return best;
    }

    // ---- invade wave --------------------------------------------------------

    int start_invade(const InvadeRequest& req) {
        req.validate();
        int h = next_handle++;
        InvadeOp op;
        op.req = req;
        op.issue = now;
        invades[h] = std::move(op);
        Action a;
        a.at = now + params.seed_select_cycles;
        a.app = req.app_id;
        a.kind = AKind::SelectSeed;
        a.handle = h;
        push(a);
        return h;
    }

    void do_select_seed(const Action& a) {
        InvadeOp& op = invades.at(a.handle);
        std::optional<Coord> seed = select_seed(op.req);
        if (!seed) {
            invade_results[a.handle] = InvadeOutcome{true, Claim{}, now};
            invades.erase(a.handle);
            return;
        }
        op.seed = *seed;
        if (const auto* r = std::get_if<RectShape>(&op.req.strategy)) {
            op.rect_height = r->height;
            if (!rect_orientation(*seed, r->width, r->height, op.row_dir, op.col_dir)) {
                // rectangle cannot be anchored here: all-or-nothing abort
                finish_invade(a.handle, Claim{op.req.app_id, next_claim_id++, *seed, {},
                                              requested_count(op.req.strategy), 0,
                                              now - op.issue, 0, false});
                return;
            }
        }
        emit(EventKind::SeedSelected, std::nullopt, *seed, op.req.app_id);
        Action d;
        d.at = now;
        d.app = op.req.app_id;
        d.kind = AKind::InvadeDeliver;
        d.handle = a.handle;
        d.pe = *seed;
        if (is_linear(op.req.strategy)) {
            d.role = Role::Linear;
            d.remaining = std::get<LinearShape>(op.req.strategy).count - 1;
        } else {
            const auto& r = std::get<RectShape>(op.req.strategy);
            d.role = Role::RectHead;
            d.row_rem = r.width - 1;
            d.col_rem = r.height - 1;
        }
        push(d);
    }

    void do_invade_deliver(const Action& a) {
        InvadeOp& op = invades.at(a.handle);
        ProcessorElement& pe = array.at(a.pe);
        if (!(pe.ictrl.phase == Phase::Idle && !pe.quarantined)) {
            reject_invade(a);
            return;
        }
        if (!ictrl_ready(a.pe)) {
            ++stalls;
            Action retry = a;
            retry.at = now + 1;
            push(retry);
            return;
        }
        pe.ictrl.phase = Phase::Invading;
        pe.ictrl.app = op.req.app_id;
        pe.ictrl.parent_dir = a.parent_dir;
        Node nd;
        nd.role = a.role;
        nd.parent = a.parent_dir;
        nd.heading = a.heading;
        nd.remaining = a.remaining;
        nd.row_rem = a.row_rem;
        nd.col_rem = a.col_rem;
        nd.activated_at = now;
        op.nodes[a.pe] = nd;
        op.order.push_back(a.pe);
        op.last_arrival = now;

        bool frontier = (a.role == Role::Linear) ? a.remaining == 0
                                                 : (a.row_rem == 0 && a.col_rem == 0);
        if (frontier && !a.parent_dir) {
            // single-PE claim: the seed confirms to the control processor
            // without any wave hop
            complete_invade(a.handle);
            return;
        }
        Action w;
        w.at = now + hop();
        w.app = op.req.app_id;
        w.kind = AKind::WaveAct;
        w.handle = a.handle;
        w.pe = a.pe;
        push(w);
    }

    void reject_invade(const Action& a) {
        // Target was captured by a competing wave first; answer with a
        // zero-grant confirm so the sender's bookkeeping closes.
        if (!a.from) {
            // seed lost during a power stall: report an empty claim
            InvadeOp& op = invades.at(a.handle);
            finish_invade(a.handle, Claim{op.req.app_id, next_claim_id++, a.pe, {},
                                          requested_count(op.req.strategy), 0,
                                          now - op.issue, 0, false});
            return;
        }
        Action c;
        c.at = now;
        c.app = a.app;
        c.kind = AKind::ConfirmDeliver;
        c.handle = a.handle;
        c.pe = *a.from;
        c.from = a.pe;
        c.granted = 0;
        c.rejected = true;
        push(c);
    }

    void forward_invade(int handle, InvadeOp& op, Coord pe, Dir dir, Role child_role,
                        int remaining, int row_rem, int col_rem) {
        Coord target = step_toward(pe, dir);
        emit(EventKind::InvadeSignal, pe, target, op.req.app_id);
        ProcessorElement& self = array.at(pe);
        self.ictrl.child_dirs.insert(dir);
        self.ictrl.pending_confirms++;
        Action d;
        d.at = now;
        d.app = op.req.app_id;
        d.kind = AKind::InvadeDeliver;
        d.handle = handle;
        d.pe = target;
        d.from = pe;
        d.parent_dir = opposite(dir);
        d.heading = dir;
        d.role = child_role;
        d.remaining = remaining;
        d.row_rem = row_rem;
        d.col_rem = col_rem;
        push(d);
    }

    std::optional<Dir> pick_linear_dir(Coord pe, const Node& nd) const {
        Dir d = nd.parent ? nd.heading : Dir::N;
        for (int i = 0; i < 4; ++i) {
            Coord t = step_toward(pe, d);
            if (array.in_bounds(t) && array.available(t)) return d;
            d = nd.parent ? clockwise(d) : static_cast<Dir>((static_cast<int>(d) + 1) % 4);
        }
        return std::nullopt;
    }

    void do_wave_act(const Action& a) {
        auto it = invades.find(a.handle);
        if (it == invades.end()) return;
        InvadeOp& op = it->second;
        Node& nd = op.nodes.at(a.pe);
        if (nd.role == Role::Linear) {
            if (nd.remaining > 0) {
                if (auto dir = pick_linear_dir(a.pe, nd)) {
                    forward_invade(a.handle, op, a.pe, *dir, Role::Linear, nd.remaining - 1, 0, 0);
                    return;
                }
            }
            begin_confirm(a.handle, a.pe);
            return;
        }
        // rectangular wavefront: the head row expands sideways, every head
        // expands its own column; one unavailable target aborts the shape
        std::vector<std::tuple<Dir, Role, int, int>> targets;
        if (nd.role == Role::RectHead && nd.row_rem > 0)
            targets.emplace_back(op.row_dir, Role::RectHead, nd.row_rem - 1, op.rect_height - 1);
        if (nd.col_rem > 0)
            targets.emplace_back(op.col_dir, Role::RectCol, 0, nd.col_rem - 1);
        if (targets.empty()) {
            begin_confirm(a.handle, a.pe);
            return;
        }
        for (const auto& [dir, role, rr, cr] : targets) {
            Coord t = step_toward(a.pe, dir);
            if (!array.in_bounds(t) || !array.available(t)) {
                nd.failed = true;
                begin_confirm(a.handle, a.pe);
                return;
            }
        }
        for (const auto& [dir, role, rr, cr] : targets)
            forward_invade(a.handle, op, a.pe, dir, role, 0, rr, cr);
    }

    void begin_confirm(int handle, Coord pe) {
        InvadeOp& op = invades.at(handle);
        Node& nd = op.nodes.at(pe);
        if (!nd.parent) {
            complete_invade(handle);
            return;
        }
        Action c;
        c.at = now;
        c.app = op.req.app_id;
        c.kind = AKind::ConfirmDeliver;
        c.handle = handle;
        c.pe = step_toward(pe, *nd.parent);
        c.from = pe;
        c.granted = nd.granted_acc;
        c.failed = nd.failed;
        push(c);
    }

    void do_confirm_deliver(const Action& a) {
        InvadeOp& op = invades.at(a.handle);
        Coord child = *a.from;
        if (!a.rejected) {
            ProcessorElement& ch = array.at(child);
            ch.ictrl.phase = Phase::Claimed;
            ch.owner = op.req.app_id;
        }
        emit(EventKind::ClaimConfirm, child, a.pe, op.req.app_id);

        Node& pn = op.nodes.at(a.pe);
        ProcessorElement& parent = array.at(a.pe);
        parent.ictrl.pending_confirms--;
        pn.granted_acc += a.granted;
        pn.failed |= a.failed;
        if (a.rejected) {
            // the refused direction stays out of the claim tree
            for (Dir d : {Dir::N, Dir::E, Dir::S, Dir::W})
                if (step_toward(a.pe, d) == child) parent.ictrl.child_dirs.erase(d);
            if (pn.role == Role::Linear) {
                // retry the remaining preferences from the same wavefront PE
                Action w;
                w.at = now;
                w.app = op.req.app_id;
                w.kind = AKind::WaveAct;
                w.handle = a.handle;
                w.pe = a.pe;
                push(w);
                return;
            }
            pn.failed = true;
        }
        if (parent.ictrl.pending_confirms == 0) {
            if (!pn.parent) {
                complete_invade(a.handle);
                return;
            }
            Action c;
            c.at = now + hop();
            c.app = op.req.app_id;
            c.kind = AKind::ConfirmDeliver;
            c.handle = a.handle;
            c.pe = step_toward(a.pe, *pn.parent);
            c.from = a.pe;
            c.granted = pn.granted_acc;
            c.failed = pn.failed;
            push(c);
        }
    }

    void complete_invade(int handle) {
        InvadeOp& op = invades.at(handle);
        Coord seed = *op.seed;
        Node& root = op.nodes.at(seed);
        ProcessorElement& spe = array.at(seed);
        spe.ictrl.phase = Phase::Claimed;
        spe.owner = op.req.app_id;
        emit(EventKind::ClaimConfirm, std::nullopt, seed, op.req.app_id);

        bool rect_failed = !is_linear(op.req.strategy) && root.failed;
        Claim claim;
        claim.app = op.req.app_id;
        claim.claim_id = next_claim_id++;
        claim.seed = seed;
        claim.requested = requested_count(op.req.strategy);
        claim.invade_latency = op.last_arrival - op.issue;
        claim.claim_latency = now - op.last_arrival;
        if (rect_failed) {
            // all-or-nothing: release the captured PEs with a retreat wave
            start_retreat_tree(op.req.app_id, seed, op.order);
        } else {
            claim.pes = op.order;
        }
        claim.granted = static_cast<int>(claim.pes.size());
        claim.complete = claim.granted == claim.requested;
        finish_invade(handle, claim);
    }

    void finish_invade(int handle, Claim claim) {
        invade_results[handle] = InvadeOutcome{false, std::move(claim), now};
        invades.erase(handle);
    }

    // ---- retreat wave -------------------------------------------------------

    void check_owned(const std::vector<Coord>& pes, AppId app, const char* what) {
        if (pes.empty()) throw StaleClaimError(std::string(what) + ": claim holds no PEs");
        for (Coord c : pes) {
            const ProcessorElement& pe = array.at(c);
            if (pe.ictrl.phase != Phase::Claimed || !pe.owner || *pe.owner != app)
                throw StaleClaimError(std::string(what) + ": PE " + to_string(c) +
                                      " is no longer claimed by app " + std::to_string(app));
        }
    }

    int start_retreat_tree(AppId app, Coord seed, const std::vector<Coord>&) {
        int h = next_handle++;
        retreats[h] = RetreatOp{app, seed, now};
        Action d;
        d.at = now;
        d.app = app;
        d.kind = AKind::RetreatDeliver;
        d.handle = h;
        d.pe = seed;
        push(d);
        return h;
    }

    int start_retreat(const Claim& claim) {
        check_owned(claim.pes, claim.app, "retreat");
        return start_retreat_tree(claim.app, claim.seed, claim.pes);
    }

    void do_retreat_deliver(const Action& a) {
        RetreatOp& op = retreats.at(a.handle);
        ProcessorElement& pe = array.at(a.pe);
        emit(EventKind::RetreatSignal, a.from, a.pe, op.app);
        pe.ictrl.phase = Phase::Retreating;
        if (!a.from && pe.ictrl.child_dirs.empty()) {
            // single-PE claim: release immediately, zero hop cycles
            release_pe(a.pe);
            emit(EventKind::RetreatConfirm, std::nullopt, a.pe, op.app);
            retreat_results[a.handle] = now - op.start;
            retreats.erase(a.handle);
            return;
        }
        Action w;
        w.at = now + hop();
        w.app = op.app;
        w.kind = AKind::RetreatWaveAct;
        w.handle = a.handle;
        w.pe = a.pe;
        push(w);
    }

    void do_retreat_wave_act(const Action& a) {
        RetreatOp& op = retreats.at(a.handle);
        ProcessorElement& pe = array.at(a.pe);
        int children = 0;
        for (Dir d : {Dir::N, Dir::E, Dir::S, Dir::W}) {
            if (!pe.ictrl.child_dirs.contains(d)) continue;
            ++children;
            Action f;
            f.at = now;
            f.app = op.app;
            f.kind = AKind::RetreatDeliver;
            f.handle = a.handle;
            f.pe = step_toward(a.pe, d);
            f.from = a.pe;
            push(f);
        }
        pe.ictrl.pending_confirms = children;
        if (children == 0) send_retreat_confirm(a.handle, a.pe);
    }

    void send_retreat_confirm(int handle, Coord pe) {
        // leaf confirm: the hop was already charged by the wave action
        RetreatOp& op = retreats.at(handle);
        std::optional<Dir> parent = array.at(pe).ictrl.parent_dir;
        Action c;
        c.at = now;
        c.app = op.app;
        c.kind = AKind::RetreatConfirmDeliver;
        c.handle = handle;
        c.pe = step_toward(pe, *parent);
        c.from = pe;
        push(c);
    }

    void do_retreat_confirm_deliver(const Action& a) {
        RetreatOp& op = retreats.at(a.handle);
        release_pe(*a.from);
        emit(EventKind::RetreatConfirm, a.from, a.pe, op.app);
        ProcessorElement& parent = array.at(a.pe);
        if (--parent.ictrl.pending_confirms > 0) return;
        std::optional<Dir> pdir = parent.ictrl.parent_dir;
        if (!pdir) {
            // the initiator has heard from every captured PE
            release_pe(a.pe);
            emit(EventKind::RetreatConfirm, std::nullopt, a.pe, op.app);
            retreat_results[a.handle] = now - op.start;
            retreats.erase(a.handle);
            return;
        }
        Action c;
        c.at = now + hop();
        c.app = op.app;
        c.kind = AKind::RetreatConfirmDeliver;
        c.handle = a.handle;
        c.pe = step_toward(a.pe, *pdir);
        c.from = a.pe;
        push(c);
    }

    void release_pe(Coord c) {
        ProcessorElement& pe = array.at(c);
        pe.ictrl.reset();
        pe.owner.reset();
        pe.program.reset();
    }

    // ---- infect -------------------------------------------------------------

    int start_infect(const Claim& claim, int program_id) {
        check_owned(claim.pes, claim.app, "infect");
        int h = next_handle++;
        infects[h] = InfectOp{claim.app, claim.pes, now, 0, program_id};
        for (int i = 0; i < claim.granted; ++i) {
            Action a;
            a.at = now + params.config_load_cycles_per_pe + i;
            a.app = claim.app;
            a.kind = AKind::InfectLoad;
            a.handle = h;
            a.pe = claim.pes[static_cast<std::size_t>(i)];
            a.index = i;
            push(a);
        }
        return h;
    }

    void do_infect_load(const Action& a) {
        auto it = infects.find(a.handle);
        if (it == infects.end()) return;
        InfectOp& op = it->second;
        const ProcessorElement& target = array.at(a.pe);
        if (target.ictrl.phase != Phase::Claimed || !target.owner || *target.owner != op.app) {
            // claim was retreated while loads were in flight: cancel the op
            infect_results[a.handle] = now - op.start;
            infects.erase(it);
            return;
        }
        if (a.index != op.loaded || !pe_ready(a.pe)) {
            if (a.index == op.loaded) ++stalls;  // head of the load pipeline waits on power
            Action retry = a;
            retry.at = now + 1;
            push(retry);
            return;
        }
        array.at(a.pe).program = op.program;
        emit(EventKind::InfectLoaded, std::nullopt, a.pe, op.app);
        if (++op.loaded == static_cast<int>(op.pes.size())) {
            infect_results[a.handle] = now - op.start;
            infects.erase(a.handle);
        }
    }

    // ---- main step ----------------------------------------------------------

    std::vector<ProtocolEvent> step() {
        std::vector<ProtocolEvent> evs;
        out = &evs;
        while (!queue.empty() && queue.begin()->at <= now) {
            Action a = *queue.begin();
            queue.erase(queue.begin());
            dispatch(a);
        }
        out = nullptr;
        if (power) power->on_cycle(now);
        ++now;
        return evs;
    }

    void dispatch(const Action& a) {
        switch (a.kind) {
            case AKind::SelectSeed:            do_select_seed(a); break;
            case AKind::InvadeDeliver:         do_invade_deliver(a); break;
            case AKind::WaveAct:               do_wave_act(a); break;
            case AKind::ConfirmDeliver:        do_confirm_deliver(a); break;
            case AKind::RetreatDeliver:        do_retreat_deliver(a); break;
            case AKind::RetreatWaveAct:        do_retreat_wave_act(a); break;
            case AKind::RetreatConfirmDeliver: do_retreat_confirm_deliver(a); break;
            case AKind::InfectLoad:            do_infect_load(a); break;
        }
    }

    bool quiescent() const {
        return queue.empty() && invades.empty() && retreats.empty() && infects.empty();
    }
};

ProtocolEngine::ProtocolEngine(ArrayState& array, ProtocolParams params, PowerHook* power)
    : impl_(std::make_unique<Impl>(array, params, power)) {}

ProtocolEngine::~ProtocolEngine() = default;

Cycle ProtocolEngine::now() const { return impl_->now; }
bool ProtocolEngine::quiescent() const { return impl_->quiescent(); }
long ProtocolEngine::stall_cycles() const { return impl_->stalls; }

std::vector<ProtocolEvent> ProtocolEngine::step() { return impl_->step(); }

int ProtocolEngine::start_invade(const InvadeRequest& request) {
    return impl_->start_invade(request);
}

int ProtocolEngine::start_retreat(const Claim& claim) { return impl_->start_retreat(claim); }

int ProtocolEngine::start_infect(const Claim& claim, int program_id) {
    return impl_->start_infect(claim, program_id);
}

std::optional<ProtocolEngine::InvadeOutcome> ProtocolEngine::take_invade_outcome(int handle) {
    auto it = impl_->invade_results.find(handle);
    if (it == impl_->invade_results.end()) return std::nullopt;
    InvadeOutcome r = std::move(it->second);
    impl_->invade_results.erase(it);
    return r;
}

std::optional<Cycle> ProtocolEngine::take_retreat_latency(int handle) {
    auto it = impl_->retreat_results.find(handle);
    if (it == impl_->retreat_results.end()) return std::nullopt;
    Cycle c = it->second;
    impl_->retreat_results.erase(it);
    return c;
}

std::optional<Cycle> ProtocolEngine::take_infect_cycles(int handle) {
    auto it = impl_->infect_results.find(handle);
    if (it == impl_->infect_results.end()) return std::nullopt;
    Cycle c = it->second;
    impl_->infect_results.erase(it);
    return c;
}

std::optional<Claim> ProtocolEngine::invade(const InvadeRequest& request) {
    int h = impl_->start_invade(request);
    while (!impl_->invade_results.count(h)) impl_->step();
    InvadeOutcome r = *take_invade_outcome(h);
    while (!impl_->quiescent()) impl_->step();  // drain any abort cleanup
    if (r.no_seed) return std::nullopt;
    return r.claim;
}

Cycle ProtocolEngine::retreat(const Claim& claim) {
    int h = impl_->start_retreat(claim);
    while (!impl_->retreat_results.count(h)) impl_->step();
    return *take_retreat_latency(h);
}

Cycle ProtocolEngine::infect(const Claim& claim, int program_id) {
    int h = impl_->start_infect(claim, program_id);
    while (!impl_->infect_results.count(h)) impl_->step();
    return *take_infect_cycles(h);
}

int ProtocolEngine::probe(Coord seed, const Strategy& strategy) const {
    return impl_->probe(seed, strategy);
}

std::optional<Coord> ProtocolEngine::select_seed(const InvadeRequest& request) const {
    return impl_->select_seed(request);
}

}  // namespace tcpa
