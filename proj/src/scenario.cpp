#include "tcpa/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace tcpa {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ScenarioError(path + ": " + msg);
}

const json* find(const json& obj, const std::string& key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

long get_int(const json& obj, const std::string& path, const std::string& key, long fallback,
             bool required = false) {
    const json* v = find(obj, key);
    if (!v) {
        if (required) fail(path + "." + key, "missing required field");
        return fallback;
    }
    if (!v->is_number_integer()) fail(path + "." + key, "expected an integer");
    return v->get<long>();
}

double get_num(const json& obj, const std::string& path, const std::string& key, double fallback) {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(path + "." + key, "expected a number");
    return v->get<double>();
}

std::string get_str(const json& obj, const std::string& path, const std::string& key,
                    const std::string& fallback, bool required = false) {
    const json* v = find(obj, key);
    if (!v) {
        if (required) fail(path + "." + key, "missing required field");
        return fallback;
    }
    if (!v->is_string()) fail(path + "." + key, "expected a string");
    return v->get<std::string>();
}

Coord get_coord(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() || !v[1].is_number_integer())
        fail(path, "expected a [row, col] pair");
    return {v[0].get<int>(), v[1].get<int>()};
}

DomainGranularity parse_granularity(const json& v, const std::string& path) {
    std::string s;
    if (v.is_number_integer()) s = std::to_string(v.get<int>());
    else if (v.is_string()) s = v.get<std::string>();
    else fail(path, "expected 1, 4, \"row\" or \"array\"");
    if (s == "1") return DomainGranularity::Single;
    if (s == "4") return DomainGranularity::Quad;
    if (s == "row") return DomainGranularity::Row;
    if (s == "array") return DomainGranularity::Array;
    fail(path, "unknown domain size '" + s + "' (expected 1, 4, row or array)");
}

ArrayConfig parse_array(const json& j) {
    const json* a = find(j, "array");
    if (!a || !a->is_object()) fail("array", "missing required section");
    ArrayConfig cfg;
    cfg.rows = static_cast<int>(get_int(*a, "array", "rows", 4));
    cfg.cols = static_cast<int>(get_int(*a, "array", "cols", 4));
    std::string kind = get_str(*a, "array", "ictrl_kind", "fsm");
    if (kind == "fsm") cfg.ictrl_kind = ICtrlKind::FSM;
    else if (kind == "programmable") cfg.ictrl_kind = ICtrlKind::Programmable;
    else fail("array.ictrl_kind", "expected \"fsm\" or \"programmable\"");
    cfg.hop_latency_fsm = static_cast<int>(get_int(*a, "array", "hop_latency_fsm", 1));
    cfg.hop_latency_prog = static_cast<int>(get_int(*a, "array", "hop_latency_prog", 4));
    cfg.control_channels = static_cast<int>(get_int(*a, "array", "control_channels", 1));
    cfg.data_channels = static_cast<int>(get_int(*a, "array", "data_channels", 2));
    cfg.buffer_banks = static_cast<int>(get_int(*a, "array", "buffer_banks", 2));
    cfg.buffer_bank_words = static_cast<int>(get_int(*a, "array", "buffer_bank_words", 1024));
    const json* seeds = find(*a, "seed_candidates");
    if (!seeds || !seeds->is_array() || seeds->empty())
        fail("array.seed_candidates", "at least one [row, col] seed is required");
    for (std::size_t i = 0; i < seeds->size(); ++i)
        cfg.seed_candidates.push_back(
            get_coord((*seeds)[i], "array.seed_candidates[" + std::to_string(i) + "]"));
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw ScenarioError(e.what());
    }
    return cfg;
}

PowerModel parse_power(const json& j, const ArrayConfig& cfg) {
    PowerModel m;
    const json* p = find(j, "power");
    if (!p) return m;
    if (!p->is_object()) fail("power", "expected an object");
    m.p_pe_on = get_num(*p, "power", "p_pe_on", m.p_pe_on);
    m.p_pe_off = get_num(*p, "power", "p_pe_off", m.p_pe_off);
    m.p_ictrl_on = get_num(*p, "power", "p_ictrl_on", m.p_ictrl_on);
    m.p_ictrl_off = get_num(*p, "power", "p_ictrl_off", m.p_ictrl_off);
    m.e_switch = get_num(*p, "power", "e_switch", m.e_switch);
    m.d_switch = static_cast<int>(get_int(*p, "power", "d_switch", m.d_switch));
    if (const json* v = find(*p, "ictrl_domain_size"))
        m.ictrl_domains = parse_granularity(*v, "power.ictrl_domain_size");
    if (const json* v = find(*p, "pe_domain_size"))
        m.pe_domains = parse_granularity(*v, "power.pe_domain_size");
    try {
        m.validate(cfg.rows, cfg.cols);
    } catch (const ConfigError& e) {
        throw ScenarioError(e.what());
    }
    return m;
}

ProtocolParams parse_protocol(const json& j) {
    ProtocolParams p;
    const json* s = find(j, "protocol");
    if (!s) return p;
    if (!s->is_object()) fail("protocol", "expected an object");
    p.seed_select_cycles = static_cast<int>(get_int(*s, "protocol", "seed_select_cycles", 2));
    p.config_load_cycles_per_pe =
        static_cast<int>(get_int(*s, "protocol", "config_load_cycles_per_pe", 1));
    p.centralized_fixed = get_int(*s, "protocol", "c_fixed", 100);
    p.centralized_per_pe = get_int(*s, "protocol", "c_per_pe", 20);
    if (p.seed_select_cycles < 0 || p.config_load_cycles_per_pe < 0)
        fail("protocol", "cycle constants must be non-negative");
    return p;
}

Strategy parse_strategy(const json& ev, const std::string& path) {
    const json* s = find(ev, "strategy");
    if (!s || !s->is_object()) fail(path + ".strategy", "missing required object");
    if (const json* l = find(*s, "linear")) {
        if (!l->is_number_integer()) fail(path + ".strategy.linear", "expected a PE count");
        return LinearShape{l->get<int>()};
    }
    if (const json* r = find(*s, "rect")) {
        if (!r->is_array() || r->size() != 2) fail(path + ".strategy.rect", "expected [width, height]");
        return RectShape{(*r)[0].get<int>(), (*r)[1].get<int>()};
    }
    fail(path + ".strategy", "expected \"linear\" or \"rect\"");
}

std::vector<FaultEvent> parse_faults(const json& arr, const std::string& path) {
    std::vector<FaultEvent> out;
    if (!arr.is_array()) fail(path, "expected an array of fault events");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const json& f = arr[i];
        std::string p = path + "[" + std::to_string(i) + "]";
        if (!f.is_object()) fail(p, "expected an object");
        FaultEvent ev;
        ev.iteration = static_cast<int>(get_int(f, p, "iteration", 0, true));
        ev.replica = static_cast<int>(get_int(f, p, "replica", 0, true));
        ev.pe_offset = static_cast<int>(get_int(f, p, "pe_offset", 0));
        std::string target = get_str(f, p, "target", "partial_sum");
        if (target == "partial_sum") ev.target = FaultTarget::PartialSum;
        else if (target == "output") ev.target = FaultTarget::Output;
        else fail(p + ".target", "expected \"partial_sum\" or \"output\"");
        ev.bit = static_cast<int>(get_int(f, p, "bit", 0, true));
        if (ev.bit < 0 || ev.bit > 15) fail(p + ".bit", "bit index must be in 0..15");
        out.push_back(ev);
    }
    return out;
}

FtSpec parse_ft(const json& ev, const std::string& path) {
    const json* f = find(ev, "ft");
    if (!f || !f->is_object()) fail(path + ".ft", "replicated invades need an ft section");
    FtSpec spec;
    const json* loop = find(*f, "loop");
    if (!loop || !loop->is_object()) fail(path + ".ft.loop", "missing loop kernel");
    if (const json* taps = find(*loop, "taps"); taps && taps->is_array())
        for (const json& t : *taps) spec.loop.taps.push_back(static_cast<Word>(t.get<long>()));
    else
        fail(path + ".ft.loop.taps", "expected an array of tap coefficients");
    if (const json* in = find(*loop, "input"); in && in->is_array())
        for (const json& t : *in) spec.loop.input.push_back(static_cast<Word>(t.get<long>()));
    else
        fail(path + ".ft.loop.input", "expected an array of input words");
    spec.loop.frame_size =
        static_cast<int>(get_int(*loop, path + ".ft.loop", "frame_size", spec.loop.length()));
    spec.loop.buffer_size =
        static_cast<int>(get_int(*loop, path + ".ft.loop", "buffer_size", spec.loop.frame_size));
    try {
        spec.loop.validate();
    } catch (const ConfigError& e) {
        throw ScenarioError(path + ".ft.loop: " + e.what());
    }

    std::string scheme = get_str(*f, path + ".ft", "scheme", "intermediate_hw");
    if (scheme == "output_hw" || scheme == "4a") spec.scheme = SchemeKind::OutputHW;
    else if (scheme == "intermediate_sw_middle" || scheme == "4b")
        spec.scheme = SchemeKind::IntermediateSWMiddle;
    else if (scheme == "intermediate_hw" || scheme == "4c") spec.scheme = SchemeKind::IntermediateHW;
    else if (scheme == "intermediate_sw_all" || scheme == "4d")
        spec.scheme = SchemeKind::IntermediateSWAll;
    else fail(path + ".ft.scheme", "unknown voting scheme '" + scheme + "'");

    spec.vote_every = static_cast<int>(get_int(*f, path + ".ft", "vote_every", 1));
    if (spec.vote_every < 1) fail(path + ".ft.vote_every", "must be >= 1");
    std::string voted = get_str(*f, path + ".ft", "voted_vars", "");
    if (voted.empty()) spec.voted = default_voted_vars(spec.scheme);
    else if (voted == "outputs_only") spec.voted = VotedVars::OutputsOnly;
    else if (voted == "outputs_and_partials") spec.voted = VotedVars::OutputsAndPartials;
    else fail(path + ".ft.voted_vars", "expected \"outputs_only\" or \"outputs_and_partials\"");

    if (const json* c = find(*f, "costs")) {
        spec.costs.v_hw = static_cast<int>(get_int(*c, path + ".ft.costs", "v_hw", spec.costs.v_hw));
        spec.costs.v_sw = static_cast<int>(get_int(*c, path + ".ft.costs", "v_sw", spec.costs.v_sw));
        spec.costs.prop_hops =
            static_cast<int>(get_int(*c, path + ".ft.costs", "prop_hops", spec.costs.prop_hops));
        spec.costs.gather_hops =
            static_cast<int>(get_int(*c, path + ".ft.costs", "gather_hops", spec.costs.gather_hops));
    }
    try {
        spec.costs.validate();
    } catch (const ConfigError& e) {
        throw ScenarioError(path + ".ft.costs: " + e.what());
    }

    if (const json* p = find(*f, "policy")) {
        std::string rw = get_str(*p, path + ".ft.policy", "rewind", "buffer_start");
        if (rw == "previous_iteration") spec.policy.rewind = RewindTarget::PreviousIteration;
        else if (rw == "buffer_start") spec.policy.rewind = RewindTarget::BufferStart;
        else if (rw == "frame_start") spec.policy.rewind = RewindTarget::FrameStart;
        else fail(path + ".ft.policy.rewind", "unknown rewind target '" + rw + "'");
        spec.policy.migrate_threshold = static_cast<int>(
            get_int(*p, path + ".ft.policy", "migrate_threshold", spec.policy.migrate_threshold));
        try {
            spec.policy.validate();
        } catch (const ConfigError& e) {
            throw ScenarioError(path + ".ft.policy: " + e.what());
        }
    }
    if (const json* faults = find(*f, "faults"))
        spec.faults = parse_faults(*faults, path + ".ft.faults");
    return spec;
}

}  // namespace

Scenario load_scenario(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("parse error: ") + e.what());
    }
    if (!j.is_object()) throw ScenarioError("scenario: expected a JSON object");

    Scenario sc;
    sc.array = parse_array(j);
    sc.power = parse_power(j, sc.array);
    sc.protocol = parse_protocol(j);
    if (const json* s = find(j, "rng_seed")) sc.rng_seed = s->get<std::uint64_t>();

    const json* events = find(j, "events");
    if (!events || !events->is_array()) fail("events", "missing required array");
    std::set<AppId> invaded;
    Cycle prev = 0;
    for (std::size_t i = 0; i < events->size(); ++i) {
        const json& ev = (*events)[i];
        std::string path = "events[" + std::to_string(i) + "]";
        if (!ev.is_object()) fail(path, "expected an object");
        ScenarioEvent out;
        out.at_cycle = get_int(ev, path, "at_cycle", 0, true);
        if (out.at_cycle < 0) fail(path + ".at_cycle", "must be non-negative");
        if (out.at_cycle < prev) fail(path + ".at_cycle", "events must be sorted by cycle");
        prev = out.at_cycle;
        std::string action = get_str(ev, path, "action", "", true);
        if (action == "invade") {
            InvadeEvent inv;
            inv.request.app_id = static_cast<AppId>(get_int(ev, path, "app_id", 0, true));
            if (!invaded.insert(inv.request.app_id).second)
                fail(path + ".app_id", "app ids must be unique per invade");
            inv.request.strategy = parse_strategy(ev, path);
            inv.request.issue_cycle = out.at_cycle;
            std::string rel = get_str(ev, path, "reliability", "none");
            if (rel == "none") inv.request.reliability = Redundancy::None;
            else if (rel == "dmr") inv.request.reliability = Redundancy::DMR;
            else if (rel == "tmr") inv.request.reliability = Redundancy::TMR;
            else fail(path + ".reliability", "expected \"none\", \"dmr\" or \"tmr\"");
            try {
                inv.request.validate();
            } catch (const ConfigError& e) {
                throw ScenarioError(path + ": " + e.what());
            }
            if (inv.request.reliability != Redundancy::None) {
                inv.ft = parse_ft(ev, path);
                if (!is_linear(inv.request.strategy))
                    fail(path + ".strategy", "replicated invades must use the linear strategy");
                if (std::get<LinearShape>(inv.request.strategy).count != inv.ft->loop.tap_count())
                    fail(path + ".strategy.linear",
                         "replicated invades must claim one PE per loop tap");
            } else if (find(ev, "ft")) {
                fail(path + ".ft", "an ft section requires reliability dmr or tmr");
            }
            out.action = std::move(inv);
        } else if (action == "retreat") {
            RetreatEvent r;
            r.app_id = static_cast<AppId>(get_int(ev, path, "app_id", 0, true));
            if (!invaded.count(r.app_id))
                fail(path + ".app_id", "retreat refers to an app without a prior invade");
            out.action = r;
        } else if (action == "inject_faults") {
            InjectFaultsEvent f;
            f.app_id = static_cast<AppId>(get_int(ev, path, "app_id", 0, true));
            if (!invaded.count(f.app_id))
                fail(path + ".app_id", "inject_faults refers to an app without a prior invade");
            const json* faults = find(ev, "faults");
            if (!faults) fail(path + ".faults", "missing fault list");
            f.faults = parse_faults(*faults, path + ".faults");
            out.action = f;
        } else if (action == "end") {
            out.action = EndEvent{};
        } else {
            fail(path + ".action", "unknown action '" + action + "'");
        }
        sc.events.push_back(std::move(out));
    }
    return sc;
}

Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_scenario(ss.str());
}

std::string apply_overrides(const std::string& text,
                            const std::vector<std::pair<std::string, std::string>>& overrides) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("parse error: ") + e.what());
    }
    for (const auto& [path, value] : overrides) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : path) {
            if (c == '.') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(cur);
        auto descend = [&](json* node, const std::string& part) -> json* {
            if (node->is_array()) {
                std::size_t idx = 0;
                for (char c : part) {
                    if (c < '0' || c > '9') return nullptr;
                    idx = idx * 10 + static_cast<std::size_t>(c - '0');
                }
                if (part.empty() || idx >= node->size()) return nullptr;
                return &(*node)[idx];
            }
            if (node->is_object() && node->contains(part)) return &(*node)[part];
            return nullptr;
        };
        json* node = &j;
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            node = descend(node, parts[i]);
            if (!node)
                throw ScenarioError("override " + path + ": unknown parameter path at '" +
                                    parts[i] + "'");
        }
        json* leaf = descend(node, parts.back());
        if (!leaf)
            throw ScenarioError("override " + path + ": unknown parameter path at '" +
                                parts.back() + "'");
        try {
            *leaf = json::parse(value);
        } catch (const json::exception&) {
            *leaf = value;  // plain string value
        }
    }
    return j.dump(2);
}

}  // namespace tcpa
