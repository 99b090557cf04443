#include "tcpa/power.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <set>

namespace tcpa {

const char* granularity_name(DomainGranularity g) {
    switch (g) {
        case DomainGranularity::Single: return "1";
        case DomainGranularity::Quad:   return "4";
        case DomainGranularity::Row:    return "row";
        default:                        return "array";
    }
}

int group_size(DomainGranularity g, int rows, int cols) {
    switch (g) {
        case DomainGranularity::Single: return 1;
        case DomainGranularity::Quad:   return 4;
        case DomainGranularity::Row:    return cols;
        default:                        return rows * cols;
    }
}

void PowerModel::validate(int rows, int cols) const {
    if (p_pe_on < 0 || p_pe_off < 0 || p_ictrl_on < 0 || p_ictrl_off < 0)
        throw ConfigError("power: power rates must be non-negative");
    if (e_switch < 0) throw ConfigError("power.e_switch: must be non-negative");
    if (d_switch < 0) throw ConfigError("power.d_switch: must be non-negative");
    auto check_tiling = [&](DomainGranularity g, const char* field) {
        if (g == DomainGranularity::Quad && (rows % 2 != 0 || cols % 2 != 0))
            throw ConfigError(std::string("power.") + field +
                              ": domain size does not tile array (quad grouping needs even "
                              "rows and cols, got " +
                              std::to_string(rows) + "x" + std::to_string(cols) + ")");
    };
    check_tiling(ictrl_domains, "ictrl_domain_size");
    check_tiling(pe_domains, "pe_domain_size");
}

namespace {

int domain_index(DomainGranularity g, int rows, int cols, Coord c) {
    (void)rows;
    switch (g) {
        case DomainGranularity::Single: return c.row * cols + c.col;
        case DomainGranularity::Quad:   return (c.row / 2) * (cols / 2) + (c.col / 2);
        case DomainGranularity::Row:    return c.row;
        default:                        return 0;
    }
}

std::vector<PowerDomain> build_domains(DomainKind kind, DomainGranularity g, int rows, int cols) {
    int count = rows * cols / group_size(g, rows, cols);
    std::vector<PowerDomain> doms(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        doms[static_cast<std::size_t>(i)].id = i;
        doms[static_cast<std::size_t>(i)].kind = kind;
    }
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            doms[static_cast<std::size_t>(domain_index(g, rows, cols, {r, c}))]
                .members.push_back({r, c});
    return doms;
}

}  // namespace

PowerManager::PowerManager(ArrayState& array, PowerModel model)
    : array_(array), model_(model) {
    int rows = array.rows(), cols = array.cols();
    model_.validate(rows, cols);
    ictrl_domains_ = build_domains(DomainKind::ICtrl, model_.ictrl_domains, rows, cols);
    pe_domains_ = build_domains(DomainKind::PE, model_.pe_domains, rows, cols);
    ictrl_index_.resize(static_cast<std::size_t>(rows) * cols);
    pe_index_.resize(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            ictrl_index_[static_cast<std::size_t>(r) * cols + c] =
                domain_index(model_.ictrl_domains, rows, cols, {r, c});
            pe_index_[static_cast<std::size_t>(r) * cols + c] =
                domain_index(model_.pe_domains, rows, cols, {r, c});
        }
}

PowerDomain& PowerManager::domain_of(DomainKind kind, Coord c) {
    std::size_t flat = static_cast<std::size_t>(c.row) * array_.cols() + c.col;
    return kind == DomainKind::ICtrl
               ? ictrl_domains_[static_cast<std::size_t>(ictrl_index_[flat])]
               : pe_domains_[static_cast<std::size_t>(pe_index_[flat])];
}

const PowerDomain& PowerManager::domain_of(DomainKind kind, Coord c) const {
    return const_cast<PowerManager*>(this)->domain_of(kind, c);
}

const std::vector<PowerDomain>& PowerManager::domains(DomainKind kind) const {
    return kind == DomainKind::ICtrl ? ictrl_domains_ : pe_domains_;
}

bool PowerManager::ictrl_ready(Coord c) const {
    return domain_of(DomainKind::ICtrl, c).state == PowerState::On;
}

bool PowerManager::pe_ready(Coord c) const {
    return domain_of(DomainKind::PE, c).state == PowerState::On;
}

void PowerManager::note(const PowerDomain& d, const char* from, const char* to) {
    trace_.push_back(std::string("power ") +
                     (d.kind == DomainKind::ICtrl ? "ictrl" : "pe") + "_domain=" +
                     std::to_string(d.id) + " " + from + "->" + to);
}

void PowerManager::mirror(PowerDomain& d) {
    for (Coord m : d.members) {
        ProcessorElement& pe = array_.at(m);
        if (d.kind == DomainKind::ICtrl)
            pe.ictrl_power = d.state;
        else
            pe.pe_power = d.state;
    }
}

void PowerManager::set_state(PowerDomain& d, PowerState s) {
    note(d, power_state_name(d.state), power_state_name(s));
    d.state = s;
    mirror(d);
}

void PowerManager::begin_on(PowerDomain& d) {
    d.toggles++;
    breakdown_.switching += model_.e_switch;
    if (model_.d_switch == 0) {
        set_state(d, PowerState::On);
    } else {
        d.timer = model_.d_switch;
        set_state(d, PowerState::SwitchingOn);
    }
}

void PowerManager::begin_off(PowerDomain& d) {
    d.toggles++;
    breakdown_.switching += model_.e_switch;
    if (model_.d_switch == 0) {
        set_state(d, PowerState::Off);
    } else {
        d.timer = model_.d_switch;
        set_state(d, PowerState::SwitchingOff);
    }
}

void PowerManager::wake(PowerDomain& d) {
    d.pending_off = false;
    switch (d.state) {
        case PowerState::Off:          begin_on(d); break;
        case PowerState::SwitchingOff: d.pending_wake = true; break;
        default: break;
    }
}

bool PowerManager::released(const PowerDomain& d) const {
    for (Coord m : d.members) {
        const ProcessorElement& pe = array_.at(m);
        if (d.kind == DomainKind::ICtrl) {
            if (pe.ictrl.phase != Phase::Idle) return false;
        } else {
            if (pe.owner) return false;
        }
    }
    return true;
}

void PowerManager::shutdown_if_released(PowerDomain& d) {
    if (!released(d)) return;
    switch (d.state) {
        case PowerState::On:          begin_off(d); break;
        case PowerState::SwitchingOn: d.pending_off = true; break;
        default: break;
    }
}

void PowerManager::on_protocol_event(const ProtocolEvent& ev) {
    switch (ev.kind) {
        case EventKind::SeedSelected:
        case EventKind::InvadeSignal:
            wake(domain_of(DomainKind::ICtrl, ev.to));
            break;
        case EventKind::ClaimConfirm:
            wake(domain_of(DomainKind::PE, ev.from.value_or(ev.to)));
            break;
        case EventKind::RetreatConfirm: {
            Coord c = ev.from.value_or(ev.to);
            shutdown_if_released(domain_of(DomainKind::ICtrl, c));
            shutdown_if_released(domain_of(DomainKind::PE, c));
            break;
        }
        default:
            break;
    }
}

void PowerManager::on_cycle(Cycle c) {
    if (c == last_timer_cycle_) return;
    last_timer_cycle_ = c;
    for (auto* doms : {&ictrl_domains_, &pe_domains_}) {
        for (PowerDomain& d : *doms) {
            if (d.state == PowerState::SwitchingOn) {
                if (--d.timer == 0) {
                    set_state(d, PowerState::On);
                    if (d.pending_off) {
                        d.pending_off = false;
                        shutdown_if_released(d);
                    }
                }
            } else if (d.state == PowerState::SwitchingOff) {
                if (--d.timer == 0) {
                    set_state(d, PowerState::Off);
                    if (d.pending_wake) {
                        d.pending_wake = false;
                        begin_on(d);
                    }
                }
            }
        }
    }
}

void PowerManager::accumulate(Cycle c) {
    if (c == last_energy_cycle_) return;
    last_energy_cycle_ = c;
    for (const PowerDomain& d : ictrl_domains_) {
        double n = static_cast<double>(d.members.size());
        if (d.state == PowerState::Off)
            breakdown_.ictrl_leak += n * model_.p_ictrl_off;
        else
            breakdown_.ictrl_active += n * model_.p_ictrl_on;  // switching charged at p_on
    }
    for (const PowerDomain& d : pe_domains_) {
        double n = static_cast<double>(d.members.size());
        if (d.state == PowerState::Off)
            breakdown_.pe_leak += n * model_.p_pe_off;
        else
            breakdown_.pe_active += n * model_.p_pe_on;
    }
    baseline_ += array_.pe_count() * (model_.p_pe_on + model_.p_ictrl_on);
}

long PowerManager::toggles(DomainKind kind) const {
    long t = 0;
    for (const PowerDomain& d : domains(kind)) t += d.toggles;
    return t;
}

int PowerManager::pe_on_count() const {
    int n = 0;
    for (const PowerDomain& d : pe_domains_)
        if (d.state == PowerState::On) n += static_cast<int>(d.members.size());
    return n;
}

std::vector<std::string> PowerManager::drain_trace() {
    std::vector<std::string> out;
    out.swap(trace_);
    return out;
}

// ---- closed-form estimator --------------------------------------------------

namespace {

bool is_chain(const std::vector<Coord>& pes) {
    for (std::size_t i = 1; i < pes.size(); ++i) {
        int dr = std::abs(pes[i].row - pes[i - 1].row);
        int dc = std::abs(pes[i].col - pes[i - 1].col);
        if (dr + dc != 1) return false;
    }
    return true;
}

}  // namespace

double analytic_estimate(const ScenarioSummary& summary, const PowerModel& model,
                         const ArrayConfig& config) {
    const int rows = config.rows, cols = config.cols;
    const double hop = summary.hop_latency;
    const double d = model.d_switch;
    double energy = 0;
    double on_cycles_ictrl = 0, on_cycles_pe = 0;

    for (const AppEnergySummary& app : summary.apps) {
        const int n = static_cast<int>(app.pes.size());
        if (n == 0) continue;
        const Cycle end_at = app.has_retreat ? app.retreat_at : summary.span;
        const double span_rel = static_cast<double>(summary.span - app.invade_at);

        // tree depth of each claimed PE: chain position for linear claims,
        // Manhattan distance from the seed for rectangles
        bool chain = is_chain(app.pes);
        std::vector<int> depth(static_cast<std::size_t>(n));
        int max_depth = 0;
        for (int k = 0; k < n; ++k) {
            depth[static_cast<std::size_t>(k)] =
                chain ? k
                      : std::abs(app.pes[static_cast<std::size_t>(k)].row - app.pes[0].row) +
                            std::abs(app.pes[static_cast<std::size_t>(k)].col - app.pes[0].col);
            max_depth = std::max(max_depth, depth[static_cast<std::size_t>(k)]);
        }

        // invade-wave arrival offsets, including one switching stall per
        // newly woken iCtrl domain along the activation order
        std::set<int> seen;
        std::vector<double> arrival(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            seen.insert(domain_index(model.ictrl_domains, rows, cols,
                                     app.pes[static_cast<std::size_t>(k)]));
            arrival[static_cast<std::size_t>(k)] =
                summary.seed_select_cycles + hop * depth[static_cast<std::size_t>(k)] +
                d * static_cast<double>(seen.size());
        }
        double invade_end = *std::max_element(arrival.begin(), arrival.end());

        // release offsets relative to the retreat request: the retreat
        // confirm passes a PE one hop after returning from the deepest leaf
        auto release = [&](int k) {
            return hop * (2.0 * max_depth - depth[static_cast<std::size_t>(k)] + 1.0);
        };

        // group claimed positions by domain, per kind
        struct DomSpan {
            double first_arrival = 1e18;
            double first_confirm = 1e18;
            double last_release = 0;
            int members = 0;
        };
        for (DomainKind kind : {DomainKind::ICtrl, DomainKind::PE}) {
            DomainGranularity g =
                kind == DomainKind::ICtrl ? model.ictrl_domains : model.pe_domains;
            std::map<int, DomSpan> doms;
            for (int k = 0; k < n; ++k) {
                int id = domain_index(g, rows, cols, app.pes[static_cast<std::size_t>(k)]);
                DomSpan& ds = doms[id];
                ds.members = group_size(g, rows, cols);
                ds.first_arrival = std::min(ds.first_arrival, arrival[static_cast<std::size_t>(k)]);
                ds.first_confirm =
                    std::min(ds.first_confirm,
                             invade_end +
                                 hop * (max_depth - depth[static_cast<std::size_t>(k)] + 1.0));
                ds.last_release = std::max(ds.last_release, release(k));
            }
            double p_on = kind == DomainKind::ICtrl ? model.p_ictrl_on : model.p_pe_on;
            for (const auto& [id, ds] : doms) {
                // power is charged at p_on from switch start through the
                // switching-off window
                double on_begin = (kind == DomainKind::ICtrl ? ds.first_arrival - d
                                                             : ds.first_confirm);
                double off_end = app.has_retreat
                                     ? static_cast<double>(end_at - app.invade_at) +
                                           ds.last_release + d
                                     : span_rel;
                on_begin = std::clamp(on_begin, 0.0, span_rel);
                off_end = std::clamp(off_end, on_begin, span_rel);
                double member_cycles = ds.members * (off_end - on_begin);
                energy += member_cycles * p_on;
                if (kind == DomainKind::ICtrl)
                    on_cycles_ictrl += member_cycles;
                else
                    on_cycles_pe += member_cycles;
                int toggles = app.has_retreat ? 2 : 1;
                energy += toggles * model.e_switch;
            }
        }
    }

    // idle leakage over everything not covered by an on-span
    double total_member_cycles = static_cast<double>(summary.span) * rows * cols;
    energy += std::max(0.0, total_member_cycles - on_cycles_ictrl) * model.p_ictrl_off;
    energy += std::max(0.0, total_member_cycles - on_cycles_pe) * model.p_pe_off;
    return energy;
}

EnergyReport make_report(double simulated, double baseline, double analytic,
                         const EnergyBreakdown& breakdown, long stall_cycles,
                         long toggles_ictrl, long toggles_pe) {
    EnergyReport r;
    r.e_total = simulated;
    r.e_baseline = baseline;
    r.savings_fraction = baseline > 0 ? 1.0 - simulated / baseline : 0.0;
    r.by_component = breakdown;
    r.stall_cycles = stall_cycles;
    r.analytic_estimate = analytic;
    r.estimate_error = simulated > 0 ? std::abs(analytic - simulated) / simulated
                                     : (analytic > 0 ? 1.0 : 0.0);
    r.toggles_ictrl = toggles_ictrl;
    r.toggles_pe = toggles_pe;
    return r;
}

}  // namespace tcpa
