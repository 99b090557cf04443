// Hierarchical power gating: iCtrl and PE power domains of configurable
// granularity, switching delays/energies, per-cycle energy accounting, and
// the closed-form energy estimator.
#pragma once

#include <string>
#include <vector>

#include "tcpa/array.hpp"
#include "tcpa/protocol.hpp"

namespace tcpa {

enum class DomainGranularity { Single, Quad, Row, Array };

const char* granularity_name(DomainGranularity g);
int group_size(DomainGranularity g, int rows, int cols);

struct PowerModel {
    double p_pe_on = 10.0;
    double p_pe_off = 0.0;
    double p_ictrl_on = 1.0;
    double p_ictrl_off = 0.0;
    double e_switch = 50.0;  // energy per domain toggle
    int d_switch = 10;       // switching delay, cycles, both directions
    DomainGranularity ictrl_domains = DomainGranularity::Single;
    DomainGranularity pe_domains = DomainGranularity::Single;

    /// Rates must be non-negative and the groupings must tile the array.
    void validate(int rows, int cols) const;
};

enum class DomainKind { ICtrl, PE };

struct PowerDomain {
    int id = 0;
    DomainKind kind = DomainKind::ICtrl;
    std::vector<Coord> members;
    PowerState state = PowerState::Off;
    int timer = 0;
    long toggles = 0;
    bool pending_off = false;   // shutdown requested while still switching on
    bool pending_wake = false;  // wake requested while still switching off
};

struct EnergyBreakdown {
    double pe_active = 0;     // PE members at p_pe_on (On and switching states)
    double pe_leak = 0;       // PE members at p_pe_off
    double ictrl_active = 0;
    double ictrl_leak = 0;
    double switching = 0;     // e_switch charges

    double total() const { return pe_active + pe_leak + ictrl_active + ictrl_leak + switching; }
};

struct EnergyReport {
    double e_total = 0;
    double e_baseline = 0;       // every component On over the same span
    double savings_fraction = 0; // 1 - e_total/e_baseline
    EnergyBreakdown by_component;
    long stall_cycles = 0;       // protocol cycles lost to switching delays
    double analytic_estimate = 0;
    double estimate_error = 0;   // |analytic - simulated| / simulated
    long toggles_ictrl = 0;
    long toggles_pe = 0;
};

/// Wake/shutdown rules:
///  - InvadeSignal / SeedSelected powers the target's iCtrl domain on.
///  - ClaimConfirm powers the confirming PE's processing-unit domain on.
///  - RetreatConfirm powers a domain off only once no member still needs it
///    (all members Idle for iCtrl domains, all unowned for PE domains).
/// Wave hops into a domain that is not On stall at the protocol level until
/// the domain is ready.
class PowerManager : public PowerHook {
public:
    PowerManager(ArrayState& array, PowerModel model);

    bool ictrl_ready(Coord c) const override;
    bool pe_ready(Coord c) const override;
    void on_protocol_event(const ProtocolEvent& ev) override;
    void on_cycle(Cycle c) override;  // advance switching timers; once per cycle

    /// Charges one cycle of power for every domain member plus the always-on
    /// baseline. Idempotent per cycle.
    void accumulate(Cycle c);

    const PowerModel& model() const { return model_; }
    double energy_total() const { return breakdown_.total(); }
    double energy_baseline() const { return baseline_; }
    const EnergyBreakdown& breakdown() const { return breakdown_; }
    long toggles(DomainKind kind) const;
    int pe_on_count() const;  // members of PE domains currently On

    const std::vector<PowerDomain>& domains(DomainKind kind) const;
    const PowerDomain& domain_of(DomainKind kind, Coord c) const;

    std::vector<std::string> drain_trace();

private:
    PowerDomain& domain_of(DomainKind kind, Coord c);
    void wake(PowerDomain& d);
    void shutdown_if_released(PowerDomain& d);
    bool released(const PowerDomain& d) const;
    void begin_on(PowerDomain& d);
    void begin_off(PowerDomain& d);
    void set_state(PowerDomain& d, PowerState s);
    void mirror(PowerDomain& d);
    void note(const PowerDomain& d, const char* from, const char* to);

    ArrayState& array_;
    PowerModel model_;
    std::vector<PowerDomain> ictrl_domains_;
    std::vector<PowerDomain> pe_domains_;
    std::vector<int> ictrl_index_;  // coord -> domain id
    std::vector<int> pe_index_;
    EnergyBreakdown breakdown_;
    double baseline_ = 0;
    Cycle last_timer_cycle_ = -1;
    Cycle last_energy_cycle_ = -1;
    std::vector<std::string> trace_;
};

/// Scenario-level inputs of the closed-form energy model: the claim
/// geometry and the request/release times of each application.
struct AppEnergySummary {
    std::vector<Coord> pes;  // claimed PEs in invasion order
    Cycle invade_at = 0;
    Cycle retreat_at = 0;    // ignored when has_retreat is false
    bool has_retreat = true;
};

struct ScenarioSummary {
    Cycle span = 0;
    int seed_select_cycles = 2;
    int hop_latency = 1;
    std::vector<AppEnergySummary> apps;
};

/// Closed-form energy of the scenario under the given model: per-application
/// domain on-spans from the claim geometry and wave timing, plus toggle and
/// switching-window terms and idle leakage. No simulation state is consumed.
double analytic_estimate(const ScenarioSummary& summary, const PowerModel& model,
                         const ArrayConfig& config);

EnergyReport make_report(double simulated, double baseline, double analytic,
                         const EnergyBreakdown& breakdown, long stall_cycles,
                         long toggles_ictrl, long toggles_pe);

}  // namespace tcpa
