// Scenario documents: a JSON tree describing the array, the power model,
// protocol constants, and a timed list of application events.
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tcpa/array.hpp"
#include "tcpa/fault_tolerance.hpp"
#include "tcpa/power.hpp"
#include "tcpa/protocol.hpp"

namespace tcpa {

class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FtSpec {
    LoopSpec loop;
    SchemeKind scheme = SchemeKind::IntermediateHW;
    int vote_every = 1;
    VotedVars voted = VotedVars::OutputsAndPartials;
    VoteCosts costs;
    RecoveryPolicy policy;
    std::vector<FaultEvent> faults;
};

struct InvadeEvent {
    InvadeRequest request;
    std::optional<FtSpec> ft;
};

struct RetreatEvent {
    AppId app_id = 0;
};

struct InjectFaultsEvent {
    AppId app_id = 0;
    std::vector<FaultEvent> faults;
};

struct EndEvent {};

struct ScenarioEvent {
    Cycle at_cycle = 0;
    std::variant<InvadeEvent, RetreatEvent, InjectFaultsEvent, EndEvent> action;
};

struct Scenario {
    ArrayConfig array;
    PowerModel power;
    ProtocolParams protocol;
    std::uint64_t rng_seed = 0;
    std::vector<ScenarioEvent> events;
};

/// Parses and fully validates a scenario document. Errors carry the field
/// path of the offending entry.
Scenario load_scenario(const std::string& text);
Scenario load_scenario_file(const std::string& path);

/// Applies `path=value` overrides (dotted paths into the document tree) to
/// the scenario text. Unknown paths are errors.
std::string apply_overrides(const std::string& text,
                            const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace tcpa
