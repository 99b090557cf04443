// Processor-array model: grid topology, per-PE invasion-controller state,
// power-state mirrors, and edge I/O buffer banks. Holds no protocol logic.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tcpa {

using Cycle = std::int64_t;
using AppId = int;

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Dir : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

constexpr Dir opposite(Dir d) {
    switch (d) {
        case Dir::N: return Dir::S;
        case Dir::E: return Dir::W;
        case Dir::S: return Dir::N;
        default:     return Dir::E;
    }
}

constexpr Dir clockwise(Dir d) {
    return static_cast<Dir>((static_cast<int>(d) + 1) % 4);
}

const char* dir_name(Dir d);

/// Small set of directions, used for the invasion tree's child links.
class DirSet {
public:
    void insert(Dir d) { bits_ |= mask(d); }
    void erase(Dir d) { bits_ &= static_cast<std::uint8_t>(~mask(d)); }
    bool contains(Dir d) const { return (bits_ & mask(d)) != 0; }
    int size() const;
    bool empty() const { return bits_ == 0; }
    void clear() { bits_ = 0; }

private:
    static std::uint8_t mask(Dir d) { return static_cast<std::uint8_t>(1u << static_cast<int>(d)); }
    std::uint8_t bits_ = 0;
};

struct Coord {
    int row = 0;
    int col = 0;

    friend bool operator==(const Coord&, const Coord&) = default;
    friend auto operator<=>(const Coord&, const Coord&) = default;
};

Coord step_toward(Coord c, Dir d);
std::string to_string(Coord c);

enum class ICtrlKind { FSM, Programmable };

struct ArrayConfig {
    int rows = 4;
    int cols = 4;
    ICtrlKind ictrl_kind = ICtrlKind::FSM;
    int hop_latency_fsm = 1;
    int hop_latency_prog = 4;
    std::vector<Coord> seed_candidates;
    int control_channels = 1;   // 1-bit control network; informational
    int data_channels = 2;      // 16-bit data channels; informational
    int buffer_banks = 2;       // banks per array edge
    int buffer_bank_words = 1024;

    int hop_latency() const {
        return ictrl_kind == ICtrlKind::FSM ? hop_latency_fsm : hop_latency_prog;
    }

    bool on_border(Coord c) const {
        return c.row == 0 || c.row == rows - 1 || c.col == 0 || c.col == cols - 1;
    }

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

enum class Phase : std::uint8_t { Idle, Invading, Claimed, Retreating };

/// Invasion-controller state of one PE. parent/child links record the path
/// the invasion wave paved; the retreat wave follows the same tree.
struct ICtrlState {
    Phase phase = Phase::Idle;
    AppId app = 0;                    // meaningful unless Idle
    std::optional<Dir> parent_dir;    // toward the PE that invaded this one
    DirSet child_dirs;
    int pending_confirms = 0;

    void reset() { *this = ICtrlState{}; }
};

enum class PowerState : std::uint8_t { Off, SwitchingOn, On, SwitchingOff };

const char* power_state_name(PowerState s);

struct ProcessorElement {
    Coord coord;
    ICtrlState ictrl;
    PowerState pe_power = PowerState::Off;     // mirror of the PE power domain
    PowerState ictrl_power = PowerState::Off;  // mirror of the iCtrl power domain
    std::optional<AppId> owner;
    std::optional<int> program;                // set by infect
    bool quarantined = false;
};

enum class BufferMode { FIFO, RAM };

struct IOBufferBank {
    Dir edge;
    int index = 0;
    BufferMode mode = BufferMode::FIFO;
    int size_words = 0;
    std::optional<int> concat_group;
};

class ArrayState {
public:
    explicit ArrayState(ArrayConfig config);

    const ArrayConfig& config() const { return config_; }
    int rows() const { return config_.rows; }
    int cols() const { return config_.cols; }
    int pe_count() const { return config_.rows * config_.cols; }

    bool in_bounds(Coord c) const {
        return c.row >= 0 && c.row < config_.rows && c.col >= 0 && c.col < config_.cols;
    }

    ProcessorElement& at(Coord c);
    const ProcessorElement& at(Coord c) const;

    /// In-bounds 4-neighborhood in fixed N,E,S,W order.
    std::vector<std::pair<Dir, Coord>> neighbors(Coord c) const;

    /// A PE can join a new invasion iff its controller is Idle and it is
    /// not quarantined by a fault-tolerance migration.
    bool available(Coord c) const {
        const ProcessorElement& pe = at(c);
        return pe.ictrl.phase == Phase::Idle && !pe.quarantined;
    }

    const std::vector<IOBufferBank>& buffer_banks() const { return banks_; }
    std::vector<ProcessorElement>& pes() { return pes_; }
    const std::vector<ProcessorElement>& pes() const { return pes_; }

private:
    ArrayConfig config_;
    std::vector<ProcessorElement> pes_;  // row-major
    std::vector<IOBufferBank> banks_;
};

/// Validates the config and instantiates the grid: all PEs Idle, all power
/// mirrors Off, buffer banks placed on each edge.
ArrayState build_array(const ArrayConfig& config);

}  // namespace tcpa
