#include "tcpa/array.hpp"

#include <algorithm>
#include <set>

namespace tcpa {

const char* dir_name(Dir d) {
    switch (d) {
        case Dir::N: return "N";
        case Dir::E: return "E";
        case Dir::S: return "S";
        default:     return "W";
    }
}

int DirSet::size() const {
    int n = 0;
    for (int i = 0; i < 4; ++i)
        if (bits_ & (1u << i)) ++n;
    return n;
}

Coord step_toward(Coord c, Dir d) {
    switch (d) {
        case Dir::N: return {c.row - 1, c.col};
        case Dir::E: return {c.row, c.col + 1};
        case Dir::S: return {c.row + 1, c.col};
        default:     return {c.row, c.col - 1};
    }
}

std::string to_string(Coord c) {
    return "(" + std::to_string(c.row) + "," + std::to_string(c.col) + ")";
}

const char* power_state_name(PowerState s) {
    switch (s) {
        case PowerState::Off:          return "off";
        case PowerState::SwitchingOn:  return "switching_on";
        case PowerState::On:           return "on";
        default:                       return "switching_off";
    }
}

void ArrayConfig::validate() const {
    if (rows < 1) throw ConfigError("array.rows: must be >= 1, got " + std::to_string(rows));
    if (cols < 1) throw ConfigError("array.cols: must be >= 1, got " + std::to_string(cols));
    if (hop_latency_fsm < 1) throw ConfigError("array.hop_latency_fsm: must be >= 1");
    if (hop_latency_prog < 1) throw ConfigError("array.hop_latency_prog: must be >= 1");
    if (control_channels < 1) throw ConfigError("array.control_channels: must be >= 1");
    if (data_channels < 1) throw ConfigError("array.data_channels: must be >= 1");
    if (buffer_banks < 0) throw ConfigError("array.buffer_banks: must be >= 0");
    if (seed_candidates.empty())
        throw ConfigError("array.seed_candidates: at least one border seed is required");

    std::set<Coord> seen;
    for (const Coord& c : seed_candidates) {
        if (c.row < 0 || c.row >= rows || c.col < 0 || c.col >= cols)
            throw ConfigError("array.seed_candidates: " + to_string(c) + " is out of bounds");
        if (!on_border(c))
            throw ConfigError("array.seed_candidates: " + to_string(c) +
                              " is not on the array border");
        if (!seen.insert(c).second)
            throw ConfigError("array.seed_candidates: duplicate entry " + to_string(c));
    }
}

ArrayState::ArrayState(ArrayConfig config) : config_(std::move(config)) {
    pes_.resize(static_cast<std::size_t>(config_.rows) * config_.cols);
    for (int r = 0; r < config_.rows; ++r)
        for (int c = 0; c < config_.cols; ++c)
            pes_[static_cast<std::size_t>(r) * config_.cols + c].coord = {r, c};

    for (Dir edge : {Dir::N, Dir::E, Dir::S, Dir::W})
        for (int i = 0; i < config_.buffer_banks; ++i)
            banks_.push_back({edge, i, BufferMode::FIFO, config_.buffer_bank_words, std::nullopt});
}

ProcessorElement& ArrayState::at(Coord c) {
    return pes_[static_cast<std::size_t>(c.row) * config_.cols + c.col];
}

const ProcessorElement& ArrayState::at(Coord c) const {
    return pes_[static_cast<std::size_t>(c.row) * config_.cols + c.col];
}

std::vector<std::pair<Dir, Coord>> ArrayState::neighbors(Coord c) const {
    std::vector<std::pair<Dir, Coord>> out;
    out.reserve(4);
    for (Dir d : {Dir::N, Dir::E, Dir::S, Dir::W}) {
        Coord n = step_toward(c, d);
        if (in_bounds(n)) out.emplace_back(d, n);
    }
    return out;
}

ArrayState build_array(const ArrayConfig& config) {
    config.validate();
    return ArrayState(config);
}

}  // namespace tcpa
