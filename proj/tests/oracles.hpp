// Test-side oracles, kept independent of the simulator implementation:
// straightforward enumerations and closed forms used to freeze expected
// values.
#pragma once

#include <functional>
#include <optional>
#include <set>
#include <vector>

#include "tcpa/array.hpp"

namespace oracles {

using tcpa::Coord;
using tcpa::Dir;

// Walks the linear-invasion preference rule (first free neighbor in
// N,E,S,W order at the seed; straight ahead then clockwise afterwards)
// over an availability predicate. Returns the visited path.
inline std::vector<Coord> snake_path(int rows, int cols, Coord seed, int count,
                                     const std::function<bool(Coord)>& available) {
    auto in_bounds = [&](Coord c) {
        return c.row >= 0 && c.row < rows && c.col >= 0 && c.col < cols;
    };
    auto step = [](Coord c, Dir d) {
        switch (d) {
            case Dir::N: return Coord{c.row - 1, c.col};
            case Dir::E: return Coord{c.row, c.col + 1};
            case Dir::S: return Coord{c.row + 1, c.col};
            default:     return Coord{c.row, c.col - 1};
        }
    };
    auto cw = [](Dir d) { return static_cast<Dir>((static_cast<int>(d) + 1) % 4); };

    std::vector<Coord> path{seed};
    std::set<Coord> visited{seed};
    std::optional<Dir> heading;
    while (static_cast<int>(path.size()) < count) {
        std::optional<Dir> pick;
        Dir d = heading.value_or(Dir::N);
        for (int i = 0; i < 4; ++i) {
            Coord t = step(path.back(), d);
            if (in_bounds(t) && available(t) && !visited.count(t)) {
                pick = d;
                break;
            }
            d = cw(d);
        }
        if (!pick) break;
        Coord next = step(path.back(), *pick);
        path.push_back(next);
        visited.insert(next);
        heading = *pick;
    }
    return path;
}

// Expected end-to-end latency of an unobstructed Linear{n} invasion.
inline long linear_latency(int seed_select_cycles, int hop_latency, int n) {
    return seed_select_cycles + 2L * hop_latency * (n - 1);
}

// Direct FIR convolution on 16-bit wrap-around words.
inline std::vector<std::uint16_t> fir(const std::vector<std::uint16_t>& taps,
                                      const std::vector<std::uint16_t>& x) {
    std::vector<std::uint16_t> y(x.size(), 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::uint16_t acc = 0;
        for (std::size_t j = 0; j < taps.size() && j <= i; ++j)
            acc = static_cast<std::uint16_t>(
                acc + static_cast<std::uint16_t>(taps[j] * x[i - j]));
        y[i] = acc;
    }
    return y;
}

}  // namespace oracles
