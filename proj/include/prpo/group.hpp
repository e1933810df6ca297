#pragma once

#include <cstdint>
#include <vector>

#include "prpo/vocab.hpp"

namespace prpo {

constexpr double kDefaultEpsStd = 1e-8;

// One group's rewards z-scored against the group mean and population std.
struct AdvantageGroup {
    std::vector<double> rewards;
    std::vector<double> advantages;
    double eps_std = kDefaultEpsStd;
};

// Decaying softmax temperature tau_t = tau0 * gamma^t: wide exploration on
// early segments, near-greedy selection late.
struct TemperatureSchedule {
    double tau0 = 1.0;
    double gamma = 0.9;

    void validate() const {
        if (tau0 <= 0.0) throw ConfigError("schedule: tau0 must be > 0");
        if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("schedule: gamma must be in (0,1)");
    }
};

// Group-relative advantages. A constant group short-circuits to exact zeros
// instead of dividing noise by eps.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std = kDefaultEpsStd);

// softmax(advantages / tau) with max-subtraction for overflow safety.
std::vector<double> selection_probs(const std::vector<double>& advantages, double tau);

double temperature(const TemperatureSchedule& schedule, int t);

// Samples the index of the single memory state to propagate. tau == 0 is the
// greedy sentinel: argmax advantage, lowest index on ties.
size_t select_memory(const std::vector<std::vector<Token>>& memories,
                     const std::vector<double>& advantages, double tau, uint64_t seed);

}  // namespace prpo
