#include "prpo/group.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prpo/rng.hpp"

namespace prpo {

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps_std) {
    const size_t g = rewards.size();
    if (g < 2) throw ConfigError("group_advantages: group size must be >= 2, got " + std::to_string(g));

    const bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                                       [&](double r) { return r == rewards.front(); });
    if (all_equal) return std::vector<double>(g, 0.0);

    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);
    // Divide by max(std, eps) rather than std + eps: keeps the output's
    // population std at exactly 1 for any non-degenerate group while still
    // guarding the near-constant case.
    const double denom = std::max(std::sqrt(var), eps_std);

    std::vector<double> advantages(g);
    for (size_t i = 0; i < g; ++i) advantages[i] = (rewards[i] - mean) / denom;
    return advantages;
}

std::vector<double> selection_probs(const std::vector<double>& advantages, double tau) {
    if (tau <= 0.0) throw ConfigError("selection_probs: tau must be > 0");
    for (double a : advantages)
        if (!std::isfinite(a)) throw NumericalError("selection_probs: non-finite advantage");

    double max_scaled = -std::numeric_limits<double>::infinity();
    for (double a : advantages) max_scaled = std::max(max_scaled, a / tau);
    std::vector<double> probs(advantages.size());
    double z = 0.0;
    for (size_t i = 0; i < advantages.size(); ++i) {
        probs[i] = std::exp(advantages[i] / tau - max_scaled);
        z += probs[i];
    }
    for (double& p : probs) p /= z;
    return probs;
}

double temperature(const TemperatureSchedule& schedule, int t) {
    double tau = schedule.tau0;
    for (int i = 0; i < t; ++i) tau *= schedule.gamma;
    return tau;
}

size_t select_memory(const std::vector<std::vector<Token>>& memories,
                     const std::vector<double>& advantages, double tau, uint64_t seed) {
    if (memories.size() != advantages.size())
        throw ConfigError("select_memory: memories and advantages length mismatch");
    if (advantages.empty()) throw ConfigError("select_memory: empty group");

    if (tau == 0.0) {  // greedy sentinel
        size_t best = 0;
        for (size_t i = 1; i < advantages.size(); ++i)
            if (advantages[i] > advantages[best]) best = i;
        return best;
    }

    const std::vector<double> probs = selection_probs(advantages, tau);
    Rng rng(seed);
    const double u = rng.next_unit();
    double acc = 0.0;
    for (size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

}  // namespace prpo
