#pragma once

#include <vector>

#include "prpo/rollout.hpp"

namespace prpo {

// Cascading (per-step) vs terminal-only reward assignment.
enum class RewardMode { kCascading, kTerminal };

struct RewardConfig {
    double alpha = 1.0;
    double beta = 0.005;
    int l_max = 1024;
    RewardMode mode = RewardMode::kCascading;
};

// total = alpha * cons + format - beta * mem_penalty, no hidden scaling.
struct RewardBreakdown {
    int cons = 0;
    int format = 0;
    double mem_penalty = 0.0;
    double total = 0.0;
};

int consistency_reward(const ParsedOutput& parsed, int gold);
int format_reward(const ParsedOutput& parsed);
double mem_penalty(int count, int l_max);
RewardBreakdown step_reward(const ParsedOutput& parsed, int gold, const RewardConfig& cfg);

// Per-step reward assignment over an episode's groups of parsed rollouts.
// Cascading mode rewards every step; terminal mode rewards only the final
// step and gives earlier steps explicit all-zero breakdowns so buffer sizes
// match between modes and only reward density differs.
std::vector<std::vector<RewardBreakdown>> assign_rewards(
    const std::vector<std::vector<ParsedOutput>>& step_groups, int gold, const RewardConfig& cfg);

}  // namespace prpo
