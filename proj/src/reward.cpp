#include "prpo/reward.hpp"

#include <algorithm>

namespace prpo {

int consistency_reward(const ParsedOutput& parsed, int gold) {
    return (parsed.answer && *parsed.answer == gold) ? 1 : 0;
}

int format_reward(const ParsedOutput& parsed) {
    return parsed.well_formed ? 1 : 0;
}

double mem_penalty(int count, int l_max) {
    return static_cast<double>(std::max(0, count - l_max));
}

RewardBreakdown step_reward(const ParsedOutput& parsed, int gold, const RewardConfig& cfg) {
    RewardBreakdown r;
    r.cons = consistency_reward(parsed, gold);
    r.format = format_reward(parsed);
    r.mem_penalty = mem_penalty(token_count(parsed.memory_span), cfg.l_max);
    r.total = cfg.alpha * r.cons + r.format - cfg.beta * r.mem_penalty;
    return r;
}

std::vector<std::vector<RewardBreakdown>> assign_rewards(
    const std::vector<std::vector<ParsedOutput>>& step_groups, int gold, const RewardConfig& cfg) {
    std::vector<std::vector<RewardBreakdown>> out(step_groups.size());
    for (size_t t = 0; t < step_groups.size(); ++t) {
        const bool rewarded = cfg.mode == RewardMode::kCascading || t + 1 == step_groups.size();
        out[t].resize(step_groups[t].size());
        if (!rewarded) continue;  // terminal mode: earlier steps stay all-zero
        for (size_t i = 0; i < step_groups[t].size(); ++i)
            out[t][i] = step_reward(step_groups[t][i], gold, cfg);
    }
    return out;
}

}  // namespace prpo
