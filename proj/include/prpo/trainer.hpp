#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prpo/counters.hpp"
#include "prpo/env.hpp"
#include "prpo/group.hpp"
#include "prpo/policy.hpp"
#include "prpo/reward.hpp"
#include "prpo/rollout.hpp"

namespace prpo {

struct ColdStartConfig {
    bool enabled = true;
    int episodes = 16;
    int epochs = 60;
    int minibatch = 16;
    double lr = 0.05;
};

struct TrainConfig {
    int group_size = 8;  // G
    int batch = 16;      // episodes pooled per update
    int updates = 100;
    RewardConfig reward;
    TemperatureSchedule schedule;
    double clip_eps = 0.2;
    double kl_coef = 0.0;
    double lr = 1e-3;
    bool mode_psp = true;  // off = per-chain memory lineages (vanilla branch mode)
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int max_len_extra = 8;  // rollout budget = l_max + extra, so MemPenalty is reachable
    double init_scale = 0.0;  // 0 = zero init
    ColdStartConfig cold_start;
    int eval_episodes = 64;
    double converge_acc = 0.80;

    int max_len() const { return reward.l_max + max_len_extra; }
    void validate() const;
};

struct BufferEntry {
    Trajectory trajectory;
    GenContext ctx;
    double advantage = 0.0;
    int step = 0;
    uint64_t episode_id = 0;
    int chain = 0;
};

struct TrajectoryBuffer {
    Vocab vocab;
    std::vector<BufferEntry> entries;
};

struct RolloutStats {
    double mean_reward = 0.0;           // over reward evaluations that carried signal
    double format_rate = 0.0;           // over all T*G trajectories
    std::vector<double> step_accuracy;  // provisional answer accuracy per step
    double selection_entropy = 0.0;     // mean entropy of selection distributions
    double mean_mem_tokens = 0.0;
};

// Algorithm core, one episode: per segment, roll out a group of G
// trajectories, reward them per the configured mode, z-score within the
// group, and either propagate one advantage-sampled memory (shared-state
// mode) or let each chain keep its own lineage (branch mode). Terminal-only
// reward in branch mode broadcasts the final advantage down each chain; in
// shared-state mode earlier steps carry zero advantage.
RolloutStats rollout_phase(const PolicyParams& params, const Episode& episode,
                           const TrainConfig& cfg, uint64_t seed, TrajectoryBuffer& buffer,
                           CounterSink& sink);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    uint64_t t = 0;
};

struct UpdateStats {
    double surrogate = 0.0;
    double kl = 0.0;
    double objective = 0.0;
    double grad_norm = 0.0;
    double ratio_min = 1.0;
    double ratio_max = 1.0;
    double clip_fraction = 0.0;
    uint64_t tokens = 0;
};

// Clipped-ratio surrogate over the buffer, token-level, with each
// trajectory's scalar advantage broadcast to its tokens:
//   mean over tokens of min(r * A, clip(r, 1-eps, 1+eps) * A) - kl_coef * KL
// Exposed as a pure function so gradient checks can finite-difference it.
double grpo_objective(const PolicyParams& params, const TrajectoryBuffer& buffer,
                      const ReferenceSnapshot& ref, const TrainConfig& cfg);

std::vector<double> grpo_gradient(const PolicyParams& params, const TrajectoryBuffer& buffer,
                                  const ReferenceSnapshot& ref, const TrainConfig& cfg,
                                  UpdateStats* stats = nullptr);

// One ascent step on the buffer (single epoch), then the buffer is cleared.
UpdateStats grpo_update(PolicyParams& params, TrajectoryBuffer& buffer,
                        const ReferenceSnapshot& ref, const TrainConfig& cfg, AdamState& adam);

struct SupervisedStep {
    GenContext ctx;
    std::vector<Token> target;
};

std::vector<SupervisedStep> make_supervised_set(const std::vector<Episode>& episodes);

// Episode corpus with (gold answer, evidence position) cells filled
// round-robin, so a small supervised set still covers every fact token and
// every retention distance. Used for the cold-start data.
std::vector<Episode> stratified_episodes(const EpisodeSpec& spec, uint64_t seed, int count);

struct ColdStartResult {
    std::vector<double> epoch_mean_logprob;  // full-set mean per-token logprob after each epoch
    double final_mean_logprob = 0.0;
};

// Supervised warm start: gradient ascent on mean per-token logprob of the
// oracle outputs, minibatched Adam with a seeded shuffle.
ColdStartResult cold_start(PolicyParams& params, const Vocab& v,
                           const std::vector<SupervisedStep>& steps,
                           const ColdStartConfig& cold_cfg, const TrainConfig& cfg,
                           uint64_t seed);

struct EvalResult {
    std::vector<double> step_accuracy;
    double final_accuracy = 0.0;
    double format_rate = 0.0;
    double mean_mem_tokens = 0.0;
};

// Greedy single-chain inference over an episode set. Accuracy uses the
// parsed provisional answer, falling back to choice 0 when none parses, so
// an untrained policy scores at the 1/C baseline.
EvalResult evaluate(const PolicyParams& params, const std::vector<Episode>& episodes,
                    int max_len);

using MetricsSink = std::function<void(const std::string& json_line)>;

struct TrainResult {
    PolicyParams params;
    CostCounters counters;
    int convergence_update = -1;  // first update count reaching converge_acc, -1 = never
    EvalResult final_eval;
    uint64_t episodes_processed = 0;
    double reward_density_per_member = 0.0;
    double cold_start_final_logprob = 0.0;
};

// Full pipeline: optional cold start, then repeated
// {batch episodes -> rollout_phase -> grpo_update}, greedy held-out eval
// after every update. All randomness derives from the master seed; two runs
// with equal (config, master_seed) emit byte-identical metrics.
TrainResult train(const TrainConfig& cfg, const EpisodeSpec& env_spec, uint64_t master_seed,
                  const MetricsSink& sink = nullptr);

}  // namespace prpo
