#include "prpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "prpo/rng.hpp"

namespace prpo {

namespace {

// Seed stream tags; every phase owns an independent derived stream.
constexpr uint64_t kTagInit = 1;
constexpr uint64_t kTagColdData = 2;
constexpr uint64_t kTagColdShuffle = 3;
constexpr uint64_t kTagEval = 4;
constexpr uint64_t kTagEpisode = 5;
constexpr uint64_t kTagRollout = 6;

void adam_step(PolicyParams& params, AdamState& adam, const std::vector<double>& grad,
               double lr, double beta1, double beta2, double eps) {
    if (adam.m.empty()) {
        adam.m.assign(params.weights.size(), 0.0);
        adam.v.assign(params.weights.size(), 0.0);
    }
    ++adam.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.t));
    for (size_t i = 0; i < params.weights.size(); ++i) {
        adam.m[i] = beta1 * adam.m[i] + (1.0 - beta1) * grad[i];
        adam.v[i] = beta2 * adam.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        params.weights[i] += lr * (adam.m[i] / bc1) / (std::sqrt(adam.v[i] / bc2) + eps);
    }
    ++params.version;
}

double l2_norm(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::sqrt(s);
}

}  // namespace

void TrainConfig::validate() const {
    if (group_size < 2) throw ConfigError("train: group_size must be >= 2, got " + std::to_string(group_size));
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (updates < 0) throw ConfigError("train: updates must be >= 0");
    if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("train: clip_eps must be in (0,1)");
    if (kl_coef < 0.0) throw ConfigError("train: kl_coef must be >= 0");
    if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
    if (reward.alpha < 0.0) throw ConfigError("train: reward.alpha must be >= 0");
    if (reward.beta < 0.0) throw ConfigError("train: reward.beta must be >= 0");
    if (reward.l_max < 1) throw ConfigError("train: reward.l_max must be >= 1");
    if (max_len_extra < 1) throw ConfigError("train: max_len_extra must be >= 1");
    if (cold_start.enabled) {
        if (cold_start.episodes < 1) throw ConfigError("train: cold_start.episodes must be >= 1");
        if (cold_start.epochs < 0) throw ConfigError("train: cold_start.epochs must be >= 0");
        if (cold_start.minibatch < 1) throw ConfigError("train: cold_start.minibatch must be >= 1");
        if (cold_start.lr <= 0.0) throw ConfigError("train: cold_start.lr must be > 0");
    }
    if (eval_episodes < 1) throw ConfigError("train: eval_episodes must be >= 1");
    schedule.validate();
}

RolloutStats rollout_phase(const PolicyParams& params, const Episode& episode,
                           const TrainConfig& cfg, uint64_t seed, TrajectoryBuffer& buffer,
                           CounterSink& sink) {
    const Vocab v = episode.spec.vocab();
    buffer.vocab = v;
    const int T = episode.spec.num_segments;
    const int G = cfg.group_size;
    if (G < 2) throw ConfigError("rollout_phase: group_size must be >= 2");
    const int max_len = cfg.max_len();

    RolloutStats stats;
    stats.step_accuracy.assign(T, 0.0);

    std::vector<Token> shared_memory;                 // shared-state propagation
    std::vector<std::vector<Token>> chain_memory(G);  // branch mode lineages

    const size_t first_entry = buffer.entries.size();
    std::vector<double> terminal_advantages;

    double reward_sum = 0.0;
    uint64_t reward_n = 0;
    uint64_t formats = 0;
    double mem_tokens = 0.0;
    double entropy_sum = 0.0;
    int selections = 0;

    for (int t = 0; t < T; ++t) {
        std::vector<Trajectory> group(G);
        std::vector<GenContext> ctxs(G);
        for (int i = 0; i < G; ++i) {
            GenContext ctx;
            ctx.query = episode.query;
            ctx.segment = episode.segments[t];
            ctx.memory = cfg.mode_psp ? shared_memory : chain_memory[i];
            ctx.episode_id = episode.id;
            ctx.step = t;
            // Shared-state mode: all G rollouts extend one lineage, one
            // prefill per step. Branch mode: per-chain lineages after the
            // first step, so each chain pays its own prefill even when two
            // memories coincide.
            ctx.lineage = (cfg.mode_psp || t == 0) ? 0 : i + 1;
            ctxs[i] = std::move(ctx);
            group[i] = generate(params, v, ctxs[i], max_len,
                                derive_seed(seed, {1, static_cast<uint64_t>(t), static_cast<uint64_t>(i)}),
                                sink);
        }

        const bool is_final = t == T - 1;
        const bool carries_reward = cfg.reward.mode == RewardMode::kCascading || is_final;
        std::vector<double> rewards(G, 0.0);
        if (carries_reward) {
            sink.reward(static_cast<uint64_t>(G));
            for (int i = 0; i < G; ++i) {
                const RewardBreakdown r = step_reward(group[i].parsed, episode.gold_answer, cfg.reward);
                rewards[i] = r.total;
                reward_sum += r.total;
                ++reward_n;
            }
        }
        std::vector<double> advantages =
            carries_reward ? group_advantages(rewards) : std::vector<double>(G, 0.0);
        if (is_final) terminal_advantages = advantages;

        std::vector<std::vector<Token>> memories;
        if (!is_final) {
            memories.resize(G);
            for (int i = 0; i < G; ++i) memories[i] = group[i].parsed.memory_span;
        }

        for (int i = 0; i < G; ++i) {
            formats += group[i].parsed.well_formed ? 1 : 0;
            mem_tokens += token_count(group[i].parsed.memory_span);
            if (group[i].parsed.answer.value_or(0) == episode.gold_answer)
                stats.step_accuracy[t] += 1.0;
            buffer.entries.push_back(
                {std::move(group[i]), std::move(ctxs[i]), advantages[i], t, episode.id, i});
        }
        stats.step_accuracy[t] /= static_cast<double>(G);

        if (!is_final) {
            if (cfg.mode_psp) {
                const double tau = temperature(cfg.schedule, t);
                const std::vector<double> probs = selection_probs(advantages, tau);
                for (double p : probs)
                    if (p > 0.0) entropy_sum -= p * std::log(p);
                ++selections;
                const size_t sel = select_memory(memories, advantages, tau,
                                                 derive_seed(seed, {2, static_cast<uint64_t>(t)}));
                shared_memory = std::move(memories[sel]);
            } else {
                for (int i = 0; i < G; ++i) chain_memory[i] = std::move(memories[i]);
            }
        }
    }

    // Terminal-reward credit in branch mode: each chain's steps inherit the
    // chain's terminal advantage. With shared-state propagation there is no
    // per-trajectory lineage, so earlier steps keep zero advantage.
    if (cfg.reward.mode == RewardMode::kTerminal && !cfg.mode_psp) {
        for (size_t k = first_entry; k < buffer.entries.size(); ++k) {
            BufferEntry& e = buffer.entries[k];
            if (e.step < T - 1) e.advantage = terminal_advantages[e.chain];
        }
    }

    stats.mean_reward = reward_n > 0 ? reward_sum / static_cast<double>(reward_n) : 0.0;
    stats.format_rate = static_cast<double>(formats) / static_cast<double>(T) / G;
    stats.mean_mem_tokens = mem_tokens / static_cast<double>(T) / G;
    stats.selection_entropy = selections > 0 ? entropy_sum / selections : 0.0;
    return stats;
}

namespace {

// Shared walk for objective and gradient. For each buffer token computes the
// importance ratio against the sampling-time logprob and the clipped-min
// branch choice; the gradient path additionally accumulates
// (onehot - softmax) * features with the active coefficient.
struct TokenVisitor {
    const TrainConfig& cfg;
    double surrogate_sum = 0.0;
    double kl_sum = 0.0;
    uint64_t tokens = 0;
    uint64_t clipped = 0;
    double ratio_min = std::numeric_limits<double>::infinity();
    double ratio_max = -std::numeric_limits<double>::infinity();
};

uint64_t count_tokens(const TrajectoryBuffer& buffer) {
    uint64_t n = 0;
    for (const BufferEntry& e : buffer.entries) n += e.trajectory.tokens.size();
    return n;
}

}  // namespace

double grpo_objective(const PolicyParams& params, const TrajectoryBuffer& buffer,
                      const ReferenceSnapshot& ref, const TrainConfig& cfg) {
    if (buffer.entries.empty()) throw ConfigError("grpo: empty trajectory buffer");
    const Vocab& v = buffer.vocab;
    const uint64_t n = count_tokens(buffer);
    double surrogate = 0.0;
    double kl = 0.0;
    for (const BufferEntry& e : buffer.entries) {
        const LogprobResult lp = logprob(params, v, e.ctx, e.trajectory.tokens);
        LogprobResult ref_lp;
        if (cfg.kl_coef != 0.0) ref_lp = logprob(ref.params, v, e.ctx, e.trajectory.tokens);
        for (size_t k = 0; k < e.trajectory.tokens.size(); ++k) {
            const double r = std::exp(lp.per_token[k] - e.trajectory.logprobs[k]);
            const double rc = std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            surrogate += std::min(r * e.advantage, rc * e.advantage);
            if (cfg.kl_coef != 0.0) {
                const double d = ref_lp.per_token[k] - lp.per_token[k];
                kl += std::exp(d) - d - 1.0;
            }
        }
    }
    return surrogate / static_cast<double>(n) - cfg.kl_coef * kl / static_cast<double>(n);
}

std::vector<double> grpo_gradient(const PolicyParams& params, const TrajectoryBuffer& buffer,
                                  const ReferenceSnapshot& ref, const TrainConfig& cfg,
                                  UpdateStats* stats) {
    if (buffer.entries.empty()) throw ConfigError("grpo: empty trajectory buffer");
    const Vocab& v = buffer.vocab;
    const uint64_t n = count_tokens(buffer);
    const double inv_n = 1.0 / static_cast<double>(n);

    std::vector<double> grad(params.weights.size(), 0.0);
    TokenVisitor vis{cfg};

    for (const BufferEntry& e : buffer.entries) {
        const LogprobResult lp = logprob(params, v, e.ctx, e.trajectory.tokens);
        LogprobResult ref_lp;
        if (cfg.kl_coef != 0.0) ref_lp = logprob(ref.params, v, e.ctx, e.trajectory.tokens);
        Token prev = v.bos();
        for (size_t k = 0; k < e.trajectory.tokens.size(); ++k) {
            const Token tok = e.trajectory.tokens[k];
            const double r = std::exp(lp.per_token[k] - e.trajectory.logprobs[k]);
            const double rc = std::clamp(r, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
            const double unclipped = r * e.advantage;
            const double clipped = rc * e.advantage;
            vis.ratio_min = std::min(vis.ratio_min, r);
            vis.ratio_max = std::max(vis.ratio_max, r);
            if (rc != r) ++vis.clipped;
            ++vis.tokens;
            vis.surrogate_sum += std::min(unclipped, clipped);

            // min() picks the unclipped branch (gradient flows) whenever it
            // is not strictly larger; the clipped branch is constant in the
            // parameters.
            double coef = unclipped <= clipped ? e.advantage * r : 0.0;
            if (cfg.kl_coef != 0.0) {
                const double d = ref_lp.per_token[k] - lp.per_token[k];
                vis.kl_sum += std::exp(d) - d - 1.0;
                coef += cfg.kl_coef * (std::exp(d) - 1.0);
            }
            if (coef != 0.0) {
                const SparseFeatures f =
                    featurize_sparse(v, e.ctx.query, e.ctx.segment, e.ctx.memory, prev);
                const std::vector<double> probs = step_probs(params, v, e.ctx, prev);
                const double c = coef * inv_n;
                for (int row = 0; row < params.rows; ++row) {
                    const double w = c * ((row == tok ? 1.0 : 0.0) - probs[row]);
                    double* g = grad.data() + static_cast<size_t>(row) * params.cols;
                    for (const auto& [idx, val] : f.entries) g[idx] += w * val;
                }
            }
            prev = tok;
        }
    }

    if (stats) {
        stats->tokens = vis.tokens;
        stats->surrogate = vis.surrogate_sum * inv_n;
        stats->kl = vis.kl_sum * inv_n;
        stats->objective = stats->surrogate - cfg.kl_coef * stats->kl;
        stats->ratio_min = vis.ratio_min;
        stats->ratio_max = vis.ratio_max;
        stats->clip_fraction = static_cast<double>(vis.clipped) / static_cast<double>(vis.tokens);
        stats->grad_norm = l2_norm(grad);
    }
    return grad;
}

UpdateStats grpo_update(PolicyParams& params, TrajectoryBuffer& buffer,
                        const ReferenceSnapshot& ref, const TrainConfig& cfg, AdamState& adam) {
    UpdateStats stats;
    const std::vector<double> grad = grpo_gradient(params, buffer, ref, cfg, &stats);
    if (!std::isfinite(stats.grad_norm))
        throw NumericalError("grpo_update: non-finite gradient at optimizer step " +
                             std::to_string(adam.t + 1) + ", norm=" + std::to_string(stats.grad_norm));
    adam_step(params, adam, grad, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    buffer.entries.clear();
    return stats;
}

std::vector<Episode> stratified_episodes(const EpisodeSpec& spec, uint64_t seed, int count) {
    spec.validate();
    std::vector<Episode> out;
    out.reserve(count);
    const int choices = spec.num_choices;
    const int segments = spec.num_segments;
    for (int j = 0; j < count; ++j) {
        const int want_gold = j % choices;
        const int want_evidence = (j / choices) % segments;
        for (uint64_t trial = 0;; ++trial) {
            Episode ep = generate_episode(
                spec, derive_seed(seed, {static_cast<uint64_t>(j), trial}));
            if (ep.gold_answer == want_gold && ep.evidence_segment == want_evidence) {
                out.push_back(std::move(ep));
                break;
            }
        }
    }
    return out;
}

std::vector<SupervisedStep> make_supervised_set(const std::vector<Episode>& episodes) {
    std::vector<SupervisedStep> out;
    for (const Episode& ep : episodes) {
        const OracleTrace trace = oracle_trace(ep);
        const Token fact = static_cast<Token>(ep.gold_answer);
        for (int t = 0; t < ep.spec.num_segments; ++t) {
            SupervisedStep s;
            s.ctx.query = ep.query;
            s.ctx.segment = ep.segments[t];
            if (t > 0 && t - 1 >= ep.evidence_segment) s.ctx.memory = {fact};
            s.ctx.episode_id = ep.id;
            s.ctx.step = t;
            s.target = trace.outputs[t];
            out.push_back(std::move(s));
        }
    }
    return out;
}

ColdStartResult cold_start(PolicyParams& params, const Vocab& v,
                           const std::vector<SupervisedStep>& steps,
                           const ColdStartConfig& cold_cfg, const TrainConfig& cfg,
                           uint64_t seed) {
    if (steps.empty()) throw ConfigError("cold_start: empty supervised set");
    AdamState adam;
    ColdStartResult res;

    const auto full_mean_logprob = [&]() {
        double total = 0.0;
        uint64_t tokens = 0;
        for (const SupervisedStep& s : steps) {
            total += logprob(params, v, s.ctx, s.target).total;
            tokens += s.target.size();
        }
        return total / static_cast<double>(tokens);
    };

    std::vector<size_t> order(steps.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cold_cfg.epochs; ++epoch) {
        Rng rng(derive_seed(seed, {kTagColdShuffle, static_cast<uint64_t>(epoch)}));
        for (size_t i = order.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(rng.next_below(static_cast<int>(i)));
            std::swap(order[i - 1], order[j]);
        }
        for (size_t start = 0; start < order.size(); start += cold_cfg.minibatch) {
            const size_t end = std::min(order.size(), start + cold_cfg.minibatch);
            std::vector<double> grad(params.weights.size(), 0.0);
            uint64_t tokens = 0;
            for (size_t k = start; k < end; ++k) {
                const SupervisedStep& s = steps[order[k]];
                const std::vector<double> g = grad_logprob(params, v, s.ctx, s.target);
                for (size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
                tokens += s.target.size();
            }
            for (double& g : grad) g /= static_cast<double>(tokens);
            adam_step(params, adam, grad, cold_cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        }
        res.epoch_mean_logprob.push_back(full_mean_logprob());
    }
    res.final_mean_logprob =
        res.epoch_mean_logprob.empty() ? full_mean_logprob() : res.epoch_mean_logprob.back();
    return res;
}

EvalResult evaluate(const PolicyParams& params, const std::vector<Episode>& episodes,
                    int max_len) {
    EvalResult res;
    if (episodes.empty()) return res;
    const Vocab v = episodes.front().spec.vocab();
    const int T = episodes.front().spec.num_segments;
    res.step_accuracy.assign(T, 0.0);
    CounterSink sink;  // inference cost is not part of the training counters
    uint64_t outputs = 0;
    uint64_t formats = 0;
    double mem_tokens = 0.0;

    for (const Episode& ep : episodes) {
        std::vector<Token> memory;
        for (int t = 0; t < T; ++t) {
            GenContext ctx;
            ctx.query = ep.query;
            ctx.segment = ep.segments[t];
            ctx.memory = memory;
            ctx.episode_id = ep.id;
            ctx.step = t;
            const Trajectory traj =
                generate(params, v, ctx, max_len, 0, sink, SampleMode::kGreedy);
            if (traj.parsed.answer.value_or(0) == ep.gold_answer) res.step_accuracy[t] += 1.0;
            formats += traj.parsed.well_formed ? 1 : 0;
            mem_tokens += token_count(traj.parsed.memory_span);
            ++outputs;
            memory = traj.parsed.memory_span;
        }
    }
    for (double& a : res.step_accuracy) a /= static_cast<double>(episodes.size());
    res.final_accuracy = res.step_accuracy.back();
    res.format_rate = static_cast<double>(formats) / static_cast<double>(outputs);
    res.mean_mem_tokens = mem_tokens / static_cast<double>(outputs);
    return res;
}

TrainResult train(const TrainConfig& cfg, const EpisodeSpec& env_spec, uint64_t master_seed,
                  const MetricsSink& sink) {
    cfg.validate();
    env_spec.validate();
    const Vocab v = env_spec.vocab();

    const auto emit = [&](const nlohmann::json& j) {
        if (sink) sink(j.dump());
    };

    TrainResult result;
    result.params = cfg.init_scale > 0.0
                        ? gaussian_params(v, cfg.init_scale, derive_seed(master_seed, {kTagInit}))
                        : zero_params(v);

    std::vector<Episode> eval_set;
    eval_set.reserve(cfg.eval_episodes);
    for (int j = 0; j < cfg.eval_episodes; ++j)
        eval_set.push_back(
            generate_episode(env_spec, derive_seed(master_seed, {kTagEval, static_cast<uint64_t>(j)})));

    if (cfg.cold_start.enabled && cfg.cold_start.epochs > 0) {
        const std::vector<Episode> cold_eps =
            stratified_episodes(env_spec, derive_seed(master_seed, {kTagColdData}), cfg.cold_start.episodes);
        const std::vector<SupervisedStep> steps = make_supervised_set(cold_eps);
        const ColdStartResult cs =
            cold_start(result.params, v, steps, cfg.cold_start, cfg, derive_seed(master_seed, {kTagColdData}));
        result.cold_start_final_logprob = cs.final_mean_logprob;
        for (size_t e = 0; e < cs.epoch_mean_logprob.size(); ++e)
            emit({{"phase", "cold_start"},
                  {"epoch", e},
                  {"mean_logprob", cs.epoch_mean_logprob[e]},
                  {"version", result.params.version}});
    }

    const ReferenceSnapshot ref = snapshot(result.params);
    AdamState adam;
    TrajectoryBuffer buffer;
    buffer.vocab = v;
    CounterSink counters;

    EvalResult eval = evaluate(result.params, eval_set, cfg.max_len());
    if (eval.final_accuracy >= cfg.converge_acc) result.convergence_update = 0;
    emit({{"phase", "update"},
          {"update", 0},
          {"eval_step_accuracy", eval.step_accuracy},
          {"eval_final_accuracy", eval.final_accuracy},
          {"eval_format_rate", eval.format_rate},
          {"eval_mem_tokens", eval.mean_mem_tokens},
          {"version", result.params.version}});

    for (int u = 1; u <= cfg.updates; ++u) {
        double mean_reward = 0.0;
        double format_rate = 0.0;
        double selection_entropy = 0.0;
        double mem_tokens = 0.0;
        std::vector<double> step_acc(env_spec.num_segments, 0.0);
        for (int b = 0; b < cfg.batch; ++b) {
            const Episode ep = generate_episode(
                env_spec, derive_seed(master_seed, {kTagEpisode, static_cast<uint64_t>(u),
                                                    static_cast<uint64_t>(b)}));
            const RolloutStats rs = rollout_phase(
                result.params, ep, cfg,
                derive_seed(master_seed, {kTagRollout, static_cast<uint64_t>(u), static_cast<uint64_t>(b)}),
                buffer, counters);
            mean_reward += rs.mean_reward;
            format_rate += rs.format_rate;
            selection_entropy += rs.selection_entropy;
            mem_tokens += rs.mean_mem_tokens;
            for (int t = 0; t < env_spec.num_segments; ++t) step_acc[t] += rs.step_accuracy[t];
            ++result.episodes_processed;
        }
        mean_reward /= cfg.batch;
        format_rate /= cfg.batch;
        selection_entropy /= cfg.batch;
        mem_tokens /= cfg.batch;
        for (double& a : step_acc) a /= cfg.batch;

        const UpdateStats us = grpo_update(result.params, buffer, ref, cfg, adam);

        eval = evaluate(result.params, eval_set, cfg.max_len());
        if (result.convergence_update < 0 && eval.final_accuracy >= cfg.converge_acc)
            result.convergence_update = u;

        emit({{"phase", "update"},
              {"update", u},
              {"mean_reward", mean_reward},
              {"format_rate", format_rate},
              {"step_accuracy", step_acc},
              {"selection_entropy", selection_entropy},
              {"mean_mem_tokens", mem_tokens},
              {"surrogate", us.surrogate},
              {"kl", us.kl},
              {"objective", us.objective},
              {"grad_norm", us.grad_norm},
              {"ratio_min", us.ratio_min},
              {"ratio_max", us.ratio_max},
              {"clip_fraction", us.clip_fraction},
              {"buffer_tokens", us.tokens},
              {"prefill_events", counters.counters().prefill_events},
              {"decode_events", counters.counters().decode_events},
              {"reward_events", counters.counters().reward_events},
              {"eval_step_accuracy", eval.step_accuracy},
              {"eval_final_accuracy", eval.final_accuracy},
              {"eval_format_rate", eval.format_rate},
              {"eval_mem_tokens", eval.mean_mem_tokens},
              {"version", result.params.version}});
    }

    result.counters = counters.counters();
    result.final_eval = eval;
    if (result.episodes_processed > 0)
        result.reward_density_per_member =
            static_cast<double>(result.counters.reward_events) /
            (static_cast<double>(result.episodes_processed) * cfg.group_size);
    return result;
}

}  // namespace prpo
