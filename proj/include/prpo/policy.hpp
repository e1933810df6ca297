#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "prpo/env.hpp"
#include "prpo/rollout.hpp"

namespace prpo {

// Linear-softmax autoregressive token policy: next-token logits are
// weights * featurize(query, segment, memory, prev_token). One matrix is
// shared across positions; log-probabilities and gradients are closed-form.
struct PolicyParams {
    int rows = 0;  // vocab total
    int cols = 0;  // feature dim
    std::vector<double> weights;  // row-major rows x cols
    uint64_t version = 0;

    double at(int r, int c) const { return weights[static_cast<size_t>(r) * cols + c]; }
    double& at(int r, int c) { return weights[static_cast<size_t>(r) * cols + c]; }
};

PolicyParams zero_params(const Vocab& v);
PolicyParams gaussian_params(const Vocab& v, double scale, uint64_t seed);

// Frozen copy for ratio / KL anchoring; captured once, never mutated.
struct ReferenceSnapshot {
    PolicyParams params;
};

inline ReferenceSnapshot snapshot(const PolicyParams& params) { return ReferenceSnapshot{params}; }

std::vector<double> logits(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                           const std::vector<Token>& prefix);

struct LogprobResult {
    double total = 0.0;
    std::vector<double> per_token;
};

// Log-probability of a full emitted sequence under the params. Recomputes
// exactly what sampling recorded: same feature path, same summation order.
LogprobResult logprob(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                      const std::vector<Token>& tokens);

// Softmax next-token distribution for one step.
std::vector<double> step_probs(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                               Token prev);

// Analytic gradient of total logprob w.r.t. the weights:
// sum_i (onehot(tokens[i]) - softmax_i) outer features_i.
std::vector<double> grad_logprob(const PolicyParams& params, const Vocab& v,
                                 const GenContext& ctx, const std::vector<Token>& tokens);

struct SequenceSample {
    GenContext ctx;
    std::vector<Token> tokens;
};

// Nonnegative per-token KL estimate exp(d) - d - 1 with d = ref_lp - lp,
// averaged over all tokens in the batch.
double kl_divergence(const PolicyParams& params, const ReferenceSnapshot& ref, const Vocab& v,
                     const std::vector<SequenceSample>& samples);

// Text checkpoint with shape header; hexfloat payload round-trips exactly.
void save_params(std::ostream& os, const PolicyParams& params);
PolicyParams load_params(std::istream& is);
void save_params_file(const std::string& path, const PolicyParams& params);
PolicyParams load_params_file(const std::string& path);

}  // namespace prpo
