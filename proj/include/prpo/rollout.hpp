#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prpo/counters.hpp"
#include "prpo/vocab.hpp"

namespace prpo {

struct PolicyParams;  // policy.hpp

// One generation context: everything the policy conditions on at one step.
// The id folds episode, step, memory lineage and memory content, so equal
// ids mean "the same prefill work". In shared-state mode all G rollouts of a
// step carry the same lineage (one prefill); in branch mode each chain after
// the first step carries its own.
struct GenContext {
    std::vector<Token> query;
    std::vector<Token> segment;
    std::vector<Token> memory;
    uint64_t episode_id = 0;
    int step = 0;
    int lineage = 0;

    uint64_t context_id() const;
};

struct ParsedOutput {
    std::vector<Token> memory_span;
    std::optional<int> answer;
    bool well_formed = false;
};

struct Trajectory {
    std::vector<Token> tokens;     // includes the terminal STOP when sampled
    std::vector<double> logprobs;  // one per emitted token, each <= 0
    ParsedOutput parsed;
    uint64_t context_id = 0;
};

enum class SampleMode { kSample, kGreedy };

// Grammar: <memory> body </memory> <answer> choice </answer>, optionally
// followed by one trailing STOP. Body may hold anything except tags and
// STOP. Malformation is data, not an error: the parser is total and still
// extracts memory and answer best-effort (the answer region must contain
// exactly one choice marker to count).
ParsedOutput parse_output(const Vocab& v, const std::vector<Token>& tokens);

// Canonical serialization of a parsed pair back through the grammar
// (no trailing STOP). Round-trips with parse_output on well-formed input.
std::vector<Token> render_output(const Vocab& v, const std::vector<Token>& memory_span,
                                 std::optional<int> answer);

int token_count(const std::vector<Token>& memory_span);

// Autoregressive sampler over an arbitrary next-token logit function.
// Stops after emitting `stop` or at max_len. Kept policy-agnostic so tiny
// instances can be enumerated exactly in tests.
using LogitsFn = std::function<std::vector<double>(const std::vector<Token>& prefix)>;

struct SampledSequence {
    std::vector<Token> tokens;
    std::vector<double> logprobs;
};

SampledSequence sample_sequence(const LogitsFn& logits_fn, int vocab_total, Token stop,
                                int max_len, uint64_t seed, SampleMode mode = SampleMode::kSample);

// Rollout of one trajectory from the linear-softmax policy. Reports exactly
// one prefill event (deduplicated by context id) and one decode event per
// emitted token to the sink.
Trajectory generate(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                    int max_len, uint64_t seed, CounterSink& sink,
                    SampleMode mode = SampleMode::kSample);

// Line-delimited trajectory records for debugging and replay.
std::string trajectory_to_json_line(const Trajectory& t);

}  // namespace prpo
