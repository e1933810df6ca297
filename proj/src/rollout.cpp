#include "prpo/rollout.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "prpo/policy.hpp"
#include "prpo/rng.hpp"

namespace prpo {

namespace {

uint64_t hash_tokens(uint64_t h, const std::vector<Token>& seq) {
    h = mix64(h ^ seq.size());
    for (Token t : seq) h = mix64(h ^ static_cast<uint64_t>(static_cast<int64_t>(t)));
    return h;
}

}  // namespace

uint64_t GenContext::context_id() const {
    uint64_t h = mix64(episode_id);
    h = mix64(h ^ static_cast<uint64_t>(step));
    h = mix64(h ^ static_cast<uint64_t>(lineage));
    h = hash_tokens(h, query);
    h = hash_tokens(h, segment);
    h = hash_tokens(h, memory);
    return h;
}

ParsedOutput parse_output(const Vocab& v, const std::vector<Token>& tokens) {
    ParsedOutput out;

    // A single trailing STOP is termination, not content.
    size_t n = tokens.size();
    if (n > 0 && tokens[n - 1] == v.stop()) --n;

    const auto find = [&](Token t, size_t from) -> std::optional<size_t> {
        for (size_t i = from; i < n; ++i)
            if (tokens[i] == t) return i;
        return std::nullopt;
    };

    // Best-effort memory span: first <memory> ... first following </memory>.
    const auto mo = find(v.mem_open(), 0);
    std::optional<size_t> mc;
    if (mo) {
        mc = find(v.mem_close(), *mo + 1);
        if (mc) out.memory_span.assign(tokens.begin() + *mo + 1, tokens.begin() + *mc);
    }

    // Best-effort answer: the region after the first <answer> (up to the
    // first following </answer>, or the end) must hold exactly one choice
    // marker; anything else is ambiguous and yields no answer.
    const auto ao = find(v.ans_open(), 0);
    std::optional<size_t> ac;
    if (ao) {
        ac = find(v.ans_close(), *ao + 1);
        const size_t end = ac ? *ac : n;
        int markers = 0;
        Token marker = -1;
        for (size_t i = *ao + 1; i < end; ++i) {
            if (v.is_choice_marker(tokens[i])) {
                ++markers;
                marker = tokens[i];
            }
        }
        if (markers == 1) out.answer = v.choice_index(marker);
    }

    // Strict shape: <memory> body </memory> <answer> marker </answer> with a
    // tag-free body and nothing outside the tags.
    out.well_formed = false;
    if (mo && *mo == 0 && mc && ao && *ao == *mc + 1 && ac && *ac == *ao + 2 && *ac + 1 == n &&
        v.is_choice_marker(tokens[*ao + 1])) {
        bool body_clean = true;
        for (size_t i = 1; i < *mc; ++i) {
            if (v.is_tag(tokens[i]) || tokens[i] == v.stop()) {
                body_clean = false;
                break;
            }
        }
        out.well_formed = body_clean;
    }
    return out;
}

std::vector<Token> render_output(const Vocab& v, const std::vector<Token>& memory_span,
                                 std::optional<int> answer) {
    std::vector<Token> out;
    out.reserve(memory_span.size() + 5);
    out.push_back(v.mem_open());
    out.insert(out.end(), memory_span.begin(), memory_span.end());
    out.push_back(v.mem_close());
    out.push_back(v.ans_open());
    if (answer) out.push_back(v.choice_marker(*answer));
    out.push_back(v.ans_close());
    return out;
}

int token_count(const std::vector<Token>& memory_span) {
    return static_cast<int>(memory_span.size());
}

SampledSequence sample_sequence(const LogitsFn& logits_fn, int vocab_total, Token stop,
                                int max_len, uint64_t seed, SampleMode mode) {
    if (max_len < 1) throw ConfigError("sample_sequence: max_len must be >= 1");
    Rng rng(seed);
    SampledSequence seq;
    std::vector<double> probs(vocab_total);
    while (static_cast<int>(seq.tokens.size()) < max_len) {
        const std::vector<double> logits = logits_fn(seq.tokens);
        if (static_cast<int>(logits.size()) != vocab_total)
            throw ConfigError("sample_sequence: logits size mismatch");
        double max_logit = logits[0];
        for (double l : logits) max_logit = std::max(max_logit, l);
        if (!std::isfinite(max_logit))
            throw NumericalError("sample_sequence: non-finite logits at step " +
                                 std::to_string(seq.tokens.size()));
        double z = 0.0;
        for (int i = 0; i < vocab_total; ++i) {
            probs[i] = std::exp(logits[i] - max_logit);
            z += probs[i];
        }
        const double log_z = max_logit + std::log(z);

        int tok = 0;
        if (mode == SampleMode::kGreedy) {
            for (int i = 1; i < vocab_total; ++i)
                if (logits[i] > logits[tok]) tok = i;
        } else {
            const double u = rng.next_unit() * z;
            double acc = 0.0;
            tok = vocab_total - 1;
            for (int i = 0; i < vocab_total; ++i) {
                acc += probs[i];
                if (u < acc) {
                    tok = i;
                    break;
                }
            }
        }
        seq.tokens.push_back(static_cast<Token>(tok));
        seq.logprobs.push_back(logits[tok] - log_z);
        if (tok == stop) break;
    }
    return seq;
}

Trajectory generate(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                    int max_len, uint64_t seed, CounterSink& sink, SampleMode mode) {
    const uint64_t id = ctx.context_id();
    sink.prefill(id);

    const LogitsFn fn = [&](const std::vector<Token>& prefix) {
        return logits(params, v, ctx, prefix);
    };
    SampledSequence seq = sample_sequence(fn, v.total(), v.stop(), max_len, seed, mode);
    sink.decode(seq.tokens.size());

    Trajectory t;
    t.tokens = std::move(seq.tokens);
    t.logprobs = std::move(seq.logprobs);
    t.parsed = parse_output(v, t.tokens);
    t.context_id = id;
    return t;
}

std::string trajectory_to_json_line(const Trajectory& t) {
    nlohmann::json j{{"context_id", t.context_id},
                     {"tokens", t.tokens},
                     {"logprobs", t.logprobs},
                     {"memory_span", t.parsed.memory_span},
                     {"well_formed", t.parsed.well_formed}};
    if (t.parsed.answer)
        j["answer"] = *t.parsed.answer;
    else
        j["answer"] = nullptr;
    return j.dump();
}

}  // namespace prpo
