#include "prpo/env.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "prpo/rng.hpp"
#include "prpo/rollout.hpp"

namespace prpo {

void EpisodeSpec::validate() const {
    if (num_segments < 1) throw ConfigError("episode spec: num_segments must be >= 1, got " + std::to_string(num_segments));
    if (segment_len < 1) throw ConfigError("episode spec: segment_len must be >= 1, got " + std::to_string(segment_len));
    if (num_choices < 2) throw ConfigError("episode spec: num_choices must be >= 2, got " + std::to_string(num_choices));
    if (vocab_size < num_choices + 2)
        throw ConfigError("episode spec: vocab_size must be >= num_choices + 2, got vocab_size=" +
                          std::to_string(vocab_size) + " num_choices=" + std::to_string(num_choices));
    if (distractor_rate < 0.0 || distractor_rate > 1.0)
        throw ConfigError("episode spec: distractor_rate must be in [0,1], got " + std::to_string(distractor_rate));
    if (evidence_copies < 1 || evidence_copies > segment_len)
        throw ConfigError("episode spec: evidence_copies must be in [1, segment_len], got " +
                          std::to_string(evidence_copies));
}

Episode generate_episode(const EpisodeSpec& spec, uint64_t seed) {
    spec.validate();
    const int T = spec.num_segments;
    const int S = spec.segment_len;
    const int K = spec.vocab_size;
    const int C = spec.num_choices;

    Rng rng(derive_seed(seed, {0x45505349ULL}));  // per-episode stream

    Episode ep;
    ep.id = seed;
    ep.spec = spec;
    ep.gold_answer = rng.next_below(C);
    ep.evidence_segment = rng.next_below(T);

    // Fixed two-token query; the question is always "which candidate is
    // evidenced", so the query block acts as a constant bias feature.
    ep.query = {static_cast<Token>(K - 2), static_cast<Token>(K - 1)};

    ep.segments.assign(T, std::vector<Token>(S, 0));

    // Evidence: gold fact token planted at evidence_copies distinct slots of
    // one segment and nowhere else.
    std::vector<int> slots(S);
    for (int i = 0; i < S; ++i) slots[i] = i;
    for (int i = 0; i < spec.evidence_copies; ++i) {
        const int j = i + rng.next_below(S - i);
        std::swap(slots[i], slots[j]);
    }
    std::vector<char> is_evidence(S, 0);
    for (int i = 0; i < spec.evidence_copies; ++i) is_evidence[slots[i]] = 1;

    // Remaining slots: wrong-choice distractors at distractor_rate, filler
    // otherwise. Each wrong choice is capped at evidence_copies - 1 total
    // occurrences so gold keeps the strict frequency majority.
    std::vector<int> planted(C, 0);
    for (int t = 0; t < T; ++t) {
        for (int s = 0; s < S; ++s) {
            if (t == ep.evidence_segment && is_evidence[s]) {
                ep.segments[t][s] = static_cast<Token>(ep.gold_answer);
                continue;
            }
            Token tok = static_cast<Token>(C + rng.next_below(K - C));
            if (rng.next_unit() < spec.distractor_rate) {
                int wrong = rng.next_below(C - 1);
                if (wrong >= ep.gold_answer) ++wrong;
                if (planted[wrong] < spec.evidence_copies - 1) {
                    ++planted[wrong];
                    tok = static_cast<Token>(wrong);
                }
            }
            ep.segments[t][s] = tok;
        }
    }
    return ep;
}

SparseFeatures featurize_sparse(const Vocab& v, const std::vector<Token>& query,
                                const std::vector<Token>& segment,
                                const std::vector<Token>& memory, Token prev_token) {
    const auto check = [&](const std::vector<Token>& seq, const char* name) {
        for (Token t : seq)
            if (!v.in_range(t))
                throw InputError(std::string("featurize: ") + name + " token id " + std::to_string(t) +
                                 " out of range [0, " + std::to_string(v.total()) + ")");
    };
    check(query, "query");
    check(segment, "segment");
    check(memory, "memory");
    if (!v.in_range(prev_token))
        throw InputError("featurize: prev token id " + std::to_string(prev_token) + " out of range [0, " +
                         std::to_string(v.total()) + ")");

    SparseFeatures f;
    f.dim = feature_dim(v);
    const int K = v.content;
    std::vector<int> counts(K, 0);
    const auto emit_block = [&](const std::vector<Token>& seq, int base) {
        std::fill(counts.begin(), counts.end(), 0);
        for (Token t : seq)
            if (t < K) ++counts[t];
        for (int i = 0; i < K; ++i)
            if (counts[i] > 0) f.entries.emplace_back(base + i, static_cast<double>(counts[i]));
    };
    emit_block(query, 0);
    emit_block(segment, K);
    emit_block(memory, 2 * K);
    f.entries.emplace_back(3 * K + prev_token, 1.0);
    return f;
}

FeatureVector featurize(const Vocab& v, const std::vector<Token>& query,
                        const std::vector<Token>& segment,
                        const std::vector<Token>& memory, Token prev_token) {
    const SparseFeatures sparse = featurize_sparse(v, query, segment, memory, prev_token);
    FeatureVector out;
    out.values.assign(sparse.dim, 0.0);
    for (const auto& [idx, val] : sparse.entries) out.values[idx] = val;
    return out;
}

OracleTrace oracle_trace(const Episode& episode) {
    const Vocab v = episode.spec.vocab();
    OracleTrace trace;
    trace.outputs.reserve(episode.segments.size());
    const Token fact = static_cast<Token>(episode.gold_answer);
    for (int t = 0; t < episode.spec.num_segments; ++t) {
        const bool seen = t >= episode.evidence_segment;
        std::vector<Token> memory;
        if (seen) memory.push_back(fact);
        const int answer = seen ? episode.gold_answer : 0;  // abstain = choice 0
        std::vector<Token> out = render_output(v, memory, answer);
        out.push_back(v.stop());
        trace.outputs.push_back(std::move(out));
    }
    return trace;
}

namespace {

nlohmann::json episode_to_json(const Episode& ep) {
    return nlohmann::json{{"seed", ep.id},
                          {"num_segments", ep.spec.num_segments},
                          {"segment_len", ep.spec.segment_len},
                          {"vocab_size", ep.spec.vocab_size},
                          {"num_choices", ep.spec.num_choices},
                          {"distractor_rate", ep.spec.distractor_rate},
                          {"evidence_copies", ep.spec.evidence_copies},
                          {"query", ep.query},
                          {"segments", ep.segments},
                          {"gold_answer", ep.gold_answer},
                          {"evidence_segment", ep.evidence_segment}};
}

Episode episode_from_json(const nlohmann::json& j) {
    Episode ep;
    ep.id = j.at("seed").get<uint64_t>();
    ep.spec.num_segments = j.at("num_segments").get<int>();
    ep.spec.segment_len = j.at("segment_len").get<int>();
    ep.spec.vocab_size = j.at("vocab_size").get<int>();
    ep.spec.num_choices = j.at("num_choices").get<int>();
    ep.spec.distractor_rate = j.at("distractor_rate").get<double>();
    ep.spec.evidence_copies = j.at("evidence_copies").get<int>();
    ep.query = j.at("query").get<std::vector<Token>>();
    ep.segments = j.at("segments").get<std::vector<std::vector<Token>>>();
    ep.gold_answer = j.at("gold_answer").get<int>();
    ep.evidence_segment = j.at("evidence_segment").get<int>();
    return ep;
}

}  // namespace

void write_episodes(std::ostream& os, const std::vector<Episode>& episodes) {
    for (const Episode& ep : episodes) os << episode_to_json(ep).dump() << '\n';
}

std::vector<Episode> read_episodes(std::istream& is) {
    std::vector<Episode> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(episode_from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace prpo
