#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "prpo/vocab.hpp"

namespace prpo {

// Synthetic segmented-evidence episode generator. Each episode is a query,
// T equally long token segments and a multiple-choice answer whose decisive
// fact token is planted inside exactly one segment. Distractor fact tokens
// for wrong choices appear elsewhere, capped below evidence_copies per
// choice so the episode stays exactly solvable by frequency.
struct EpisodeSpec {
    int num_segments = 4;          // T
    int segment_len = 16;          // S, tokens per segment
    int vocab_size = 12;           // K, content token count
    int num_choices = 4;           // C
    double distractor_rate = 0.35;
    int evidence_copies = 3;

    Vocab vocab() const { return Vocab{vocab_size, num_choices}; }
    void validate() const;

    bool operator==(const EpisodeSpec&) const = default;
};

struct Episode {
    uint64_t id = 0;  // the generation seed; doubles as the episode identity
    EpisodeSpec spec;
    std::vector<Token> query;
    std::vector<std::vector<Token>> segments;
    int gold_answer = 0;
    int evidence_segment = 0;

    bool operator==(const Episode&) const = default;
};

// Bag-of-token feature map: three K-sized count blocks (query, segment,
// memory over content ids) followed by a one-hot of the previous emitted
// token over the full id space. Keeps policy logits linear and gradients
// closed-form.
struct FeatureVector {
    std::vector<double> values;
};

// Canonical sparse form of the same features: (index, value) pairs in
// ascending block order. All policy math consumes this representation so
// that sampled and replayed log-probabilities agree bit for bit.
struct SparseFeatures {
    std::vector<std::pair<int, double>> entries;
    int dim = 0;
};

inline int feature_dim(const Vocab& v) { return 3 * v.content + v.total(); }

SparseFeatures featurize_sparse(const Vocab& v, const std::vector<Token>& query,
                                const std::vector<Token>& segment,
                                const std::vector<Token>& memory, Token prev_token);

FeatureVector featurize(const Vocab& v, const std::vector<Token>& query,
                        const std::vector<Token>& segment,
                        const std::vector<Token>& memory, Token prev_token);

// Ideal per-step outputs for supervised warm-start: memory carries the
// decisive fact token once it has been seen, the answer is the gold choice
// after the evidence segment and choice 0 (abstain) before it. Every step
// ends with STOP and parses as well-formed.
struct OracleTrace {
    std::vector<std::vector<Token>> outputs;  // one emitted sequence per step
};

Episode generate_episode(const EpisodeSpec& spec, uint64_t seed);
OracleTrace oracle_trace(const Episode& episode);

// Line-delimited episode corpus (one JSON record per line).
void write_episodes(std::ostream& os, const std::vector<Episode>& episodes);
std::vector<Episode> read_episodes(std::istream& is);

}  // namespace prpo
