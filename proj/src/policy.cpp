#include "prpo/policy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "prpo/rng.hpp"

namespace prpo {

namespace {

void check_dims(const PolicyParams& params, const Vocab& v) {
    if (params.rows != v.total() || params.cols != feature_dim(v) ||
        params.weights.size() != static_cast<size_t>(params.rows) * params.cols)
        throw ConfigError("policy: params shape (" + std::to_string(params.rows) + "x" +
                          std::to_string(params.cols) + ") does not match vocab (" +
                          std::to_string(v.total()) + "x" + std::to_string(feature_dim(v)) + ")");
}

std::vector<double> logits_from_features(const PolicyParams& params, const SparseFeatures& f) {
    std::vector<double> out(params.rows, 0.0);
    for (int r = 0; r < params.rows; ++r) {
        const double* row = params.weights.data() + static_cast<size_t>(r) * params.cols;
        double acc = 0.0;
        for (const auto& [idx, val] : f.entries) acc += row[idx] * val;
        out[r] = acc;
    }
    return out;
}

// log softmax normalizer with fixed summation order.
double log_sum_exp(const std::vector<double>& logits) {
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - m);
    return m + std::log(z);
}

}  // namespace

PolicyParams zero_params(const Vocab& v) {
    PolicyParams p;
    p.rows = v.total();
    p.cols = feature_dim(v);
    p.weights.assign(static_cast<size_t>(p.rows) * p.cols, 0.0);
    return p;
}

PolicyParams gaussian_params(const Vocab& v, double scale, uint64_t seed) {
    PolicyParams p = zero_params(v);
    Rng rng(seed);
    // Box-Muller, one draw per weight with a cached spare.
    bool has_spare = false;
    double spare = 0.0;
    for (double& w : p.weights) {
        if (has_spare) {
            w = scale * spare;
            has_spare = false;
            continue;
        }
        double u1 = rng.next_unit();
        while (u1 <= 0.0) u1 = rng.next_unit();
        const double u2 = rng.next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        w = scale * (r * std::cos(2.0 * M_PI * u2));
        spare = r * std::sin(2.0 * M_PI * u2);
        has_spare = true;
    }
    return p;
}

std::vector<double> logits(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                           const std::vector<Token>& prefix) {
    check_dims(params, v);
    const Token prev = prefix.empty() ? v.bos() : prefix.back();
    const SparseFeatures f = featurize_sparse(v, ctx.query, ctx.segment, ctx.memory, prev);
    return logits_from_features(params, f);
}

LogprobResult logprob(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                      const std::vector<Token>& tokens) {
    if (tokens.empty()) throw InputError("logprob: empty token sequence");
    check_dims(params, v);
    LogprobResult res;
    res.per_token.reserve(tokens.size());
    std::vector<Token> prefix;
    prefix.reserve(tokens.size());
    for (Token tok : tokens) {
        const std::vector<double> l = logits(params, v, ctx, prefix);
        if (!v.in_range(tok)) throw InputError("logprob: token id out of range");
        const double lp = l[tok] - log_sum_exp(l);
        res.per_token.push_back(lp);
        res.total += lp;
        prefix.push_back(tok);
    }
    return res;
}

std::vector<double> step_probs(const PolicyParams& params, const Vocab& v, const GenContext& ctx,
                               Token prev) {
    check_dims(params, v);
    const SparseFeatures f = featurize_sparse(v, ctx.query, ctx.segment, ctx.memory, prev);
    std::vector<double> l = logits_from_features(params, f);
    const double lse = log_sum_exp(l);
    for (double& x : l) x = std::exp(x - lse);
    return l;
}

std::vector<double> grad_logprob(const PolicyParams& params, const Vocab& v,
                                 const GenContext& ctx, const std::vector<Token>& tokens) {
    if (tokens.empty()) throw InputError("grad_logprob: empty token sequence");
    check_dims(params, v);
    std::vector<double> grad(params.weights.size(), 0.0);
    Token prev = v.bos();
    for (Token tok : tokens) {
        const SparseFeatures f = featurize_sparse(v, ctx.query, ctx.segment, ctx.memory, prev);
        const std::vector<double> l = logits_from_features(params, f);
        const double lse = log_sum_exp(l);
        for (int r = 0; r < params.rows; ++r) {
            const double coef = (r == tok ? 1.0 : 0.0) - std::exp(l[r] - lse);
            double* row = grad.data() + static_cast<size_t>(r) * params.cols;
            for (const auto& [idx, val] : f.entries) row[idx] += coef * val;
        }
        prev = tok;
    }
    return grad;
}

double kl_divergence(const PolicyParams& params, const ReferenceSnapshot& ref, const Vocab& v,
                     const std::vector<SequenceSample>& samples) {
    double sum = 0.0;
    uint64_t tokens = 0;
    for (const SequenceSample& s : samples) {
        const LogprobResult lp = logprob(params, v, s.ctx, s.tokens);
        const LogprobResult ref_lp = logprob(ref.params, v, s.ctx, s.tokens);
        for (size_t i = 0; i < s.tokens.size(); ++i) {
            const double d = ref_lp.per_token[i] - lp.per_token[i];
            sum += std::exp(d) - d - 1.0;
            ++tokens;
        }
    }
    return tokens == 0 ? 0.0 : sum / static_cast<double>(tokens);
}

void save_params(std::ostream& os, const PolicyParams& params) {
    os << "prpo-policy v1 " << params.rows << ' ' << params.cols << ' ' << params.version << '\n';
    char buf[64];
    for (int r = 0; r < params.rows; ++r) {
        for (int c = 0; c < params.cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%a", params.at(r, c));
            os << buf << (c + 1 == params.cols ? '\n' : ' ');
        }
    }
}

PolicyParams load_params(std::istream& is) {
    std::string magic, version_tag;
    PolicyParams p;
    is >> magic >> version_tag >> p.rows >> p.cols >> p.version;
    if (!is || magic != "prpo-policy" || version_tag != "v1")
        throw ConfigError("checkpoint: bad header");
    if (p.rows <= 0 || p.cols <= 0) throw ConfigError("checkpoint: bad shape");
    p.weights.resize(static_cast<size_t>(p.rows) * p.cols);
    std::string tok;
    for (double& w : p.weights) {
        if (!(is >> tok)) throw ConfigError("checkpoint: truncated payload");
        w = std::strtod(tok.c_str(), nullptr);
    }
    return p;
}

void save_params_file(const std::string& path, const PolicyParams& params) {
    std::ofstream os(path);
    if (!os) throw ConfigError("checkpoint: cannot open for write: " + path);
    save_params(os, params);
}

PolicyParams load_params_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("checkpoint: cannot open: " + path);
    return load_params(is);
}

}  // namespace prpo
