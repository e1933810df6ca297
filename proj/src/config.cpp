#include "prpo/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace prpo {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& value) {
    int out = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size())
        throw ConfigError("config: field '" + key + "' expects an integer, got '" + value + "'");
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    uint64_t out = 0;
    const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size())
        throw ConfigError("config: field '" + key + "' expects an unsigned integer, got '" + value + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double out = std::strtod(value.c_str(), &end);
    if (end != value.c_str() + value.size() || value.empty())
        throw ConfigError("config: field '" + key + "' expects a number, got '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on") return true;
    if (value == "false" || value == "0" || value == "off") return false;
    throw ConfigError("config: field '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "env.segments") cfg.env.num_segments = parse_int(key, value);
    else if (key == "env.segment_len") cfg.env.segment_len = parse_int(key, value);
    else if (key == "env.vocab_size") cfg.env.vocab_size = parse_int(key, value);
    else if (key == "env.choices") cfg.env.num_choices = parse_int(key, value);
    else if (key == "env.distractor_rate") cfg.env.distractor_rate = parse_double(key, value);
    else if (key == "env.evidence_copies") cfg.env.evidence_copies = parse_int(key, value);
    else if (key == "reward.alpha") cfg.train.reward.alpha = parse_double(key, value);
    else if (key == "reward.beta") cfg.train.reward.beta = parse_double(key, value);
    else if (key == "reward.l_max") cfg.train.reward.l_max = parse_int(key, value);
    else if (key == "reward.mode") {
        if (value == "tcr") cfg.train.reward.mode = RewardMode::kCascading;
        else if (value == "tr") cfg.train.reward.mode = RewardMode::kTerminal;
        else throw ConfigError("config: field 'reward.mode' expects tcr or tr, got '" + value + "'");
    }
    else if (key == "schedule.tau0") cfg.train.schedule.tau0 = parse_double(key, value);
    else if (key == "schedule.gamma") cfg.train.schedule.gamma = parse_double(key, value);
    else if (key == "train.group_size") cfg.train.group_size = parse_int(key, value);
    else if (key == "train.batch") cfg.train.batch = parse_int(key, value);
    else if (key == "train.updates") cfg.train.updates = parse_int(key, value);
    else if (key == "train.clip_eps") cfg.train.clip_eps = parse_double(key, value);
    else if (key == "train.kl_coef") cfg.train.kl_coef = parse_double(key, value);
    else if (key == "train.lr") cfg.train.lr = parse_double(key, value);
    else if (key == "train.psp") cfg.train.mode_psp = parse_bool(key, value);
    else if (key == "train.adam_beta1") cfg.train.adam_beta1 = parse_double(key, value);
    else if (key == "train.adam_beta2") cfg.train.adam_beta2 = parse_double(key, value);
    else if (key == "train.adam_eps") cfg.train.adam_eps = parse_double(key, value);
    else if (key == "train.max_len_extra") cfg.train.max_len_extra = parse_int(key, value);
    else if (key == "train.init_scale") cfg.train.init_scale = parse_double(key, value);
    else if (key == "train.eval_episodes") cfg.train.eval_episodes = parse_int(key, value);
    else if (key == "train.converge_acc") cfg.train.converge_acc = parse_double(key, value);
    else if (key == "coldstart.enabled") cfg.train.cold_start.enabled = parse_bool(key, value);
    else if (key == "coldstart.episodes") cfg.train.cold_start.episodes = parse_int(key, value);
    else if (key == "coldstart.epochs") cfg.train.cold_start.epochs = parse_int(key, value);
    else if (key == "coldstart.minibatch") cfg.train.cold_start.minibatch = parse_int(key, value);
    else if (key == "coldstart.lr") cfg.train.cold_start.lr = parse_double(key, value);
    else if (key == "run.master_seed") cfg.master_seed = parse_u64(key, value);
    else if (key == "run.name") cfg.run_name = value;
    else if (key == "run.checkpoint") cfg.checkpoint = value;
    else throw ConfigError("config: unknown field '" + key + "'");
}

RunConfig parse_run_config(std::istream& is) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value': '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            apply_override(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open file: " + path);
    return parse_run_config(is);
}

std::string run_config_to_string(const RunConfig& cfg) {
    std::ostringstream os;
    os << "env.segments = " << cfg.env.num_segments << '\n'
       << "env.segment_len = " << cfg.env.segment_len << '\n'
       << "env.vocab_size = " << cfg.env.vocab_size << '\n'
       << "env.choices = " << cfg.env.num_choices << '\n'
       << "env.distractor_rate = " << cfg.env.distractor_rate << '\n'
       << "env.evidence_copies = " << cfg.env.evidence_copies << '\n'
       << "reward.alpha = " << cfg.train.reward.alpha << '\n'
       << "reward.beta = " << cfg.train.reward.beta << '\n'
       << "reward.l_max = " << cfg.train.reward.l_max << '\n'
       << "reward.mode = " << (cfg.train.reward.mode == RewardMode::kCascading ? "tcr" : "tr") << '\n'
       << "schedule.tau0 = " << cfg.train.schedule.tau0 << '\n'
       << "schedule.gamma = " << cfg.train.schedule.gamma << '\n'
       << "train.group_size = " << cfg.train.group_size << '\n'
       << "train.batch = " << cfg.train.batch << '\n'
       << "train.updates = " << cfg.train.updates << '\n'
       << "train.clip_eps = " << cfg.train.clip_eps << '\n'
       << "train.kl_coef = " << cfg.train.kl_coef << '\n'
       << "train.lr = " << cfg.train.lr << '\n'
       << "train.psp = " << (cfg.train.mode_psp ? "true" : "false") << '\n'
       << "train.adam_beta1 = " << cfg.train.adam_beta1 << '\n'
       << "train.adam_beta2 = " << cfg.train.adam_beta2 << '\n'
       << "train.adam_eps = " << cfg.train.adam_eps << '\n'
       << "train.max_len_extra = " << cfg.train.max_len_extra << '\n'
       << "train.init_scale = " << cfg.train.init_scale << '\n'
       << "train.eval_episodes = " << cfg.train.eval_episodes << '\n'
       << "train.converge_acc = " << cfg.train.converge_acc << '\n'
       << "coldstart.enabled = " << (cfg.train.cold_start.enabled ? "true" : "false") << '\n'
       << "coldstart.episodes = " << cfg.train.cold_start.episodes << '\n'
       << "coldstart.epochs = " << cfg.train.cold_start.epochs << '\n'
       << "coldstart.minibatch = " << cfg.train.cold_start.minibatch << '\n'
       << "coldstart.lr = " << cfg.train.cold_start.lr << '\n'
       << "run.master_seed = " << cfg.master_seed << '\n'
       << "run.name = " << cfg.run_name << '\n';
    if (!cfg.checkpoint.empty()) os << "run.checkpoint = " << cfg.checkpoint << '\n';
    return os.str();
}

}  // namespace prpo
