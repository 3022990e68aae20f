#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "omvp/trainer/config.hpp"

namespace omvp::harness {

/// Config file problem. `line` is 0 when the problem is not tied to one line.
class ConfigError : public InvalidConfig {
public:
    ConfigError(const std::string& where, int line, const std::string& what)
        : InvalidConfig(where + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct RunConfig {
    trainer::TrainConfig train;
    std::string output_dir;  // empty: $OMVP_RUN_ROOT, else "runs"

    double ratio() const { return train.env.ratio(); }
    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// "8v4" -> {8, 4}.
inline std::pair<int, int> parse_scenario(const std::string& s) {
    const auto v = s.find('v');
    if (v == std::string::npos || v == 0 || v + 1 == s.size()) throw InvalidConfig("scenario must look like 8v4, got '" + s + "'");
    std::size_t used_p = 0, used_e = 0;
    int p = 0, e = 0;
    try {
        p = std::stoi(s.substr(0, v), &used_p);
        e = std::stoi(s.substr(v + 1), &used_e);
    } catch (const std::logic_error&) {
        throw InvalidConfig("scenario must look like 8v4, got '" + s + "'");
    }
    if (used_p != v || used_e != s.size() - v - 1 || p < 1 || e < 1)
        throw InvalidConfig("scenario must look like 8v4, got '" + s + "'");
    return {p, e};
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) return s.substr(1, s.size() - 2);
    return s;
}

template <class T>
T parse_number(const std::string& v) {
    std::istringstream is(v);
    T out{};
    is >> out;
    if (is.fail() || !is.eof()) throw InvalidConfig("'" + v + "' is not a valid number");
    return out;
}

inline std::size_t parse_count(const std::string& v) {
    if (!v.empty() && v[0] == '-') throw InvalidConfig("'" + v + "' must be non-negative");
    return parse_number<std::size_t>(v);
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw InvalidConfig("'" + v + "' is not a boolean");
}

inline std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
    using trainer::TrainConfig;
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["width"] = [](RunConfig& c, const std::string& v) {
            const int w = parse_number<int>(v);
            if (w % 2 == 0) throw InvalidConfig("width must be odd, got " + v);
            c.train.env.width = w;
        };
        t["pursuers"] = [](RunConfig& c, const std::string& v) { c.train.env.pursuers = parse_number<int>(v); };
        t["evaders"] = [](RunConfig& c, const std::string& v) { c.train.env.evaders = parse_number<int>(v); };
        t["scenario"] = [](RunConfig& c, const std::string& v) {
            std::tie(c.train.env.pursuers, c.train.env.evaders) = parse_scenario(v);
        };
        t["observation_size"] = [](RunConfig& c, const std::string& v) { c.train.env.observation_size = parse_number<int>(v); };
        t["horizon"] = [](RunConfig& c, const std::string& v) { c.train.env.horizon = parse_number<int>(v); };
        t["evader_strategy"] = [](RunConfig& c, const std::string& v) {
            if (v == "random") {
                c.train.env.pinned_strategy.reset();
                return;
            }
            auto s = env::parse_strategy(v);
            if (!s) throw InvalidConfig("unknown evader_strategy '" + v + "' (random, still, lat, long, circle)");
            c.train.env.pinned_strategy = *s;
        };
        t["algorithm"] = [](RunConfig& c, const std::string& v) {
            auto a = trainer::parse_algorithm(v);
            if (!a) throw InvalidConfig("unknown algorithm '" + v + "' (t3-qmix, t3-vdn, qmix, vdn, random)");
            c.train.algorithm = *a;
        };
        t["embed_dim"] = [](RunConfig& c, const std::string& v) { c.train.model.embed = parse_count(v); };
        t["heads"] = [](RunConfig& c, const std::string& v) { c.train.model.heads = parse_count(v); };
        t["depth"] = [](RunConfig& c, const std::string& v) { c.train.model.depth = parse_count(v); };
        t["layer_norm"] = [](RunConfig& c, const std::string& v) { c.train.model.layer_norm = parse_bool(v); };
        t["hidden_token"] = [](RunConfig& c, const std::string& v) {
            if (v == "team") c.train.model.hidden_mode = policy::HiddenMode::Team;
            else if (v == "agent") c.train.model.hidden_mode = policy::HiddenMode::PerAgent;
            else throw InvalidConfig("hidden_token must be team or agent, got '" + v + "'");
        };
        t["rnn_hidden"] = [](RunConfig& c, const std::string& v) { c.train.model.rnn_hidden = parse_count(v); };
        t["mixer_hidden"] = [](RunConfig& c, const std::string& v) { c.train.model.mixer_hidden = parse_count(v); };
        t["gamma"] = [](RunConfig& c, const std::string& v) { c.train.gamma = parse_number<double>(v); };
        t["batch_size"] = [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_count(v); };
        t["learning_rate"] = [](RunConfig& c, const std::string& v) { c.train.learning_rate = parse_number<double>(v); };
        t["epsilon_decay"] = [](RunConfig& c, const std::string& v) { c.train.epsilon_decay = parse_number<double>(v); };
        t["epsilon_min"] = [](RunConfig& c, const std::string& v) { c.train.epsilon_min = parse_number<double>(v); };
        t["total_steps"] = [](RunConfig& c, const std::string& v) { c.train.total_steps = parse_number<long>(v); };
        t["target_update"] = [](RunConfig& c, const std::string& v) { c.train.target_update = parse_number<long>(v); };
        t["replay_capacity"] = [](RunConfig& c, const std::string& v) { c.train.replay_capacity = parse_count(v); };
        t["bptt_window"] = [](RunConfig& c, const std::string& v) { c.train.bptt_window = parse_count(v); };
        t["full_unroll"] = [](RunConfig& c, const std::string& v) { c.train.full_unroll = parse_bool(v); };
        t["double_q"] = [](RunConfig& c, const std::string& v) { c.train.double_q = parse_bool(v); };
        t["grad_clip"] = [](RunConfig& c, const std::string& v) { c.train.grad_clip = parse_number<double>(v); };
        t["eval_interval"] = [](RunConfig& c, const std::string& v) { c.train.eval_interval = parse_number<long>(v); };
        t["eval_episodes"] = [](RunConfig& c, const std::string& v) { c.train.eval_episodes = parse_number<int>(v); };
        t["checkpoint_interval"] = [](RunConfig& c, const std::string& v) {
            c.train.checkpoint_interval = parse_number<long>(v);
        };
        t["max_train_steps"] = [](RunConfig& c, const std::string& v) { c.train.max_train_steps = parse_number<long>(v); };
        t["seed"] = [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(v); };
        t["output_dir"] = [](RunConfig& c, const std::string& v) { c.output_dir = v; };
        return t;
    }();
    return table;
}

}  // namespace detail

/// `key = value` lines; `#` starts a comment. Keys not given keep their defaults.
/// `where` names the source in error messages.
inline RunConfig parse_config_text(const std::string& text, const std::string& where = "<config>") {
    RunConfig c;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string s = raw;
        if (const auto hash = s.find('#'); hash != std::string::npos) s.erase(hash);
        s = detail::trim(s);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(where, line, "expected key = value");
        const std::string key = detail::trim(s.substr(0, eq));
        const std::string value = detail::unquote(detail::trim(s.substr(eq + 1)));
        const auto& table = detail::setters();
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError(where, line, "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw ConfigError(where, line, "duplicate key '" + key + "'");
        if (value.empty()) throw ConfigError(where, line, "missing value for '" + key + "'");
        try {
            it->second(c, value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(where, line, key + ": " + e.what());
        }
    }
    try {
        trainer::validate(c.train);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where, 0, e.what());
    }
    return c;
}

inline RunConfig parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path, 0, "cannot open config file");
    std::ostringstream text;
    text << f.rdbuf();
    return parse_config_text(text.str(), path);
}

/// Every key in a fixed order; parsing the result gives back `c` exactly.
inline std::string format_config(const RunConfig& c) {
    using detail::fmt;
    const auto& t = c.train;
    std::ostringstream os;
    os << "width = " << t.env.width << '\n'
       << "pursuers = " << t.env.pursuers << '\n'
       << "evaders = " << t.env.evaders << '\n'
       << "observation_size = " << t.env.observation_size << '\n'
       << "horizon = " << t.env.horizon << '\n'
       << "evader_strategy = " << (t.env.pinned_strategy ? env::to_string(*t.env.pinned_strategy) : "random") << '\n'
       << "algorithm = " << trainer::to_string(t.algorithm) << '\n'
       << "embed_dim = " << t.model.embed << '\n'
       << "heads = " << t.model.heads << '\n'
       << "depth = " << t.model.depth << '\n'
       << "layer_norm = " << (t.model.layer_norm ? "true" : "false") << '\n'
       << "hidden_token = " << (t.model.hidden_mode == policy::HiddenMode::Team ? "team" : "agent") << '\n'
       << "rnn_hidden = " << t.model.rnn_hidden << '\n'
       << "mixer_hidden = " << t.model.mixer_hidden << '\n'
       << "gamma = " << fmt(t.gamma) << '\n'
       << "batch_size = " << t.batch_size << '\n'
       << "learning_rate = " << fmt(t.learning_rate) << '\n'
       << "epsilon_decay = " << fmt(t.epsilon_decay) << '\n'
       << "epsilon_min = " << fmt(t.epsilon_min) << '\n'
       << "total_steps = " << t.total_steps << '\n'
       << "target_update = " << t.target_update << '\n'
       << "replay_capacity = " << t.replay_capacity << '\n'
       << "bptt_window = " << t.bptt_window << '\n'
       << "full_unroll = " << (t.full_unroll ? "true" : "false") << '\n'
       << "double_q = " << (t.double_q ? "true" : "false") << '\n'
       << "grad_clip = " << fmt(t.grad_clip) << '\n'
       << "eval_interval = " << t.eval_interval << '\n'
       << "eval_episodes = " << t.eval_episodes << '\n'
       << "checkpoint_interval = " << t.checkpoint_interval << '\n'
       << "max_train_steps = " << t.max_train_steps << '\n'
       << "seed = " << t.seed << '\n';
    if (!c.output_dir.empty()) os << "output_dir = " << c.output_dir << '\n';
    return os.str();
}

/// FNV-1a over the canonical text minus output_dir, so moving a run does not rename it.
inline std::uint64_t config_hash(const RunConfig& c) {
    RunConfig bare = c;
    bare.output_dir.clear();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : format_config(bare)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::filesystem::path run_root(const RunConfig& c) {
    if (!c.output_dir.empty()) return c.output_dir;
    if (const char* env = std::getenv("OMVP_RUN_ROOT"); env && *env) return env;
    return "runs";
}

/// <root>/<algorithm>-<hash>-s<seed>
inline std::filesystem::path run_directory(const RunConfig& c) {
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
    return run_root(c) / (trainer::to_string(c.train.algorithm) + "-" + std::string(hash, 8) + "-s" +
                          std::to_string(c.train.seed));
}

}  // namespace omvp::harness
