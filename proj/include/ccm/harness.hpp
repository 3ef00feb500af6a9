#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ccm/agent.hpp"
#include "ccm/baselines.hpp"
#include "ccm/environments.hpp"
#include "ccm/log.hpp"

namespace ccm {

struct ExperimentConfig {
    std::string scenario;  // env1 | env2 | env3 | glucose
    std::string agent = "ccm";  // ccm | flat
    HyperParams hp;
    std::vector<int> seeds{0};
    std::uint64_t budget = 0;  // environment steps per seed
    int eval_episodes = 1;
    std::string outdir = "out";
    std::string fixture_dir = ::ccm::fixture_dir();
    std::uint64_t config_hash = 0;
};

inline HyperParams hyperparams_from_json(const json& j, HyperParams hp = {}) {
    auto get = [&](const char* k, double& v) {
        if (j.contains(k)) v = j.at(k).get<double>();
    };
    auto geti = [&](const char* k, int& v) {
        if (j.contains(k)) v = j.at(k).get<int>();
    };
    auto getb = [&](const char* k, bool& v) {
        if (j.contains(k)) v = j.at(k).get<bool>();
    };
    geti("low_horizon", hp.low_horizon);
    geti("high_horizon", hp.high_horizon);
    get("gamma", hp.gamma);
    get("alpha", hp.alpha);
    get("cross_penalty", hp.cross_penalty);
    get("length_penalty", hp.length_penalty);
    get("reward_margin", hp.reward_margin);
    get("inside_scale", hp.inside_scale);
    get("subgoal_eps", hp.subgoal_eps);
    get("lr_policy", hp.lr_policy);
    get("lr_value", hp.lr_value);
    get("lr_fcr", hp.lr_fcr);
    get("momentum", hp.momentum);
    get("entropy_coef", hp.entropy_coef);
    geti("hidden", hp.hidden);
    geti("rnn_hidden", hp.rnn_hidden);
    get("eps_high_start", hp.eps_high_start);
    get("eps_high_final", hp.eps_high_final);
    getb("normalize_rewards", hp.normalize_rewards);
    geti("cascade_depth", hp.cascade_depth);
    getb("multivariate_low_action", hp.multivariate_low_action);
    getb("fcr_mse", hp.fcr_mse);
    hp.validate();
    return hp;
}

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.scenario = j.at("scenario").get<std::string>();
    if (j.contains("agent")) c.agent = j.at("agent").get<std::string>();
    if (c.agent != "ccm" && c.agent != "flat")
        throw ConfigError("agent must be 'ccm' or 'flat'");
    if (j.contains("hyperparams"))
        c.hp = hyperparams_from_json(j.at("hyperparams"));
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<int>>();
    if (c.seeds.empty()) throw ConfigError("seeds must be nonempty");
    if (j.contains("budget")) c.budget = j.at("budget").get<std::uint64_t>();
    if (j.contains("eval_episodes"))
        c.eval_episodes = j.at("eval_episodes").get<int>();
    if (j.contains("outdir")) c.outdir = j.at("outdir").get<std::string>();
    if (j.contains("fixtures")) c.fixture_dir = j.at("fixtures").get<std::string>();
    c.config_hash = fnv1a64(j.dump());
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad config file: ") + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// episode log CSV

inline constexpr const char* kLogHeader =
    "seed,episode,t,level,cut_id,goal_center,action,reward,loss_policy,"
    "loss_value,loss_fcr";

inline std::string row_to_csv(const LogRow& r) {
    std::string out;
    out += std::to_string(r.seed);
    out += ',';
    out += std::to_string(r.episode);
    out += ',';
    out += std::to_string(r.t);
    out += ',';
    out += r.level;
    out += ',';
    out += std::to_string(r.cut_id);
    out += ',';
    out += join_values(r.goal_center);
    out += ',';
    out += join_values(r.action);
    out += ',';
    out += format_double(r.reward);
    out += ',';
    out += format_double(r.loss_policy);
    out += ',';
    out += format_double(r.loss_value);
    out += ',';
    out += format_double(r.loss_fcr);
    return out;
}

inline std::vector<double> parse_values(const std::string& s) {
    std::vector<double> out;
    if (s.empty()) return out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const std::size_t next = s.find(';', pos);
        const std::string tok =
            s.substr(pos, next == std::string::npos ? next : next - pos);
        out.push_back(std::strtod(tok.c_str(), nullptr));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

inline LogRow row_from_csv(const std::string& line) {
    std::vector<std::string> f;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const std::size_t next = line.find(',', pos);
        f.push_back(line.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (f.size() != 11) throw ConfigError("malformed log row: " + line);
    LogRow r;
    r.seed = std::atoi(f[0].c_str());
    r.episode = std::atoi(f[1].c_str());
    r.t = std::atoi(f[2].c_str());
    r.level = f[3];
    r.cut_id = std::atoi(f[4].c_str());
    r.goal_center = parse_values(f[5]);
    r.action = parse_values(f[6]);
    r.reward = std::strtod(f[7].c_str(), nullptr);
    r.loss_policy = std::strtod(f[8].c_str(), nullptr);
    r.loss_value = std::strtod(f[9].c_str(), nullptr);
    r.loss_fcr = std::strtod(f[10].c_str(), nullptr);
    return r;
}

/// Streams rows into a CSV file.
class CsvSink final : public LogSink {
public:
    explicit CsvSink(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw ConfigError("cannot write log file: " + path);
        out_ << kLogHeader << "\n";
    }
    void row(const LogRow& r) override { out_ << row_to_csv(r) << "\n"; }
    void close() { out_.close(); }

private:
    std::ofstream out_;
};

struct TeeSink final : LogSink {
    LogSink* a = nullptr;
    LogSink* b = nullptr;
    void row(const LogRow& r) override {
        if (a) a->row(r);
        if (b) b->row(r);
    }
};

inline void for_each_log_row(const std::string& path,
                             const std::function<void(const LogRow&)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open log file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kLogHeader)
        throw ConfigError("log file has an unexpected header: " + path);
    while (std::getline(in, line)) {
        if (!line.empty()) fn(row_from_csv(line));
    }
}

// ---------------------------------------------------------------------------
// metrics

struct EpisodeAgg {
    int episode = 0;
    double low_sum = 0.0;
    std::uint64_t low_n = 0;
    std::uint64_t low_in_box = 0;
    double up_sum = 0.0;
    std::uint64_t up_n = 0;
    double high_sum = 0.0;
    std::uint64_t high_n = 0;
    double lp_low = 0.0, lv_low = 0.0;
    std::uint64_t upd_low_n = 0;
    double lp_high = std::numeric_limits<double>::quiet_NaN();
    double lv_high = std::numeric_limits<double>::quiet_NaN();
    double fcr = std::numeric_limits<double>::quiet_NaN();

    double mean_low() const { return low_n ? low_sum / low_n : 0.0; }
    double mean_up() const { return up_n ? up_sum / up_n : 0.0; }
    double mean_high() const { return high_n ? high_sum / high_n : 0.0; }
};

/// Folds log rows into per-episode aggregates and whole-run metrics. The
/// in-box test uses the scalar-goal identity: a state is inside the box iff
/// its reward is at least margin - inside_scale * half_width.
class MetricsAccumulator final : public LogSink {
public:
    MetricsAccumulator(double reward_margin, double inside_scale,
                       double goal_half_width_sum)
        : in_box_threshold_(reward_margin -
                            inside_scale * goal_half_width_sum - 1e-9) {}

    void row(const LogRow& r) override {
        if (episodes_.empty() || episodes_.back().episode != r.episode) {
            episodes_.push_back(EpisodeAgg{r.episode});
        }
        EpisodeAgg& e = episodes_.back();
        if (r.level == "low") {
            e.low_sum += r.reward;
            ++e.low_n;
            if (r.reward >= in_box_threshold_) ++e.low_in_box;
        } else if (r.level == "up") {
            e.up_sum += r.reward;
            ++e.up_n;
        } else if (r.level == "high") {
            e.high_sum += r.reward;
            ++e.high_n;
            if (r.cut_id >= 0) ++cut_histogram_[r.cut_id];
        } else if (r.level == "upd_low") {
            if (std::isfinite(r.loss_policy)) {
                e.lp_low += r.loss_policy;
                e.lv_low += r.loss_value;
                ++e.upd_low_n;
            }
        } else if (r.level == "upd_high") {
            e.lp_high = r.loss_policy;
            e.lv_high = r.loss_value;
            e.fcr = r.loss_fcr;
        }
    }

    const std::vector<EpisodeAgg>& episodes() const { return episodes_; }
    const std::map<int, std::uint64_t>& cut_histogram() const {
        return cut_histogram_;
    }

    double mean_low_reward() const {
        double s = 0.0;
        std::uint64_t n = 0;
        for (const auto& e : episodes_) {
            s += e.low_sum;
            n += e.low_n;
        }
        return n ? s / n : 0.0;
    }

    double final_mean_low_reward(std::size_t window) const {
        if (episodes_.empty()) return 0.0;
        const std::size_t k = std::min(window, episodes_.size());
        double s = 0.0;
        std::uint64_t n = 0;
        for (std::size_t i = episodes_.size() - k; i < episodes_.size(); ++i) {
            s += episodes_[i].low_sum;
            n += episodes_[i].low_n;
        }
        return n ? s / n : 0.0;
    }

    double mean_high_reward() const {
        double s = 0.0;
        std::uint64_t n = 0;
        for (const auto& e : episodes_) {
            s += e.high_sum;
            n += e.high_n;
        }
        return n ? s / n : 0.0;
    }

    double in_box_fraction() const {
        std::uint64_t in = 0, n = 0;
        for (const auto& e : episodes_) {
            in += e.low_in_box;
            n += e.low_n;
        }
        return n ? static_cast<double>(in) / static_cast<double>(n) : 0.0;
    }

    double fcr_first_epoch() const {
        for (const auto& e : episodes_)
            if (std::isfinite(e.fcr)) return e.fcr;
        return std::numeric_limits<double>::quiet_NaN();
    }
    double fcr_final_epoch() const {
        for (auto it = episodes_.rbegin(); it != episodes_.rend(); ++it)
            if (std::isfinite(it->fcr)) return it->fcr;
        return std::numeric_limits<double>::quiet_NaN();
    }

private:
    double in_box_threshold_;
    std::vector<EpisodeAgg> episodes_;
    std::map<int, std::uint64_t> cut_histogram_;
};

struct SeedMetrics {
    int seed = 0;
    std::uint64_t episodes = 0;
    std::uint64_t low_steps = 0;
    double final100_mean_low_reward = 0.0;
    double mean_low_reward = 0.0;
    double mean_high_reward = 0.0;
    double fcr_first_epoch = std::numeric_limits<double>::quiet_NaN();
    double fcr_final_epoch = std::numeric_limits<double>::quiet_NaN();
    double tir = std::numeric_limits<double>::quiet_NaN();
    double eval_mean_reward = std::numeric_limits<double>::quiet_NaN();
    std::map<int, std::uint64_t> cut_histogram;
};

struct MetricsReport {
    std::string kind;  // train | eval
    std::string scenario;
    std::string agent;
    std::uint64_t config_hash = 0;
    std::string fixture_digest;
    double reward_margin = 24.0;  // reward constants behind the in-box rule
    double inside_scale = 0.1;
    std::vector<int> seeds;
    std::vector<SeedMetrics> per_seed;
    std::map<std::string, std::pair<double, double>> aggregate;  // mean, sd
    std::vector<std::string> log_files;
    std::vector<std::string> checkpoint_files;
};

inline std::pair<double, double> mean_sd(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    if (xs.size() < 2) return {m, 0.0};
    double s2 = 0.0;
    for (double x : xs) s2 += (x - m) * (x - m);
    return {m, std::sqrt(s2 / static_cast<double>(xs.size() - 1))};
}

inline void fill_aggregates(MetricsReport& rep) {
    auto collect = [&](auto proj) {
        std::vector<double> xs;
        for (const auto& s : rep.per_seed) {
            const double v = proj(s);
            if (std::isfinite(v)) xs.push_back(v);
        }
        return xs;
    };
    rep.aggregate["final100_mean_low_reward"] =
        mean_sd(collect([](const SeedMetrics& s) {
            return s.final100_mean_low_reward;
        }));
    rep.aggregate["mean_low_reward"] =
        mean_sd(collect([](const SeedMetrics& s) { return s.mean_low_reward; }));
    rep.aggregate["mean_high_reward"] =
        mean_sd(collect([](const SeedMetrics& s) { return s.mean_high_reward; }));
    rep.aggregate["tir"] =
        mean_sd(collect([](const SeedMetrics& s) { return s.tir; }));
    rep.aggregate["eval_mean_reward"] =
        mean_sd(collect([](const SeedMetrics& s) { return s.eval_mean_reward; }));
}

inline json seed_metrics_to_json(const SeedMetrics& s) {
    json j;
    j["seed"] = s.seed;
    j["episodes"] = s.episodes;
    j["low_steps"] = s.low_steps;
    j["final100_mean_low_reward"] = s.final100_mean_low_reward;
    j["mean_low_reward"] = s.mean_low_reward;
    j["mean_high_reward"] = s.mean_high_reward;
    if (std::isfinite(s.fcr_first_epoch)) j["fcr_first_epoch"] = s.fcr_first_epoch;
    if (std::isfinite(s.fcr_final_epoch)) j["fcr_final_epoch"] = s.fcr_final_epoch;
    if (std::isfinite(s.tir)) j["tir"] = s.tir;
    if (std::isfinite(s.eval_mean_reward)) j["eval_mean_reward"] = s.eval_mean_reward;
    json h = json::object();
    for (const auto& [k, v] : s.cut_histogram) h[std::to_string(k)] = v;
    j["cut_histogram"] = std::move(h);
    return j;
}

inline SeedMetrics seed_metrics_from_json(const json& j) {
    SeedMetrics s;
    s.seed = j.at("seed").get<int>();
    s.episodes = j.at("episodes").get<std::uint64_t>();
    s.low_steps = j.at("low_steps").get<std::uint64_t>();
    s.final100_mean_low_reward = j.at("final100_mean_low_reward").get<double>();
    s.mean_low_reward = j.at("mean_low_reward").get<double>();
    s.mean_high_reward = j.at("mean_high_reward").get<double>();
    if (j.contains("fcr_first_epoch"))
        s.fcr_first_epoch = j.at("fcr_first_epoch").get<double>();
    if (j.contains("fcr_final_epoch"))
        s.fcr_final_epoch = j.at("fcr_final_epoch").get<double>();
    if (j.contains("tir")) s.tir = j.at("tir").get<double>();
    if (j.contains("eval_mean_reward"))
        s.eval_mean_reward = j.at("eval_mean_reward").get<double>();
    for (const auto& [k, v] : j.at("cut_histogram").items())
        s.cut_histogram[std::atoi(k.c_str())] = v.get<std::uint64_t>();
    return s;
}

inline json report_to_json(const MetricsReport& rep) {
    json j;
    j["schema"] = "ccm-report-v1";
    j["kind"] = rep.kind;
    j["scenario"] = rep.scenario;
    j["agent"] = rep.agent;
    j["config_hash"] = digest_hex(rep.config_hash);
    j["fixture_digest"] = rep.fixture_digest;
    j["reward_margin"] = rep.reward_margin;
    j["inside_scale"] = rep.inside_scale;
    j["seeds"] = rep.seeds;
    j["per_seed"] = json::array();
    for (const auto& s : rep.per_seed) j["per_seed"].push_back(seed_metrics_to_json(s));
    json agg = json::object();
    for (const auto& [k, ms] : rep.aggregate)
        agg[k] = {{"mean", ms.first}, {"sd", ms.second}};
    j["aggregate"] = std::move(agg);
    j["log_files"] = rep.log_files;
    j["checkpoint_files"] = rep.checkpoint_files;
    return j;
}

inline MetricsReport report_from_json(const json& j) {
    MetricsReport rep;
    rep.kind = j.at("kind").get<std::string>();
    rep.scenario = j.at("scenario").get<std::string>();
    rep.agent = j.at("agent").get<std::string>();
    rep.config_hash = std::strtoull(
        j.at("config_hash").get<std::string>().c_str(), nullptr, 16);
    rep.fixture_digest = j.at("fixture_digest").get<std::string>();
    rep.reward_margin = j.at("reward_margin").get<double>();
    rep.inside_scale = j.at("inside_scale").get<double>();
    rep.seeds = j.at("seeds").get<std::vector<int>>();
    for (const auto& sj : j.at("per_seed"))
        rep.per_seed.push_back(seed_metrics_from_json(sj));
    for (const auto& [k, v] : j.at("aggregate").items())
        rep.aggregate[k] = {v.at("mean").get<double>(), v.at("sd").get<double>()};
    rep.log_files = j.at("log_files").get<std::vector<std::string>>();
    rep.checkpoint_files =
        j.at("checkpoint_files").get<std::vector<std::string>>();
    return rep;
}

inline MetricsReport load_report(const std::string& path) {
    try {
        return report_from_json(json::parse(read_text_file(path)));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad report file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// drivers

inline double goal_half_width_sum(const Scenario& s) {
    double acc = 0.0;
    for (double h : s.goal.half_width) acc += h;
    return acc;
}

inline SeedMetrics metrics_from_accumulator(int seed, const MetricsAccumulator& acc) {
    SeedMetrics m;
    m.seed = seed;
    m.episodes = acc.episodes().size();
    for (const auto& e : acc.episodes()) m.low_steps += e.low_n;
    m.final100_mean_low_reward = acc.final_mean_low_reward(100);
    m.mean_low_reward = acc.mean_low_reward();
    m.mean_high_reward = acc.mean_high_reward();
    m.fcr_first_epoch = acc.fcr_first_epoch();
    m.fcr_final_epoch = acc.fcr_final_epoch();
    m.cut_histogram = acc.cut_histogram();
    return m;
}

inline void write_curves_csv(const std::string& path,
                             const MetricsAccumulator& acc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write curves file: " + path);
    out << "episode,mean_low_reward,mean_up_reward,mean_high_reward,"
           "loss_policy_low,loss_value_low,loss_policy_high,loss_value_high,"
           "loss_fcr\n";
    for (const auto& e : acc.episodes()) {
        out << e.episode << ',' << format_double(e.mean_low()) << ','
            << format_double(e.mean_up()) << ',' << format_double(e.mean_high())
            << ','
            << format_double(e.upd_low_n ? e.lp_low / e.upd_low_n
                                         : std::numeric_limits<double>::quiet_NaN())
            << ','
            << format_double(e.upd_low_n ? e.lv_low / e.upd_low_n
                                         : std::numeric_limits<double>::quiet_NaN())
            << ',' << format_double(e.lp_high) << ',' << format_double(e.lv_high)
            << ',' << format_double(e.fcr) << "\n";
    }
}

/// Default evaluation actuation per scenario: the physiological scenario is
/// judged end to end through the physical actuator, the synthetic ones at
/// their view boundaries.
inline Actuation default_actuation(const Scenario& s) {
    return s.meals ? Actuation::Cascade : Actuation::Direct;
}

inline MetricsReport run_train(const ExperimentConfig& cfg) {
    const Scenario scenario = load_scenario(cfg.scenario, cfg.fixture_dir);
    std::filesystem::create_directories(cfg.outdir);

    MetricsReport rep;
    rep.kind = "train";
    rep.scenario = cfg.scenario;
    rep.agent = cfg.agent;
    rep.config_hash = cfg.config_hash;
    rep.fixture_digest = digest_hex(scenario.fixture_digest);
    rep.reward_margin = cfg.hp.reward_margin;
    rep.inside_scale = cfg.hp.inside_scale;
    rep.seeds = cfg.seeds;

    for (int seed : cfg.seeds) {
        const std::string log_path =
            cfg.outdir + "/seed" + std::to_string(seed) + "_log.csv";
        const std::string ckpt_path =
            cfg.outdir + "/seed" + std::to_string(seed) + ".ckpt";
        const std::string curves_path =
            cfg.outdir + "/seed" + std::to_string(seed) + "_curves.csv";

        CsvSink csv(log_path);
        MetricsAccumulator acc(cfg.hp.reward_margin, cfg.hp.inside_scale,
                               goal_half_width_sum(scenario));
        TeeSink tee;
        tee.a = &csv;
        tee.b = &acc;

        SeedMetrics sm;
        if (cfg.agent == "ccm") {
            CcmAgent agent(scenario, cfg.hp, static_cast<std::uint64_t>(seed));
            agent.train(cfg.budget, seed, tee);
            agent.checkpoint().save(ckpt_path);
            sm = metrics_from_accumulator(seed, acc);
            if (cfg.eval_episodes > 0 && cfg.budget > 0) {
                const std::string eval_path = cfg.outdir + "/seed" +
                                              std::to_string(seed) +
                                              "_eval_log.csv";
                CsvSink ecsv(eval_path);
                MetricsAccumulator eacc(cfg.hp.reward_margin, cfg.hp.inside_scale,
                                        goal_half_width_sum(scenario));
                TeeSink etee;
                etee.a = &ecsv;
                etee.b = &eacc;
                EvalOptions eo;
                eo.episodes = cfg.eval_episodes;
                eo.seed = static_cast<std::uint64_t>(seed);
                eo.actuation = default_actuation(scenario);
                agent.eval(eo, seed, etee);
                sm.tir = eacc.in_box_fraction();
                sm.eval_mean_reward = eacc.mean_low_reward();
                rep.log_files.push_back(eval_path);
            }
        } else {
            FlatAgent agent(scenario, cfg.hp, static_cast<std::uint64_t>(seed));
            agent.train(cfg.budget, seed, tee);
            agent.checkpoint().save(ckpt_path);
            sm = metrics_from_accumulator(seed, acc);
            if (cfg.eval_episodes > 0 && cfg.budget > 0) {
                const std::string eval_path = cfg.outdir + "/seed" +
                                              std::to_string(seed) +
                                              "_eval_log.csv";
                CsvSink ecsv(eval_path);
                MetricsAccumulator eacc(cfg.hp.reward_margin, cfg.hp.inside_scale,
                                        goal_half_width_sum(scenario));
                TeeSink etee;
                etee.a = &ecsv;
                etee.b = &eacc;
                EvalOptions eo;
                eo.episodes = cfg.eval_episodes;
                eo.seed = static_cast<std::uint64_t>(seed);
                agent.eval(eo, seed, etee);
                sm.tir = eacc.in_box_fraction();
                sm.eval_mean_reward = eacc.mean_low_reward();
                rep.log_files.push_back(eval_path);
            }
        }
        csv.close();
        write_curves_csv(curves_path, acc);
        rep.per_seed.push_back(std::move(sm));
        rep.log_files.push_back(log_path);
        rep.checkpoint_files.push_back(ckpt_path);
    }

    fill_aggregates(rep);
    write_text_file(cfg.outdir + "/report.json",
                    report_to_json(rep).dump(2) + "\n");
    return rep;
}

struct EvalRequest {
    std::string checkpoint;
    std::string scenario;
    std::string fixture_dir = ::ccm::fixture_dir();
    int episodes = 1;
    std::uint64_t seed = 0;
    std::string noise = "scenario";  // scenario | none | random_large
    std::optional<Actuation> actuation;
    int cohort = 0;  // glucose cohort sweep size
    std::string outdir = "eval_out";
    HyperParams hp;
};

inline std::optional<NoiseRegime> noise_override_from(const std::string& mode,
                                                      const Scenario& s) {
    if (mode == "scenario") return std::nullopt;
    if (mode == "none") return NoiseRegime{NoiseKind::None, 0.0, 12.0};
    if (mode == "random_large") {
        NoiseRegime r = s.noise;
        r.kind = NoiseKind::RandomLarge;
        if (r.trigger_prob <= 0.0) r.trigger_prob = 0.05;
        if (r.magnitude_factor <= 10.0) r.magnitude_factor = 12.0;
        return r;
    }
    throw ConfigError("unknown noise mode: " + mode);
}

inline MetricsReport run_eval(const EvalRequest& req) {
    const Scenario scenario = load_scenario(req.scenario, req.fixture_dir);
    std::filesystem::create_directories(req.outdir);
    const Checkpoint ck = Checkpoint::load(req.checkpoint);
    const double kind = ck.get("sig")[0];

    MetricsReport rep;
    rep.kind = "eval";
    rep.scenario = req.scenario;
    rep.agent = kind == CcmAgent::kAgentKind ? "ccm" : "flat";
    rep.fixture_digest = digest_hex(scenario.fixture_digest);
    rep.reward_margin = req.hp.reward_margin;
    rep.inside_scale = req.hp.inside_scale;
    rep.seeds = {static_cast<int>(req.seed)};

    const auto noise = noise_override_from(req.noise, scenario);
    const Actuation act = req.actuation.value_or(default_actuation(scenario));

    auto eval_one = [&](const Scenario& scen, const std::string& tag)
        -> SeedMetrics {
        const std::string log_path = req.outdir + "/eval_" + tag + "_log.csv";
        CsvSink csv(log_path);
        MetricsAccumulator acc(req.hp.reward_margin, req.hp.inside_scale,
                               goal_half_width_sum(scen));
        TeeSink tee;
        tee.a = &csv;
        tee.b = &acc;
        EvalOptions eo;
        eo.episodes = req.episodes;
        eo.seed = req.seed;
        eo.actuation = act;
        eo.noise_override = noise;
        if (kind == CcmAgent::kAgentKind) {
            CcmAgent agent(scen, req.hp, req.seed);
            agent.restore(ck);
            agent.eval(eo, static_cast<int>(req.seed), tee);
        } else {
            FlatAgent agent(scen, req.hp, req.seed);
            agent.restore(ck);
            agent.eval(eo, static_cast<int>(req.seed), tee);
        }
        csv.close();
        rep.log_files.push_back(log_path);
        SeedMetrics sm = metrics_from_accumulator(static_cast<int>(req.seed), acc);
        sm.tir = acc.in_box_fraction();
        sm.eval_mean_reward = acc.mean_low_reward();
        return sm;
    };

    if (req.cohort > 0) {
        if (!scenario.individual)
            throw ConfigError("cohort sweep needs a scenario with individuals");
        IndividualParams base = glucose_base_individual(req.fixture_dir);
        Rng rng = Rng::substream(7777, 1);  // the frozen test cohort
        auto cohort = make_cohort(base, req.cohort, rng);
        std::ofstream table(req.outdir + "/tir_table.csv", std::ios::binary);
        table << "group,id,tir,mean_reward\n";
        std::map<std::string, std::vector<double>> group_tir;
        for (const auto& ind : cohort) {
            Scenario scen = build_glucose(ind, req.fixture_dir);
            scen.noise = scenario.noise;
            auto sm = eval_one(scen, ind.group + std::to_string(ind.id));
            table << ind.group << ',' << ind.id << ',' << format_double(sm.tir)
                  << ',' << format_double(sm.eval_mean_reward) << "\n";
            group_tir[ind.group].push_back(sm.tir);
            rep.per_seed.push_back(std::move(sm));
        }
        for (const auto& [group, xs] : group_tir)
            rep.aggregate["tir_" + group] = mean_sd(xs);
    } else {
        rep.per_seed.push_back(eval_one(scenario, "s" + std::to_string(req.seed)));
    }

    fill_aggregates(rep);
    write_text_file(req.outdir + "/eval_report.json",
                    report_to_json(rep).dump(2) + "\n");
    return rep;
}

// ---------------------------------------------------------------------------
// compare / verify

struct CompareResult {
    std::map<std::string, double> delta_mean;  // a - b per aggregate metric
    std::map<std::string, std::pair<int, int>> sign_counts;  // (a>=b, total)
    std::string text;
};

inline CompareResult compare(const MetricsReport& a, const MetricsReport& b) {
    if (a.scenario != b.scenario)
        throw MismatchError("reports compare different scenarios: " + a.scenario +
                            " vs " + b.scenario);
    if (a.seeds != b.seeds)
        throw MismatchError("reports compare different seed sets");
    CompareResult out;
    std::ostringstream ss;
    ss << "metric,delta_mean,a_ge_b,seeds\n";
    for (const auto& [k, ma] : a.aggregate) {
        auto it = b.aggregate.find(k);
        if (it == b.aggregate.end()) continue;
        const double d = ma.first - it->second.first;
        out.delta_mean[k] = d;
        int ge = 0, tot = 0;
        auto proj = [&](const SeedMetrics& s) -> double {
            if (k == "final100_mean_low_reward") return s.final100_mean_low_reward;
            if (k == "mean_low_reward") return s.mean_low_reward;
            if (k == "mean_high_reward") return s.mean_high_reward;
            if (k == "tir") return s.tir;
            if (k == "eval_mean_reward") return s.eval_mean_reward;
            return std::numeric_limits<double>::quiet_NaN();
        };
        for (std::size_t i = 0;
             i < std::min(a.per_seed.size(), b.per_seed.size()); ++i) {
            const double va = proj(a.per_seed[i]);
            const double vb = proj(b.per_seed[i]);
            if (std::isfinite(va) && std::isfinite(vb)) {
                ++tot;
                if (va >= vb) ++ge;
            }
        }
        out.sign_counts[k] = {ge, tot};
        ss << k << ',' << format_double(d) << ',' << ge << ',' << tot << "\n";
    }
    out.text = ss.str();
    return out;
}

/// Re-derives every reported number from the emitted episode logs and diffs
/// them against the stored report. Returns the list of discrepancies.
inline std::vector<std::string> verify_report(const std::string& dir) {
    const std::string report_path = dir + "/report.json";
    MetricsReport rep = load_report(report_path);
    const Scenario scenario = load_scenario(rep.scenario);
    std::vector<std::string> issues;

    for (const auto& sm : rep.per_seed) {
        const std::string log_path =
            dir + "/seed" + std::to_string(sm.seed) + "_log.csv";
        MetricsAccumulator acc(rep.reward_margin, rep.inside_scale,
                               goal_half_width_sum(scenario));
        for_each_log_row(log_path, [&](const LogRow& r) { acc.row(r); });
        const SeedMetrics redo = metrics_from_accumulator(sm.seed, acc);

        auto check = [&](const char* what, double want, double have) {
            const bool both_nan = std::isnan(want) && std::isnan(have);
            if (!both_nan && std::abs(want - have) > 1e-12)
                issues.push_back("seed " + std::to_string(sm.seed) + " " + what +
                                 ": report " + format_double(want) +
                                 " != derived " + format_double(have));
        };
        check("final100_mean_low_reward", sm.final100_mean_low_reward,
              redo.final100_mean_low_reward);
        check("mean_low_reward", sm.mean_low_reward, redo.mean_low_reward);
        check("mean_high_reward", sm.mean_high_reward, redo.mean_high_reward);
        check("fcr_first_epoch", sm.fcr_first_epoch, redo.fcr_first_epoch);
        check("fcr_final_epoch", sm.fcr_final_epoch, redo.fcr_final_epoch);
        if (redo.cut_histogram != sm.cut_histogram)
            issues.push_back("seed " + std::to_string(sm.seed) +
                             " cut_histogram differs");
        if (redo.episodes != sm.episodes)
            issues.push_back("seed " + std::to_string(sm.seed) +
                             " episode count differs");

        // post-training evaluation metrics come from the eval log
        const std::string eval_path =
            dir + "/seed" + std::to_string(sm.seed) + "_eval_log.csv";
        if (std::isfinite(sm.tir) && std::filesystem::exists(eval_path)) {
            MetricsAccumulator eacc(rep.reward_margin, rep.inside_scale,
                                    goal_half_width_sum(scenario));
            for_each_log_row(eval_path, [&](const LogRow& r) { eacc.row(r); });
            check("tir", sm.tir, eacc.in_box_fraction());
            check("eval_mean_reward", sm.eval_mean_reward, eacc.mean_low_reward());
        }
    }
    return issues;
}

}  // namespace ccm
