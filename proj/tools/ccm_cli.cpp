#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ccm/ccm.hpp"

namespace {

// exit codes: 0 success, 1 configuration error, 2 runtime failure
constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

void print_catalog(const ccm::Scenario& scenario) {
    auto graph = scenario.graph.instantiate(0);
    const auto catalog = ccm::enumerate_min_cuts(graph);
    const auto feats = ccm::features(graph, catalog, {});

    std::printf("scenario: %s   nodes: %zu   cuts: %zu\n",
                scenario.name.c_str(), graph.size(), catalog.cuts.size());
    std::printf("%-8s %-16s %-6s %-5s %-5s %-8s %-8s\n", "cut_id", "nodes",
                "isCon", "dis", "num", "indeg", "outdeg");
    for (std::size_t i = 0; i < catalog.cuts.size(); ++i) {
        std::string nodes;
        for (std::size_t k = 0; k < catalog.cuts[i].nodes.size(); ++k)
            nodes += (k ? "," : "") + std::to_string(catalog.cuts[i].nodes[k]);
        std::printf("%-8zu %-16s %-6d %-5d %-5d %-8.3f %-8.3f\n", i,
                    nodes.c_str(), feats[i].is_controllable, feats[i].distance,
                    feats[i].size, feats[i].extras[0], feats[i].extras[1]);
    }
    std::printf("\ncsv:\ncut_id,nodes,isCon,dis,num,indeg,outdeg\n");
    for (std::size_t i = 0; i < catalog.cuts.size(); ++i) {
        std::string nodes;
        for (std::size_t k = 0; k < catalog.cuts[i].nodes.size(); ++k)
            nodes += (k ? ";" : "") + std::to_string(catalog.cuts[i].nodes[k]);
        std::printf("%zu,%s,%d,%d,%d,%s,%s\n", i, nodes.c_str(),
                    feats[i].is_controllable, feats[i].distance, feats[i].size,
                    ccm::format_double(feats[i].extras[0]).c_str(),
                    ccm::format_double(feats[i].extras[1]).c_str());
    }
}

void print_env_info(const ccm::Scenario& scenario) {
    std::printf("scenario: %s\n", scenario.name.c_str());
    std::printf("episode length: %d\n", scenario.episode_len);
    std::printf("fixture digest: %s\n",
                ccm::digest_hex(scenario.fixture_digest).c_str());
    std::printf("noise: %s (p=%s, factor=%s)\n",
                scenario.noise.kind == ccm::NoiseKind::None ? "none"
                                                            : "random_large",
                ccm::format_double(scenario.noise.trigger_prob).c_str(),
                ccm::format_double(scenario.noise.magnitude_factor).c_str());
    std::printf("goal:");
    for (std::size_t d = 0; d < scenario.goal.dim(); ++d)
        std::printf(" [%s, %s]",
                    ccm::format_double(scenario.goal.lo(d)).c_str(),
                    ccm::format_double(scenario.goal.hi(d)).c_str());
    std::printf("\nnodes:\n");
    for (const auto& n : scenario.graph.nodes) {
        const char* kind = "linear_gaussian";
        if (n.equation.kind == ccm::StructuralEquation::Kind::HillDelay)
            kind = "hill_delay";
        if (n.equation.kind == ccm::StructuralEquation::Kind::OdeRate)
            kind = "ode_rate";
        std::printf("  %3d  %-10s  %-14s  init=%s\n", n.id,
                    ccm::to_string(n.role).c_str(), kind,
                    ccm::format_double(n.init_value).c_str());
    }
    std::printf("\n");
    print_catalog(scenario);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"causal coupled mechanisms control toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    auto* train = app.add_subcommand("train", "train an agent from a config file");
    train->add_option("config", config_path, "JSON experiment config")->required();

    std::string ckpt, scenario_name, noise_mode = "scenario", actuation_str;
    std::string eval_outdir = "eval_out";
    int episodes = 1, cohort = 0;
    std::uint64_t eval_seed = 0;
    auto* eval = app.add_subcommand("eval", "evaluate a trained checkpoint");
    eval->add_option("checkpoint", ckpt, "checkpoint file")->required();
    eval->add_option("--scenario", scenario_name, "scenario name")->required();
    eval->add_option("--episodes", episodes, "evaluation episodes");
    eval->add_option("--seed", eval_seed, "evaluation seed");
    eval->add_option("--noise", noise_mode, "scenario | none | random_large");
    eval->add_option("--actuation", actuation_str, "direct | cascade");
    eval->add_option("--cohort", cohort, "evaluate a perturbed cohort this large");
    eval->add_option("--outdir", eval_outdir, "output directory");

    std::string cuts_scenario;
    auto* cuts = app.add_subcommand("cuts", "print the minimum-cut catalog");
    cuts->add_option("scenario", cuts_scenario, "scenario name")->required();

    auto* env = app.add_subcommand("env", "environment utilities");
    std::string env_name;
    auto* env_info = env->add_subcommand("info", "describe a scenario fixture");
    env_info->add_option("name", env_name, "scenario name")->required();

    std::string report_a, report_b;
    auto* cmp = app.add_subcommand("compare", "diff two report.json files");
    cmp->add_option("a", report_a, "first report")->required();
    cmp->add_option("b", report_b, "second report")->required();

    std::string verify_dir;
    auto* verify = app.add_subcommand("verify-report",
                                      "re-derive a report from its logs");
    verify->add_option("dir", verify_dir, "training output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto cfg = ccm::load_config(config_path);
            const auto rep = ccm::run_train(cfg);
            std::printf("wrote %s/report.json\n", cfg.outdir.c_str());
            for (const auto& s : rep.per_seed)
                std::printf("seed %d: final100 mean low reward %s\n", s.seed,
                            ccm::format_double(s.final100_mean_low_reward).c_str());
            return kOk;
        }
        if (*eval) {
            ccm::EvalRequest req;
            req.checkpoint = ckpt;
            req.scenario = scenario_name;
            req.episodes = episodes;
            req.seed = eval_seed;
            req.noise = noise_mode;
            req.cohort = cohort;
            req.outdir = eval_outdir;
            if (!actuation_str.empty()) {
                if (actuation_str == "direct") req.actuation = ccm::Actuation::Direct;
                else if (actuation_str == "cascade")
                    req.actuation = ccm::Actuation::Cascade;
                else throw ccm::ConfigError("bad --actuation: " + actuation_str);
            }
            const auto rep = ccm::run_eval(req);
            for (const auto& s : rep.per_seed)
                std::printf("eval mean reward %s   in-range fraction %s\n",
                            ccm::format_double(s.eval_mean_reward).c_str(),
                            ccm::format_double(s.tir).c_str());
            std::printf("wrote %s/eval_report.json\n", req.outdir.c_str());
            return kOk;
        }
        if (*cuts) {
            print_catalog(ccm::load_scenario(cuts_scenario));
            return kOk;
        }
        if (*env_info) {
            print_env_info(ccm::load_scenario(env_name));
            return kOk;
        }
        if (*cmp) {
            const auto res =
                ccm::compare(ccm::load_report(report_a), ccm::load_report(report_b));
            std::fputs(res.text.c_str(), stdout);
            return kOk;
        }
        if (*verify) {
            const auto issues = ccm::verify_report(verify_dir);
            if (issues.empty()) {
                std::printf("report verified: every number re-derives from the logs\n");
                return kOk;
            }
            for (const auto& s : issues) std::fprintf(stderr, "%s\n", s.c_str());
            return kRuntimeFailure;
        }
    } catch (const ccm::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfigFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeFailure;
    }
    return kConfigFailure;
}
