// confcal: builds confidence-calibration SFT datasets from sampled reasoning
// chains, runs the discrete-policy calibration simulator, and scores
// calibration metrics and rationale faithfulness.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "confcal/calib_rl.hpp"
#include "confcal/errors.hpp"
#include "confcal/forge.hpp"
#include "confcal/gateway.hpp"
#include "confcal/judge.hpp"
#include "confcal/metrics.hpp"
#include "confcal/rng.hpp"
#include "confcal/runner.hpp"
#include "confcal/sampler.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct ProviderFlags {
    std::optional<std::string> base_url;
    std::optional<std::string> api_key_env;
    std::optional<std::string> model;
    std::optional<std::string> embed_model;
    std::optional<int> timeout_ms;
    std::optional<int> max_retries;
    std::optional<int> max_in_flight;

    void add_to(CLI::App* cmd, const std::string& prefix) {
        cmd->add_option("--" + prefix + "-base-url", base_url, "Provider base URL");
        cmd->add_option("--" + prefix + "-api-key-env", api_key_env,
                        "Env var holding the API key");
        cmd->add_option("--" + prefix + "-model", model, "Model id");
        cmd->add_option("--" + prefix + "-embed-model", embed_model, "Embedding model id");
        cmd->add_option("--" + prefix + "-timeout-ms", timeout_ms, "Per-attempt timeout");
        cmd->add_option("--" + prefix + "-max-retries", max_retries, "Retry budget");
        cmd->add_option("--" + prefix + "-max-in-flight", max_in_flight,
                        "Concurrent request cap");
    }

    void apply(confcal::ProviderConfig& cfg) const {
        if (base_url) cfg.base_url = *base_url;
        if (api_key_env) cfg.api_key_env = *api_key_env;
        if (model) cfg.model_id = *model;
        if (embed_model) cfg.embed_model = *embed_model;
        if (timeout_ms) cfg.timeout_ms = *timeout_ms;
        if (max_retries) cfg.max_retries = *max_retries;
        if (max_in_flight) cfg.max_in_flight = *max_in_flight;
    }
};

// Flag > config file > default.
struct PipelineFlags {
    std::optional<std::string> config_path;
    std::optional<std::string> corpus;
    std::optional<std::string> out;
    std::optional<std::size_t> n_samples;
    std::optional<double> temperature;
    std::optional<double> threshold;
    std::optional<std::uint64_t> seed_sampling;
    std::optional<std::uint64_t> seed_representative;
    std::optional<std::uint64_t> seed_rl;
    std::optional<std::string> mock_script;
    std::optional<std::vector<std::string>> stages;
    ProviderFlags provider;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Pipeline config JSON file");
        cmd->add_option("--corpus", corpus, "Question corpus JSONL");
        cmd->add_option("--out", out, "Output directory");
        cmd->add_option("--n-samples", n_samples, "Responses sampled per question");
        cmd->add_option("--temperature", temperature, "Sampling temperature");
        cmd->add_option("--threshold", threshold, "Clustering similarity threshold");
        cmd->add_option("--seed-sampling", seed_sampling, "Sampling seed");
        cmd->add_option("--seed-representative", seed_representative,
                        "Representative-pick seed");
        cmd->add_option("--seed-rl", seed_rl, "RL simulator seed");
        cmd->add_option("--mock-script", mock_script,
                        "Mock provider script (JSON); makes the run offline");
        cmd->add_option("--stages", stages, "Stages to run (sample cluster forge eval)")
            ->delimiter(',');
        provider.add_to(cmd, "provider");
    }

    confcal::PipelineConfig resolve() const {
        confcal::PipelineConfig cfg;
        if (config_path) {
            cfg = confcal::load_pipeline_config(*config_path);
        }
        if (corpus) cfg.corpus_path = *corpus;
        if (out) cfg.output_dir = *out;
        if (n_samples) cfg.n_samples = *n_samples;
        if (temperature) cfg.temperature = *temperature;
        if (threshold) cfg.threshold = *threshold;
        if (seed_sampling) cfg.seed_sampling = *seed_sampling;
        if (seed_representative) cfg.seed_representative = *seed_representative;
        if (seed_rl) cfg.seed_rl = *seed_rl;
        if (mock_script) cfg.mock_script_path = *mock_script;
        if (stages) cfg.stages = confcal::stage_mask(*stages);
        provider.apply(cfg.subject_model);
        return cfg;
    }
};

confcal::Gateway make_gateway(const confcal::PipelineConfig& cfg) {
    if (!cfg.mock_script_path.empty()) {
        return confcal::Gateway(confcal::load_mock_script(cfg.mock_script_path));
    }
    return confcal::Gateway();
}

void emit_or_print(const json& doc, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << confcal::canonical_json(doc) << "\n";
    } else {
        confcal::emit_report(doc, out_path);
    }
}

int cmd_run_stages(const PipelineFlags& flags, unsigned forced_stages) {
    auto cfg = flags.resolve();
    if (forced_stages != 0 && !flags.stages) {
        cfg.stages = forced_stages;
    }
    auto gateway = make_gateway(cfg);
    const auto manifest = confcal::run_pipeline(cfg, gateway);
    std::cout << "run " << manifest.run_id << " finished; artifacts in " << cfg.output_dir
              << "\n";
    return kExitOk;
}

int cmd_rl_sim(const std::vector<double>& states, const std::string& reward,
               confcal::PpoConfig ppo, std::uint64_t seed, const std::string& out_path,
               const std::string& trace_csv) {
    confcal::SimEnv env;
    env.rng_seed = seed;
    for (std::size_t i = 0; i < states.size(); ++i) {
        env.states.push_back(confcal::SimState{"s" + std::to_string(i), states[i]});
    }
    const auto kind =
        reward == "naive" ? confcal::RewardKind::naive : confcal::RewardKind::quadratic;
    const auto result = confcal::train_policy(env, ppo, kind);
    emit_or_print(confcal::to_json(result.report), out_path);
    if (!trace_csv.empty()) {
        std::ofstream csv(trace_csv, std::ios::trunc);
        if (!csv) {
            throw confcal::IoError("cannot write " + trace_csv);
        }
        csv << "update,expected_reward\n";
        for (std::size_t i = 0; i < result.report.expected_reward_trace.size(); ++i) {
            char line[64];
            std::snprintf(line, sizeof(line), "%zu,%.6f\n", i + 1,
                          result.report.expected_reward_trace[i]);
            csv << line;
        }
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"confidence-calibration dataset builder and evaluation toolkit"};
    app.require_subcommand(1);

    // --- sample / cluster / build-dataset (pipeline stages) ---
    PipelineFlags sample_flags;
    auto* sample_cmd = app.add_subcommand("sample", "Sample N responses per question");
    sample_flags.add_to(sample_cmd);

    PipelineFlags cluster_flags;
    auto* cluster_cmd =
        app.add_subcommand("cluster", "Embed and cluster previously sampled responses");
    cluster_flags.add_to(cluster_cmd);

    PipelineFlags build_flags;
    auto* build_cmd = app.add_subcommand(
        "build-dataset", "Run the pipeline (sample, cluster, forge, eval) end to end");
    build_flags.add_to(build_cmd);

    // --- rl-sim ---
    auto* rl_cmd = app.add_subcommand("rl-sim", "Train the discrete confidence policy");
    std::vector<double> rl_states{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    std::string rl_reward = "quadratic";
    confcal::PpoConfig ppo;
    std::string rl_baseline = "running_mean";
    std::uint64_t rl_seed = 3;
    std::string rl_out;
    std::string rl_trace_csv;
    rl_cmd->add_option("--states", rl_states, "Latent accuracies of the simulator states")
        ->delimiter(',');
    rl_cmd->add_option("--reward", rl_reward, "Reward kind")
        ->check(CLI::IsMember({"quadratic", "naive"}));
    rl_cmd->add_option("--updates", ppo.n_updates, "Number of policy updates");
    rl_cmd->add_option("--batch", ppo.batch_size, "Batch size per update");
    rl_cmd->add_option("--lr", ppo.learning_rate, "Learning rate");
    rl_cmd->add_option("--clip", ppo.clip_epsilon, "PPO clip epsilon");
    rl_cmd->add_option("--epochs", ppo.n_epochs, "Surrogate epochs per batch");
    rl_cmd->add_option("--baseline", rl_baseline, "Advantage baseline")
        ->check(CLI::IsMember({"running_mean", "none"}));
    rl_cmd->add_option("--seed-rl", rl_seed, "Simulator seed");
    rl_cmd->add_option("--out", rl_out, "Training report JSON path (stdout when omitted)");
    rl_cmd->add_option("--trace-csv", rl_trace_csv, "CSV of (update, expected_reward)");

    // --- eval ---
    auto* eval_cmd =
        app.add_subcommand("eval", "Compute calibration metrics from outcome records");
    std::string eval_outcomes;
    std::string eval_answerable;
    std::string eval_unanswerable;
    std::string eval_out;
    eval_cmd->add_option("--outcomes", eval_outcomes,
                         "Outcome JSONL {\"correct\",\"confidence\"}");
    eval_cmd->add_option("--answerable", eval_answerable,
                         "Outcome JSONL for the answerable subset (gap mode)");
    eval_cmd->add_option("--unanswerable", eval_unanswerable,
                         "Outcome JSONL for the unanswerable subset (gap mode)");
    eval_cmd->add_option("--out", eval_out, "Report path (stdout when omitted)");

    // --- judge ---
    auto* judge_cmd =
        app.add_subcommand("judge", "Score rationale faithfulness with a judge model");
    std::string judge_cases_path;
    std::size_t judge_budget = 0;
    std::string judge_out;
    std::string judge_mock;
    ProviderFlags judge_provider_flags;
    judge_cmd->add_option("--cases", judge_cases_path, "Judge cases JSONL")->required();
    judge_cmd->add_option("--budget", judge_budget,
                          "Evaluate only the top-K cases by reasoning-chain count");
    judge_cmd->add_option("--out", judge_out, "Report path (stdout when omitted)");
    judge_cmd->add_option("--mock-script", judge_mock, "Mock provider script (JSON)");
    judge_provider_flags.add_to(judge_cmd, "provider");

    // --- report ---
    auto* report_cmd =
        app.add_subcommand("report", "Canonicalize reports and verify run manifests");
    std::string report_manifest;
    bool report_verify = false;
    std::string report_in;
    std::string report_out;
    std::string report_csv;
    report_cmd->add_option("--manifest", report_manifest, "Run manifest to inspect");
    report_cmd->add_flag("--verify", report_verify, "Check artifact digests");
    report_cmd->add_option("--in", report_in, "Report JSON to canonicalize");
    report_cmd->add_option("--out", report_out, "Canonical output path (stdout when omitted)");
    report_cmd->add_option("--csv", report_csv,
                           "For training reports: CSV of (update, expected_reward)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (sample_cmd->parsed()) {
            return cmd_run_stages(sample_flags, confcal::stage_mask({"sample"}));
        }
        if (cluster_cmd->parsed()) {
            return cmd_run_stages(cluster_flags, confcal::stage_mask({"cluster"}));
        }
        if (build_cmd->parsed()) {
            return cmd_run_stages(build_flags, 0);
        }
        if (rl_cmd->parsed()) {
            ppo.baseline = rl_baseline == "none" ? confcal::BaselineKind::none
                                                 : confcal::BaselineKind::running_mean;
            return cmd_rl_sim(rl_states, rl_reward, ppo, rl_seed, rl_out, rl_trace_csv);
        }
        if (eval_cmd->parsed()) {
            const bool gap_mode = !eval_answerable.empty() || !eval_unanswerable.empty();
            if (gap_mode) {
                if (eval_answerable.empty() || eval_unanswerable.empty()) {
                    throw confcal::ConfigError(
                        "gap mode needs both --answerable and --unanswerable");
                }
                const auto answerable = confcal::load_outcomes(eval_answerable);
                const auto unanswerable = confcal::load_outcomes(eval_unanswerable);
                emit_or_print(confcal::to_json(confcal::confidence_gap(answerable, unanswerable)),
                              eval_out);
            } else {
                if (eval_outcomes.empty()) {
                    throw confcal::ConfigError("eval needs --outcomes (or the gap-mode pair)");
                }
                const auto outcomes = confcal::load_outcomes(eval_outcomes);
                if (outcomes.empty()) {
                    throw confcal::ConfigError("no outcome records in " + eval_outcomes);
                }
                emit_or_print(confcal::to_json(confcal::metrics_report(outcomes)), eval_out);
            }
            return kExitOk;
        }
        if (judge_cmd->parsed()) {
            auto cases = confcal::load_judge_cases(judge_cases_path);
            if (judge_budget > 0) {
                cases = confcal::select_cases(std::move(cases), judge_budget);
            }
            confcal::ProviderConfig provider;
            judge_provider_flags.apply(provider);
            if (judge_mock.empty() && provider.base_url.empty()) {
                throw confcal::ConfigError(
                    "judge needs --provider-base-url or --mock-script");
            }
            auto gateway = judge_mock.empty()
                               ? confcal::Gateway()
                               : confcal::Gateway(confcal::load_mock_script(judge_mock));
            const auto report = confcal::faithfulness(gateway, provider, cases);
            emit_or_print(confcal::to_json(report), judge_out);
            return kExitOk;
        }
        if (report_cmd->parsed()) {
            if (!report_manifest.empty()) {
                if (report_verify) {
                    const auto mismatches = confcal::verify_manifest(report_manifest);
                    if (mismatches.empty()) {
                        std::cout << "manifest ok\n";
                        return kExitOk;
                    }
                    for (const auto& artifact : mismatches) {
                        std::cerr << "digest mismatch: " << artifact << "\n";
                    }
                    return kExitStage;
                }
                std::ifstream in(report_manifest);
                if (!in) {
                    throw confcal::IoError("cannot read " + report_manifest);
                }
                json doc;
                try {
                    in >> doc;
                } catch (const json::exception& e) {
                    throw confcal::ConfigError("manifest parse error: " +
                                               std::string(e.what()));
                }
                emit_or_print(doc, report_out);
                return kExitOk;
            }
            if (report_in.empty()) {
                throw confcal::ConfigError("report needs --manifest or --in");
            }
            std::ifstream in(report_in);
            if (!in) {
                throw confcal::IoError("cannot read " + report_in);
            }
            json doc;
            try {
                in >> doc;
            } catch (const json::exception& e) {
                throw confcal::ConfigError("report parse error: " + std::string(e.what()));
            }
            emit_or_print(doc, report_out);
            if (!report_csv.empty()) {
                if (!doc.contains("expected_reward_trace")) {
                    throw confcal::ConfigError("--csv needs a training report");
                }
                std::ofstream csv(report_csv, std::ios::trunc);
                const auto trace = doc.at("expected_reward_trace").get<std::vector<double>>();
                csv << "update,expected_reward\n";
                for (std::size_t i = 0; i < trace.size(); ++i) {
                    char line[64];
                    std::snprintf(line, sizeof(line), "%zu,%.6f\n", i + 1, trace[i]);
                    csv << line;
                }
            }
            return kExitOk;
        }
    } catch (const confcal::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const confcal::CorpusError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const confcal::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    } catch (const confcal::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitOk;
}
