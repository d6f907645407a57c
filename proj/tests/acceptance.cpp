// Acceptance suite: one pass/fail line per criterion, non-zero exit when any
// criterion fails. Each criterion pins its tolerance in code.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "confcal/calib_rl.hpp"
#include "confcal/cluster.hpp"
#include "confcal/forge.hpp"
#include "confcal/gateway.hpp"
#include "confcal/judge.hpp"
#include "confcal/metrics.hpp"
#include "confcal/rng.hpp"
#include "confcal/runner.hpp"
#include "confcal/sampler.hpp"
#include "fixture_utils.hpp"

#ifndef CONFCAL_CLI_PATH
#define CONFCAL_CLI_PATH "confcal"
#endif

namespace fs = std::filesystem;
using namespace confcal;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int number, const std::string& description, bool ok, const std::string& detail) {
    std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << number << ": " << description;
    if (!detail.empty()) {
        std::cout << " (" << detail << ")";
    }
    std::cout << std::endl;
    if (!ok) {
        ++g_failures;
    }
}

void run_criterion(int number, const std::string& description,
                   const std::function<std::pair<bool, std::string>()>& body) {
    try {
        const auto [ok, detail] = body();
        report(number, description, ok, detail);
    } catch (const std::exception& e) {
        report(number, description, false, std::string("exception: ") + e.what());
    }
}

double seconds_since(clock_type::time_point start) {
    return std::chrono::duration<double>(clock_type::now() - start).count();
}

// --- criterion 1 -----------------------------------------------------------

std::pair<bool, std::string> criterion_gap() {
    const std::vector<OutcomeRecord> answerable{{true, 0.7406}};
    const std::vector<OutcomeRecord> unanswerable{{false, 0.4962}};
    const auto gap = confidence_gap(answerable, unanswerable);
    const double error = std::abs(gap.delta - 0.2444);
    std::ostringstream detail;
    detail << "delta=" << gap.delta << " |err|=" << error;
    return {error <= 1e-12, detail.str()};
}

// --- criterion 2 -----------------------------------------------------------

std::pair<bool, std::string> criterion_metric_oracles() {
    const auto start = clock_type::now();
    std::mt19937_64 rng(20240601);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 50);
        std::vector<OutcomeRecord> records(n);
        for (auto& r : records) {
            r.correct = uniform_unit(rng) < 0.5;
            r.confidence = static_cast<double>(uniform_index(rng, 21)) / 20.0;
        }

        // Pairwise brute force for AUROC.
        double wins = 0.0;
        std::size_t pairs = 0;
        for (const auto& p : records) {
            if (!p.correct) continue;
            for (const auto& q : records) {
                if (q.correct) continue;
                ++pairs;
                wins += p.confidence > q.confidence ? 1.0
                        : p.confidence == q.confidence ? 0.5
                                                       : 0.0;
            }
        }
        const auto fast = auroc(records);
        if (pairs == 0) {
            if (fast.has_value()) {
                return {false, "auroc defined on single-class input"};
            }
        } else {
            const double slow = wins / static_cast<double>(pairs);
            if (!fast.has_value() || std::abs(*fast - slow) > 1e-12) {
                return {false, "auroc mismatch vs pairwise oracle"};
            }
        }

        // Direct per-sample summation for the Eq-style ECE.
        double direct = 0.0;
        for (const auto& r : records) {
            direct += std::abs((r.correct ? 1.0 : 0.0) - r.confidence);
        }
        direct /= static_cast<double>(n);
        if (std::abs(ece(records) - direct) > 1e-12) {
            return {false, "ece mismatch vs direct summation"};
        }
    }
    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "1000 instances, " << elapsed << "s";
    return {elapsed < 10.0, detail.str()};
}

// --- criterion 3 -----------------------------------------------------------

std::pair<bool, std::string> criterion_confidence_formula() {
    const auto start = clock_type::now();
    for (long long n = 1; n <= 1000; ++n) {
        int previous = 0;
        for (long long s = 1; s <= n; ++s) {
            const int expected =
                static_cast<int>(std::clamp((20 * s + n) / (2 * n), 1LL, 10LL));
            const int got = compute_confidence(static_cast<std::size_t>(s),
                                               static_cast<std::size_t>(n)).value;
            if (got != expected) {
                std::ostringstream detail;
                detail << "mismatch at s=" << s << " n=" << n << ": " << got
                       << " != " << expected;
                return {false, detail.str()};
            }
            if (got < previous) {
                return {false, "not monotone in s_c"};
            }
            previous = got;
        }
    }
    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "500500 pairs, " << elapsed << "s";
    return {elapsed < 5.0, detail.str()};
}

// --- criterion 4 -----------------------------------------------------------

std::pair<bool, std::string> criterion_reward_optimum() {
    for (int k = 0; k <= 100; ++k) {
        const double p = static_cast<double>(k) / 100.0;

        // Exhaustive evaluation of expected_reward over the 11 levels.
        int brute = 0;
        double best = expected_reward(p, 0, RewardKind::quadratic);
        for (int level = 1; level <= 10; ++level) {
            const double value = expected_reward(p, level, RewardKind::quadratic);
            if (value > best) {
                best = value;
                brute = level;
            }
        }

        // Nearest level to 10p, ties toward the lower level, in exact
        // integer arithmetic on the grid index.
        const int nearest = (k + 4) / 10;

        const int got = optimal_level(p, RewardKind::quadratic);
        if (got != nearest || brute != nearest) {
            std::ostringstream detail;
            detail << "p=" << p << " optimal_level=" << got << " brute=" << brute
                   << " nearest=" << nearest;
            return {false, detail.str()};
        }
    }
    return {true, "101 grid points, exact"};
}

// --- criterion 5 -----------------------------------------------------------

std::pair<bool, std::string> criterion_gradient_check() {
    std::mt19937_64 rng(424242);
    const double eps = 0.2;
    const double step = 1e-6;
    int checked = 0;
    double worst = 0.0;
    while (checked < 100) {
        PolicyTable policy = make_policy(2);
        PolicyTable old_policy = make_policy(2);
        for (auto* table : {&policy, &old_policy}) {
            for (auto& row : table->logits) {
                for (auto& z : row) {
                    z = 2.0 * uniform_unit(rng) - 1.0;
                }
            }
        }
        SurrogateItem item;
        item.state = uniform_index(rng, 2);
        item.level = static_cast<int>(uniform_index(rng, kNumLevels));
        item.advantage = 4.0 * uniform_unit(rng) - 2.0;
        item.old_prob = old_policy.probs(item.state)[static_cast<std::size_t>(item.level)];
        const double ratio =
            policy.probs(item.state)[static_cast<std::size_t>(item.level)] / item.old_prob;
        if (std::abs(ratio - (1.0 - eps)) < 0.05 || std::abs(ratio - (1.0 + eps)) < 0.05 ||
            std::abs(item.advantage) < 0.05) {
            continue; // kink or vanishing advantage; not a test point
        }
        const std::vector<SurrogateItem> batch{item};
        const auto grad = surrogate_gradient(policy, batch, eps);
        for (std::size_t s = 0; s < policy.n_states(); ++s) {
            for (int a = 0; a < kNumLevels; ++a) {
                auto perturbed = policy;
                perturbed.logits[s][static_cast<std::size_t>(a)] += step;
                const double up = surrogate_value(perturbed, batch, eps);
                perturbed.logits[s][static_cast<std::size_t>(a)] -= 2.0 * step;
                const double down = surrogate_value(perturbed, batch, eps);
                const double numeric = (up - down) / (2.0 * step);
                const double analytic = grad[s][static_cast<std::size_t>(a)];
                const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
                const double rel = std::abs(numeric - analytic) / scale;
                worst = std::max(worst, rel);
                if (rel > 1e-4) {
                    std::ostringstream detail;
                    detail << "rel err " << rel << " at state " << s << " level " << a;
                    return {false, detail.str()};
                }
            }
        }
        ++checked;
    }
    std::ostringstream detail;
    detail << "100 points, worst rel err " << worst;
    return {true, detail.str()};
}

// --- criterion 6 -----------------------------------------------------------

std::pair<bool, std::string> criterion_rl_convergence() {
    const auto start = clock_type::now();
    SimEnv env;
    env.rng_seed = 20240607;
    for (int i = 1; i <= 9; ++i) {
        env.states.push_back(SimState{"p" + std::to_string(i), static_cast<double>(i) / 10.0});
    }
    PpoConfig cfg;
    cfg.n_updates = 30000; // within the 50,000-update budget
    cfg.batch_size = 128;

    const auto quadratic = train_policy(env, cfg, RewardKind::quadratic);
    int calibrated = 0;
    for (std::size_t s = 0; s < 9; ++s) {
        const int target =
            static_cast<int>(std::lround(10.0 * env.states[s].latent_accuracy));
        if (quadratic.report.per_state_modal_level[s] == target) {
            ++calibrated;
        }
    }

    const auto naive = train_policy(env, cfg, RewardKind::naive);
    int extreme = 0;
    for (const int level : naive.report.per_state_modal_level) {
        if (level == 0 || level == 10) {
            ++extreme;
        }
    }

    const double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "quadratic " << calibrated << "/9 at round(10p), naive " << extreme
           << "/9 at extremes, " << elapsed << "s";
    return {calibrated >= 8 && extreme >= 7 && elapsed < 60.0, detail.str()};
}

// --- criterion 7 -----------------------------------------------------------

std::pair<bool, std::string> criterion_clustering() {
    std::mt19937_64 rng(77001);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 200);
        std::vector<EmbeddingVector> embeddings;
        embeddings.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (!embeddings.empty() && uniform_unit(rng) < 0.35) {
                embeddings.push_back(embeddings[uniform_index(rng, embeddings.size())]);
            } else {
                embeddings.push_back(EmbeddingVector{unit_sphere_draw(rng, 16)});
            }
        }
        const double threshold = 0.5 + 0.49 * uniform_unit(rng);
        const auto set = greedy_cluster(embeddings, threshold);

        // Partition: disjoint, exhaustive, sizes sum to n.
        std::vector<int> seen(n, 0);
        std::size_t total = 0;
        for (const auto& cluster : set.clusters) {
            total += cluster.size();
            for (const auto m : cluster.member_indices) {
                seen[m] += 1;
            }
        }
        if (total != n) {
            return {false, "sizes do not sum to n"};
        }
        for (const int count : seen) {
            if (count != 1) {
                return {false, "not a partition"};
            }
        }

        // Seed cohesion.
        for (const auto& cluster : set.clusters) {
            for (const auto m : cluster.member_indices) {
                if (cosine(embeddings[cluster.seed_index], embeddings[m]) < threshold - 1e-12) {
                    return {false, "member below threshold of its seed"};
                }
            }
        }

        // Independent seed-scan oracle.
        std::vector<bool> taken(n, false);
        std::size_t cluster_index = 0;
        for (std::size_t seed = 0; seed < n; ++seed) {
            if (taken[seed]) {
                continue;
            }
            std::vector<std::size_t> expected{seed};
            taken[seed] = true;
            for (std::size_t j = seed + 1; j < n; ++j) {
                if (taken[j]) {
                    continue;
                }
                double dot = 0.0;
                for (std::size_t k = 0; k < embeddings[seed].values.size(); ++k) {
                    dot += embeddings[seed].values[k] * embeddings[j].values[k];
                }
                if (dot >= threshold) {
                    expected.push_back(j);
                    taken[j] = true;
                }
            }
            if (cluster_index >= set.clusters.size() ||
                set.clusters[cluster_index].member_indices != expected) {
                return {false, "disagrees with the seed-scan oracle"};
            }
            ++cluster_index;
        }
        if (cluster_index != set.clusters.size()) {
            return {false, "extra clusters beyond the oracle's"};
        }
    }
    return {true, "500 random sets, N <= 200"};
}

// --- criterion 8 -----------------------------------------------------------

std::pair<bool, std::string> criterion_end_to_end() {
    setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    const fs::path dir = fs::temp_directory_path() / "confcal_acceptance_e2e";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const auto corpus = testfix::fixture_corpus(8, 2); // 10 questions
    const auto corpus_path = (dir / "corpus.jsonl").string();
    testfix::write_corpus_jsonl(corpus, corpus_path);

    auto cfg = testfix::fixture_config(corpus_path, (dir / "out").string());
    const auto script = testfix::build_fixture_script(corpus, cfg);
    const auto script_path = (dir / "mock_script.json").string();
    testfix::write_mock_script(script, script_path);
    cfg.mock_script_path = script_path;

    const auto config_path = (dir / "pipeline.json").string();
    {
        std::ofstream out(config_path);
        out << canonical_json(pipeline_config_to_json(cfg)) << "\n";
    }

    const std::string command = std::string("\"") + CONFCAL_CLI_PATH +
                                "\" build-dataset --config \"" + config_path +
                                "\" > /dev/null";

    const auto artifacts = {"dataset.jsonl",  "dataset_manifest.json", "run_manifest.json",
                            "samples.jsonl",  "clusters.jsonl",        "outcomes.jsonl",
                            "metrics.json",   "gap.json"};

    const auto start = clock_type::now();
    if (std::system(command.c_str()) != 0) {
        return {false, "first CLI run failed"};
    }
    const double first_run_seconds = seconds_since(start);

    std::map<std::string, std::string> first_bytes;
    for (const auto* name : artifacts) {
        first_bytes[name] = testfix::slurp((dir / "out" / name).string());
        if (first_bytes[name].empty()) {
            return {false, std::string("missing artifact ") + name};
        }
    }

    if (std::system(command.c_str()) != 0) {
        return {false, "second CLI run failed"};
    }
    for (const auto* name : artifacts) {
        if (testfix::slurp((dir / "out" / name).string()) != first_bytes[name]) {
            return {false, std::string("artifact differs across runs: ") + name};
        }
    }

    fs::remove_all(dir);
    unsetenv("SOURCE_DATE_EPOCH");
    std::ostringstream detail;
    detail << "10 questions, 8 artifacts byte-identical, run " << first_run_seconds << "s";
    return {first_run_seconds < 5.0, detail.str()};
}

// --- criterion 9 -----------------------------------------------------------

std::string replace_slots(std::string text, const std::vector<std::string>& values) {
    std::size_t pos = 0;
    for (const auto& value : values) {
        pos = text.find("{}", pos);
        if (pos == std::string::npos) {
            throw std::runtime_error("template slot missing");
        }
        text.replace(pos, 2, value);
        pos += value.size();
    }
    return text;
}

std::pair<bool, std::string> criterion_prompt_fidelity() {
    // Rationale prompt: template verbatim modulo the three filled slots.
    Question question;
    question.id = "acc";
    question.text = "Sky High starred the actress who is married to which actor?";
    question.gold_answers = {"John Travolta"};
    WeightedSample correct;
    correct.sample.raw_text = "Kelly Preston, who is married to John Travolta.";
    correct.sample.correct = true;
    correct.proportion = 0.06;
    std::vector<WeightedSample> incorrect(2);
    incorrect[0].sample.raw_text = "The actress is Kristen Bell.";
    incorrect[0].proportion = 0.33;
    incorrect[1].sample.raw_text = "The actress is Kelly Clarkson.";
    incorrect[1].proportion = 0.17;

    const auto prompt = build_rationale_prompt(question, correct, incorrect);
    const auto expected_rationale = replace_slots(
        rationale_prompt_template(),
        {question.text, "(6%) Kelly Preston, who is married to John Travolta.",
         "1. (33%) The actress is Kristen Bell.\n2. (17%) The actress is Kelly Clarkson."});
    if (prompt.text != expected_rationale) {
        return {false, "rationale prompt deviates from its template"};
    }

    // Judge prompt likewise.
    JudgeCase judge_case;
    judge_case.question = question.text;
    judge_case.sampled_responses = {
        {"Kelly Preston, who is married to John Travolta.", 0.06},
        {"The actress is Kristen Bell.", 0.33},
    };
    judge_case.rationale = "I am uncertain about the correct actress.";
    const auto judge_prompt = build_judge_prompt(judge_case);
    const auto expected_judge = replace_slots(
        judge_prompt_template(),
        {judge_case.question,
         "1. (6%) Kelly Preston, who is married to John Travolta.\n2. (33%) The actress is "
         "Kristen Bell.",
         judge_case.rationale});
    if (judge_prompt != expected_judge) {
        return {false, "judge prompt deviates from its template"};
    }

    // The documented verdict example round-trips.
    const auto verdict = parse_verdict(
        "reason: The provided reason is clear and well-structured. The explanation is "
        "logical and provides a clear rationale for the uncertainty expressed in the "
        "sampled responses. score: 9");
    if (verdict.score != 9) {
        return {false, "documented verdict example did not parse to 9"};
    }
    return {true, "templates byte-exact, verdict example parses to 9"};
}

} // namespace

int main() {
    run_criterion(1,
                  "confidence-gap arithmetic on the published means (0.7406, 0.4962) "
                  "gives delta 0.2444 within 1e-12",
                  criterion_gap);
    run_criterion(2, "rank-based AUROC and per-sample ECE match brute-force oracles (1e-12)",
                  criterion_metric_oracles);
    run_criterion(3, "confidence label matches clamp(round-half-away(10*s/n)) for all n <= 1000",
                  criterion_confidence_formula);
    run_criterion(4, "quadratic-reward optimum equals the level nearest 10p (ties low), exact",
                  criterion_reward_optimum);
    run_criterion(5, "clipped-surrogate gradient matches finite differences (rel err 1e-4)",
                  criterion_gradient_check);
    run_criterion(6, "policy training calibrates under the quadratic reward and degenerates "
                     "under the naive one",
                  criterion_rl_convergence);
    run_criterion(7, "greedy clustering is a partition, seed-cohesive, and oracle-identical",
                  criterion_clustering);
    run_criterion(8, "fixture pipeline is byte-identical across two CLI runs",
                  criterion_end_to_end);
    run_criterion(9, "prompts reproduce their templates verbatim; verdict example parses",
                  criterion_prompt_fidelity);

    if (g_failures > 0) {
        std::cout << g_failures << " criterion(s) failed" << std::endl;
        return 1;
    }
    std::cout << "all 9 criteria passed" << std::endl;
    return 0;
}
