#include "confcal/calib_rl.hpp"

#include <algorithm>
#include <cmath>

#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

namespace confcal {

namespace {

void check_confidence(double confidence, const char* op) {
    if (!std::isfinite(confidence) || confidence < 0.0 || confidence > 1.0) {
        throw DomainError(std::string(op) + ": confidence outside [0,1]");
    }
}

void check_accuracy(double p, const char* op) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
        throw DomainError(std::string(op) + ": accuracy outside [0,1]");
    }
}

void check_level(int level, const char* op) {
    if (level < 0 || level >= kNumLevels) {
        throw DomainError(std::string(op) + ": level outside 0..10");
    }
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_logit);
        sum += probs[i];
    }
    for (auto& p : probs) {
        p /= sum;
    }
    return probs;
}

int sample_categorical(const std::vector<double>& probs, std::mt19937_64& rng) {
    const double u = uniform_unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(probs.size()) - 1;
}

} // namespace

std::vector<double> PolicyTable::probs(std::size_t state) const {
    return softmax(logits.at(state));
}

int PolicyTable::modal_level(std::size_t state) const {
    const auto& row = logits.at(state);
    int best = 0;
    for (int a = 1; a < kNumLevels; ++a) {
        if (row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(best)]) {
            best = a;
        }
    }
    return best;
}

PolicyTable make_policy(std::size_t n_states) {
    PolicyTable policy;
    policy.logits.assign(n_states, std::vector<double>(kNumLevels, 0.0));
    return policy;
}

double reward_quadratic(bool correct, double confidence) {
    check_confidence(confidence, "reward_quadratic");
    const double indicator = correct ? 1.0 : 0.0;
    const double diff = indicator - confidence;
    return 1.0 - 2.0 * diff * diff;
}

double reward_naive(bool correct, double confidence) {
    check_confidence(confidence, "reward_naive");
    return correct ? confidence : -confidence;
}

double normalize_level(int level) {
    check_level(level, "normalize_level");
    return static_cast<double>(level) / 10.0;
}

double expected_reward(double p, int level, RewardKind kind) {
    check_accuracy(p, "expected_reward");
    check_level(level, "expected_reward");
    const double conf = normalize_level(level);
    if (kind == RewardKind::naive) {
        // E[R] = p*conf - (1-p)*conf, linear in conf.
        return conf * (2.0 * p - 1.0);
    }
    // Quadratic: E[R] = 1 - 2*(p*(1-conf)^2 + (1-p)*conf^2), rearranged as
    // 1 - 2*((conf-p)^2 + p*(1-p)). Evaluating the squared gap on the level
    // scale keeps exact ties exact, so the argmax tie rule is stable.
    const double gap = (static_cast<double>(level) - 10.0 * p) / 10.0;
    return 1.0 - 2.0 * (gap * gap + p * (1.0 - p));
}

int optimal_level(double p, RewardKind kind) {
    check_accuracy(p, "optimal_level");
    int best = 0;
    double best_value = expected_reward(p, 0, kind);
    for (int level = 1; level < kNumLevels; ++level) {
        const double value = expected_reward(p, level, kind);
        if (value > best_value) {
            best_value = value;
            best = level;
        }
    }
    return best;
}

double ppo_surrogate(double ratio, double advantage, double clip_epsilon) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
        throw DomainError("ppo_surrogate: ratio must be positive");
    }
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw DomainError("ppo_surrogate: clip_epsilon must be in (0,1)");
    }
    const double clipped = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
    return std::min(ratio * advantage, clipped * advantage);
}

double surrogate_value(const PolicyTable& policy, std::span<const SurrogateItem> batch,
                       double clip_epsilon) {
    if (batch.empty()) {
        throw EmptyInput("surrogate_value: empty batch");
    }
    double total = 0.0;
    for (const auto& item : batch) {
        const auto probs = policy.probs(item.state);
        const double ratio = probs[static_cast<std::size_t>(item.level)] / item.old_prob;
        total += ppo_surrogate(ratio, item.advantage, clip_epsilon);
    }
    return total / static_cast<double>(batch.size());
}

std::vector<std::vector<double>> surrogate_gradient(const PolicyTable& policy,
                                                    std::span<const SurrogateItem> batch,
                                                    double clip_epsilon) {
    if (batch.empty()) {
        throw EmptyInput("surrogate_gradient: empty batch");
    }
    std::vector<std::vector<double>> grad(policy.n_states(),
                                          std::vector<double>(kNumLevels, 0.0));
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    for (const auto& item : batch) {
        const auto probs = policy.probs(item.state);
        const double ratio = probs[static_cast<std::size_t>(item.level)] / item.old_prob;
        // The clipped branch is constant in the logits; it is active (and the
        // gradient vanishes) when the ratio is past the clip boundary on the
        // side the advantage pushes toward.
        const bool clipped_flat = (item.advantage > 0.0 && ratio > 1.0 + clip_epsilon) ||
                                  (item.advantage < 0.0 && ratio < 1.0 - clip_epsilon);
        if (clipped_flat) {
            continue;
        }
        // d ratio / d logit_b = ratio * (1[b == level] - probs[b])
        const double scale = item.advantage * ratio * inv_batch;
        auto& row = grad[item.state];
        for (int b = 0; b < kNumLevels; ++b) {
            const double indicator = (b == item.level) ? 1.0 : 0.0;
            row[static_cast<std::size_t>(b)] +=
                scale * (indicator - probs[static_cast<std::size_t>(b)]);
        }
    }
    return grad;
}

TrainResult train_policy(const SimEnv& env, const PpoConfig& cfg, RewardKind kind,
                         std::mt19937_64& rng) {
    if (env.states.empty()) {
        throw EmptyInput("train_policy: env has no states");
    }
    if (!(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 1.0)) {
        throw DomainError("train_policy: clip_epsilon must be in (0,1)");
    }
    if (cfg.batch_size == 0 || cfg.n_updates == 0 || cfg.n_epochs == 0 ||
        !(cfg.learning_rate > 0.0)) {
        throw DomainError("train_policy: batch_size, n_updates, n_epochs, learning_rate "
                          "must be positive");
    }
    for (const auto& s : env.states) {
        check_accuracy(s.latent_accuracy, "train_policy");
    }

    const std::size_t n_states = env.states.size();
    PolicyTable policy = make_policy(n_states);

    std::vector<double> baseline_mean(n_states, 0.0);
    std::vector<std::size_t> baseline_count(n_states, 0);

    TrainReport report;
    report.expected_reward_trace.reserve(cfg.n_updates);

    std::vector<SurrogateItem> batch(cfg.batch_size);

    for (std::size_t update = 0; update < cfg.n_updates; ++update) {
        // Snapshot probabilities of the behavior policy.
        std::vector<std::vector<double>> old_probs(n_states);
        for (std::size_t s = 0; s < n_states; ++s) {
            old_probs[s] = policy.probs(s);
        }

        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const auto state = static_cast<std::size_t>(uniform_index(rng, n_states));
            const int level = sample_categorical(old_probs[state], rng);
            const bool correct = uniform_unit(rng) < env.states[state].latent_accuracy;
            const double conf = normalize_level(level);
            const double reward = kind == RewardKind::quadratic
                                      ? reward_quadratic(correct, conf)
                                      : reward_naive(correct, conf);
            double advantage = reward;
            if (cfg.baseline == BaselineKind::running_mean) {
                advantage = reward - baseline_mean[state];
                baseline_count[state] += 1;
                baseline_mean[state] +=
                    (reward - baseline_mean[state]) / static_cast<double>(baseline_count[state]);
            }
            batch[b] = SurrogateItem{state, level, advantage, old_probs[state][static_cast<std::size_t>(level)]};
        }

        for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
            const auto grad = surrogate_gradient(policy, batch, cfg.clip_epsilon);
            for (std::size_t s = 0; s < n_states; ++s) {
                for (int a = 0; a < kNumLevels; ++a) {
                    policy.logits[s][static_cast<std::size_t>(a)] +=
                        cfg.learning_rate * grad[s][static_cast<std::size_t>(a)];
                }
            }
        }
        for (const auto& row : policy.logits) {
            for (double z : row) {
                if (!std::isfinite(z)) {
                    throw DivergenceError("train_policy: non-finite logits");
                }
            }
        }

        double mean_expected = 0.0;
        for (std::size_t s = 0; s < n_states; ++s) {
            const auto probs = policy.probs(s);
            double state_expected = 0.0;
            for (int a = 0; a < kNumLevels; ++a) {
                state_expected += probs[static_cast<std::size_t>(a)] *
                                  expected_reward(env.states[s].latent_accuracy, a, kind);
            }
            mean_expected += state_expected;
        }
        report.expected_reward_trace.push_back(mean_expected / static_cast<double>(n_states));
    }

    report.per_state_modal_level.resize(n_states);
    for (std::size_t s = 0; s < n_states; ++s) {
        report.per_state_modal_level[s] = policy.modal_level(s);
    }
    report.final_expected_reward = report.expected_reward_trace.back();
    return TrainResult{std::move(policy), std::move(report)};
}

TrainResult train_policy(const SimEnv& env, const PpoConfig& cfg, RewardKind kind) {
    std::mt19937_64 rng(env.rng_seed);
    return train_policy(env, cfg, kind, rng);
}

std::vector<OutcomeRecord> evaluate_policy(const PolicyTable& policy, const SimEnv& env,
                                           std::size_t n_draws, std::mt19937_64& rng) {
    if (policy.n_states() != env.states.size()) {
        throw DimensionMismatch("evaluate_policy: policy/env state counts differ");
    }
    std::vector<OutcomeRecord> records;
    records.reserve(n_draws);
    std::vector<std::vector<double>> probs(policy.n_states());
    for (std::size_t s = 0; s < policy.n_states(); ++s) {
        probs[s] = policy.probs(s);
    }
    for (std::size_t i = 0; i < n_draws; ++i) {
        const auto state = static_cast<std::size_t>(uniform_index(rng, env.states.size()));
        const int level = sample_categorical(probs[state], rng);
        const bool correct = uniform_unit(rng) < env.states[state].latent_accuracy;
        records.push_back(OutcomeRecord{correct, normalize_level(level)});
    }
    return records;
}

} // namespace confcal
