#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "confcal/metrics.hpp"

namespace confcal {

enum class RewardKind {
    quadratic, // R = 1 - 2 * (indicator - confidence)^2
    naive,     // R = indicator * confidence - (1 - indicator) * confidence
};

enum class BaselineKind {
    running_mean,
    none,
};

// Eleven discrete confidence actions, levels 0..10.
inline constexpr int kNumLevels = 11;

struct SimState {
    std::string state_id;
    double latent_accuracy = 0.0; // probability a drawn answer is correct
};

struct SimEnv {
    std::vector<SimState> states;
    std::uint64_t rng_seed = 0;
};

/// Per-state categorical policy over the 11 confidence levels, stored as
/// logits. Rows are softmax-normalized on demand.
struct PolicyTable {
    std::vector<std::vector<double>> logits; // [n_states][kNumLevels]

    std::size_t n_states() const { return logits.size(); }
    std::vector<double> probs(std::size_t state) const;
    int modal_level(std::size_t state) const;
};

PolicyTable make_policy(std::size_t n_states);

struct PpoConfig {
    double clip_epsilon = 0.2;
    double learning_rate = 0.05;
    std::size_t batch_size = 128;
    std::size_t n_updates = 20000;
    BaselineKind baseline = BaselineKind::running_mean;
    std::size_t n_epochs = 4; // surrogate ascent steps per sampled batch
};

struct TrainReport {
    std::vector<int> per_state_modal_level;
    std::vector<double> expected_reward_trace; // one entry per update
    double final_expected_reward = 0.0;
};

struct TrainResult {
    PolicyTable policy;
    TrainReport report;
};

double reward_quadratic(bool correct, double confidence);
double reward_naive(bool correct, double confidence);

/// Maps a discrete confidence level 0..10 to [0, 1].
double normalize_level(int level);

/// Closed-form E[R | latent accuracy p, level] under the given reward.
double expected_reward(double p, int level, RewardKind kind);

/// Argmax of expected_reward over the 11 levels, ties toward the lower level.
int optimal_level(double p, RewardKind kind);

/// Per-sample clipped surrogate: min(ratio * adv, clip(ratio, 1-eps, 1+eps) * adv).
double ppo_surrogate(double ratio, double advantage, double clip_epsilon);

/// One sampled (state, level) transition for the surrogate objective. old_prob
/// is the probability the snapshot policy assigned to the taken level.
struct SurrogateItem {
    std::size_t state = 0;
    int level = 0;
    double advantage = 0.0;
    double old_prob = 0.0;
};

/// Mean clipped surrogate over the batch, evaluated at `policy`.
double surrogate_value(const PolicyTable& policy, std::span<const SurrogateItem> batch,
                       double clip_epsilon);

/// Analytic gradient of surrogate_value with respect to the policy logits.
std::vector<std::vector<double>> surrogate_gradient(const PolicyTable& policy,
                                                    std::span<const SurrogateItem> batch,
                                                    double clip_epsilon);

/// Single-step bandit PPO over the discrete confidence levels.
TrainResult train_policy(const SimEnv& env, const PpoConfig& cfg, RewardKind kind,
                         std::mt19937_64& rng);

/// Convenience overload seeding the generator from env.rng_seed.
TrainResult train_policy(const SimEnv& env, const PpoConfig& cfg, RewardKind kind);

/// Samples n_draws (correct?, confidence) outcomes under policy and env.
std::vector<OutcomeRecord> evaluate_policy(const PolicyTable& policy, const SimEnv& env,
                                           std::size_t n_draws, std::mt19937_64& rng);

} // namespace confcal
