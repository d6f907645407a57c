#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "confcal/calib_rl.hpp"
#include "confcal/cluster.hpp"
#include "confcal/errors.hpp"
#include "confcal/forge.hpp"
#include "confcal/judge.hpp"
#include "confcal/metrics.hpp"
#include "confcal/sampler.hpp"

namespace py = pybind11;
using namespace confcal;

namespace {

std::vector<EmbeddingVector> to_embeddings(const std::vector<std::vector<double>>& rows) {
    std::vector<EmbeddingVector> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        out.push_back(make_embedding(row));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Confidence-calibration pipeline core: clustering, confidence labeling, "
              "calibration metrics, and the discrete-policy reward simulator.";

    const auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<DomainError>(m, "DomainError", base);
    py::register_exception<ParseError>(m, "VerdictParseError", base);
    py::register_exception<StyleViolation>(m, "StyleViolationError", base);

    // --- metrics ---
    py::class_<OutcomeRecord>(m, "OutcomeRecord")
        .def(py::init<bool, double>(), py::arg("correct"), py::arg("confidence"))
        .def_readwrite("correct", &OutcomeRecord::correct)
        .def_readwrite("confidence", &OutcomeRecord::confidence)
        .def("__repr__", [](const OutcomeRecord& r) {
            return "OutcomeRecord(correct=" + std::string(r.correct ? "True" : "False") +
                   ", confidence=" + std::to_string(r.confidence) + ")";
        });

    m.def("ece", [](const std::vector<OutcomeRecord>& records) { return ece(records); },
          "Mean |indicator - confidence| over the records (per-sample, unbinned).");
    m.def("auroc", [](const std::vector<OutcomeRecord>& records) { return auroc(records); },
          "Mann-Whitney AUROC; None when only one class is present.");
    m.def("accuracy",
          [](const std::vector<OutcomeRecord>& records) { return accuracy(records); });
    m.def("confidence_gap",
          [](const std::vector<OutcomeRecord>& answerable,
             const std::vector<OutcomeRecord>& unanswerable) {
              const auto gap = confidence_gap(answerable, unanswerable);
              return py::make_tuple(gap.avg_answerable, gap.avg_unanswerable, gap.delta);
          },
          "Returns (avg_answerable, avg_unanswerable, delta).");

    // --- sampling helpers ---
    m.def("check_correct",
          [](const std::string& text, const std::vector<std::string>& gold) {
              return check_correct(text, gold);
          },
          "Substring correctness heuristic (case-folded, whitespace-collapsed).");

    // --- clustering ---
    m.def("cosine",
          [](const std::vector<double>& a, const std::vector<double>& b) {
              return cosine(make_embedding(a), make_embedding(b));
          },
          "Cosine similarity of two vectors (normalized internally).");
    m.def("greedy_cluster",
          [](const std::vector<std::vector<double>>& embeddings, double threshold) {
              const auto set = greedy_cluster(to_embeddings(embeddings), threshold);
              std::vector<std::vector<std::size_t>> groups;
              groups.reserve(set.clusters.size());
              for (const auto& c : set.clusters) {
                  groups.push_back(c.member_indices);
              }
              return groups;
          },
          py::arg("embeddings"), py::arg("threshold") = 0.9,
          "Seed-scan threshold clustering; returns member indices per cluster.");

    // --- confidence labeling ---
    m.def("compute_confidence",
          [](std::size_t s_c, std::size_t n) { return compute_confidence(s_c, n).value; },
          py::arg("cluster_size"), py::arg("n"),
          "round(10 * cluster_size / n), half away from zero, clamped to [1, 10].");
    m.def("render_confidence",
          [](int level) { return render_confidence(ConfidenceLevel{level}); });
    m.def("validate_rationale", [](const std::string& text) -> py::object {
        const auto result = validate_rationale(text);
        return result ? py::cast(*result) : py::none();
    });

    // --- rewards and the policy simulator ---
    py::enum_<RewardKind>(m, "RewardKind")
        .value("quadratic", RewardKind::quadratic)
        .value("naive", RewardKind::naive);

    m.def("reward_quadratic", &reward_quadratic, py::arg("correct"), py::arg("confidence"));
    m.def("reward_naive", &reward_naive, py::arg("correct"), py::arg("confidence"));
    m.def("normalize_level", &normalize_level, py::arg("level"));
    m.def("expected_reward", &expected_reward, py::arg("p"), py::arg("level"), py::arg("kind"));
    m.def("optimal_level", &optimal_level, py::arg("p"), py::arg("kind"));
    m.def("ppo_surrogate", &ppo_surrogate, py::arg("ratio"), py::arg("advantage"),
          py::arg("clip_epsilon"));

    py::enum_<BaselineKind>(m, "BaselineKind")
        .value("running_mean", BaselineKind::running_mean)
        .value("none", BaselineKind::none);

    py::class_<PpoConfig>(m, "PpoConfig")
        .def(py::init<>())
        .def_readwrite("clip_epsilon", &PpoConfig::clip_epsilon)
        .def_readwrite("learning_rate", &PpoConfig::learning_rate)
        .def_readwrite("batch_size", &PpoConfig::batch_size)
        .def_readwrite("n_updates", &PpoConfig::n_updates)
        .def_readwrite("baseline", &PpoConfig::baseline)
        .def_readwrite("n_epochs", &PpoConfig::n_epochs);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("per_state_modal_level", &TrainReport::per_state_modal_level)
        .def_readonly("expected_reward_trace", &TrainReport::expected_reward_trace)
        .def_readonly("final_expected_reward", &TrainReport::final_expected_reward);

    m.def("train_policy",
          [](const std::vector<double>& latent_accuracies, const PpoConfig& cfg,
             RewardKind kind, std::uint64_t seed) {
              SimEnv env;
              env.rng_seed = seed;
              for (std::size_t i = 0; i < latent_accuracies.size(); ++i) {
                  env.states.push_back(
                      SimState{"s" + std::to_string(i), latent_accuracies[i]});
              }
              return train_policy(env, cfg, kind).report;
          },
          py::arg("latent_accuracies"), py::arg("config") = PpoConfig{},
          py::arg("kind") = RewardKind::quadratic, py::arg("seed") = 0,
          "Train the discrete confidence policy; returns its TrainReport.");

    // --- judge ---
    m.def("parse_verdict", [](const std::string& text) {
        const auto verdict = parse_verdict(text);
        return py::make_tuple(verdict.reason, verdict.score);
    });
    m.def("build_judge_prompt",
          [](const std::string& question,
             const std::vector<std::pair<std::string, double>>& responses,
             const std::string& rationale) {
              JudgeCase judge_case;
              judge_case.question = question;
              for (const auto& [text, prop] : responses) {
                  judge_case.sampled_responses.push_back(RatedResponse{text, prop});
              }
              judge_case.rationale = rationale;
              return build_judge_prompt(judge_case);
          },
          py::arg("question"), py::arg("responses"), py::arg("rationale"));
}
