#pragma once

#include <span>
#include <string>
#include <vector>

#include "confcal/gateway.hpp"

namespace confcal {

struct RatedResponse {
    std::string text;
    double proportion = 0.0;
};

struct JudgeCase {
    std::string question;
    std::vector<RatedResponse> sampled_responses;
    std::string rationale;
};

struct JudgeVerdict {
    std::string reason;
    int score = 0; // 0..10
};

struct FaithfulnessReport {
    double mean_score = 0.0; // over successfully parsed verdicts
    std::size_t n_cases = 0;
    std::size_t n_parse_failures = 0;
    std::size_t n_zero_scores = 0; // the judge prompt allows 0, prose says 1; flagged
    std::string judge_model_id;
};

/// The raw judge prompt template with its three {} slots.
std::string judge_prompt_template();

/// Instantiates the judge prompt: question, numbered responses each prefixed
/// with its rounded percentage share, and the rationale under "Reason:".
std::string build_judge_prompt(const JudgeCase& judge_case);

/// Parses "reason: ... score: N" (case-insensitive, whitespace-tolerant),
/// rejecting scores outside [0, 10].
JudgeVerdict parse_verdict(const std::string& text);

/// Renders a verdict back into the judge's output format.
std::string render_verdict(const JudgeVerdict& verdict);

/// Scores every case through the gateway; an unparseable verdict is retried
/// once, then counted as a failure. Throws AllParseFailures when nothing
/// parses.
FaithfulnessReport faithfulness(Gateway& gateway, const ProviderConfig& judge,
                                std::span<const JudgeCase> cases);

/// Orders cases by descending response count (stable) and keeps the first
/// `budget`; cases with more distinct reasoning chains get priority.
std::vector<JudgeCase> select_cases(std::vector<JudgeCase> cases, std::size_t budget);

/// Cases ingested from JSONL: {"question","responses":[{"text","proportion"}],
/// "rationale"}.
std::vector<JudgeCase> load_judge_cases(const std::string& path);

} // namespace confcal
