#pragma once

#include <span>
#include <string>
#include <vector>

#include "confcal/gateway.hpp"
#include "confcal/metrics.hpp"

namespace confcal {

struct Question {
    std::string id;
    std::string text;
    std::vector<std::string> gold_answers; // non-empty when answerable
    bool answerable = true;
};

struct ResponseSample {
    std::size_t index = 0;
    std::string raw_text;
    std::string reasoning_chain;
    std::string extracted_answer;
    bool correct = false;
    FinishReason finish_reason = FinishReason::stop;
};

struct SamplingPrompt {
    std::string system_prompt =
        "You are a careful assistant. Answer the question, reasoning step by step "
        "before stating your final answer.";
    // "{question}" is replaced with the question text.
    std::string user_template = "Question: {question}\n"
                                "Think step by step, then state your final answer.";
};

/// Case-folds (ASCII plus the Latin-1 supplement), collapses whitespace runs
/// and trims. Shared by check_correct and its tests.
std::string normalize_for_match(const std::string& text);

/// True iff any gold answer occurs as a contiguous substring of the response,
/// both sides normalized via normalize_for_match.
bool check_correct(const std::string& response_text,
                   std::span<const std::string> gold_answers);

/// Splits raw text at the last sentence break; the tail is the extracted
/// answer, the head the reasoning chain. Reporting only; correctness is
/// always judged on the full raw text.
std::pair<std::string, std::string> split_reasoning_and_answer(const std::string& raw_text);

/// Draws n responses for one question, fanning calls out concurrently under
/// the gateway's in-flight cap. Samples come back in index order. A call that
/// still fails after the gateway's retries yields an empty sample with
/// finish_reason error; only an all-failed question propagates the error.
std::vector<ResponseSample> sample_responses(Gateway& gateway, const ProviderConfig& cfg,
                                             const Question& question, std::size_t n,
                                             double temperature,
                                             const SamplingPrompt& prompt = {});

/// Builds the chat request sample_responses issues for draw `index`; exposed
/// so fixtures can script each draw by fingerprint.
ChatRequest make_sampling_request(const ProviderConfig& cfg, const Question& question,
                                  std::size_t index, double temperature,
                                  const SamplingPrompt& prompt = {});

/// Fraction of correct outcomes.
double sample_accuracy(std::span<const OutcomeRecord> records);

/// JSONL corpus: one object per line with id, question, answers, answerable.
std::vector<Question> load_corpus(const std::string& path);

} // namespace confcal
