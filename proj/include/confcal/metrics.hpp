#pragma once

#include <optional>
#include <span>
#include <vector>

namespace confcal {

/// One scored outcome: was the answer right, and how confident was the model.
/// Confidence is normalized to [0, 1].
struct OutcomeRecord {
    bool correct = false;
    double confidence = 0.0;
};

struct MetricsReport {
    double ece = 0.0;
    std::optional<double> auroc; // empty when only one class is present
    double accuracy = 0.0;
    std::size_t n = 0;
};

struct GapReport {
    double avg_answerable = 0.0;
    double avg_unanswerable = 0.0;
    double delta = 0.0;
};

/// Mean absolute difference between the correctness indicator and the stated
/// confidence. Per-sample, no binning.
double ece(std::span<const OutcomeRecord> records);

/// Probability that a random correct record carries higher confidence than a
/// random incorrect one, ties counted 1/2 (Mann-Whitney). Empty optional when
/// either class is missing.
std::optional<double> auroc(std::span<const OutcomeRecord> records);

/// Fraction of correct records.
double accuracy(std::span<const OutcomeRecord> records);

MetricsReport metrics_report(std::span<const OutcomeRecord> records);

/// Mean confidence on the answerable subset minus mean confidence on the
/// unanswerable one.
GapReport confidence_gap(std::span<const OutcomeRecord> answerable,
                         std::span<const OutcomeRecord> unanswerable);

} // namespace confcal
