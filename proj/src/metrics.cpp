#include "confcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "confcal/errors.hpp"

namespace confcal {

namespace {

void require_finite_confidences(std::span<const OutcomeRecord> records, const char* op) {
    for (const auto& r : records) {
        if (!std::isfinite(r.confidence) || r.confidence < 0.0 || r.confidence > 1.0) {
            throw DomainError(std::string(op) + ": confidence outside [0,1]");
        }
    }
}

} // namespace

double ece(std::span<const OutcomeRecord> records) {
    if (records.empty()) {
        throw EmptyInput("ece: no records");
    }
    require_finite_confidences(records, "ece");
    double sum = 0.0;
    for (const auto& r : records) {
        const double indicator = r.correct ? 1.0 : 0.0;
        sum += std::abs(indicator - r.confidence);
    }
    return sum / static_cast<double>(records.size());
}

std::optional<double> auroc(std::span<const OutcomeRecord> records) {
    if (records.empty()) {
        throw EmptyInput("auroc: no records");
    }
    require_finite_confidences(records, "auroc");

    const std::size_t n = records.size();
    std::size_t n_pos = 0;
    for (const auto& r : records) {
        n_pos += r.correct ? 1u : 0u;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        return std::nullopt;
    }

    // Rank-based Mann-Whitney with midranks for ties.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return records[a].confidence < records[b].confidence;
    });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n &&
               records[order[j + 1]].confidence == records[order[i]].confidence) {
            ++j;
        }
        // Ranks are 1-based; the tie group [i, j] shares the midrank.
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) {
            if (records[order[k]].correct) {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }

    const double np = static_cast<double>(n_pos);
    const double nn = static_cast<double>(n_neg);
    const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

double accuracy(std::span<const OutcomeRecord> records) {
    if (records.empty()) {
        throw EmptyInput("accuracy: no records");
    }
    std::size_t n_correct = 0;
    for (const auto& r : records) {
        n_correct += r.correct ? 1u : 0u;
    }
    return static_cast<double>(n_correct) / static_cast<double>(records.size());
}

MetricsReport metrics_report(std::span<const OutcomeRecord> records) {
    MetricsReport report;
    report.ece = ece(records);
    report.auroc = auroc(records);
    report.accuracy = accuracy(records);
    report.n = records.size();
    return report;
}

GapReport confidence_gap(std::span<const OutcomeRecord> answerable,
                         std::span<const OutcomeRecord> unanswerable) {
    if (answerable.empty() || unanswerable.empty()) {
        throw EmptyInput("confidence_gap: both subsets must be non-empty");
    }
    const auto mean_conf = [](std::span<const OutcomeRecord> rs) {
        double sum = 0.0;
        for (const auto& r : rs) {
            sum += r.confidence;
        }
        return sum / static_cast<double>(rs.size());
    };
    GapReport gap;
    gap.avg_answerable = mean_conf(answerable);
    gap.avg_unanswerable = mean_conf(unanswerable);
    gap.delta = gap.avg_answerable - gap.avg_unanswerable;
    return gap;
}

} // namespace confcal
