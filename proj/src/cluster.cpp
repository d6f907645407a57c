#include "confcal/cluster.hpp"

#include <algorithm>
#include <cmath>

#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

namespace confcal {

EmbeddingVector make_embedding(std::vector<double> values) {
    if (values.empty()) {
        throw DomainError("make_embedding: empty vector");
    }
    double norm_sq = 0.0;
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw DomainError("make_embedding: non-finite component");
        }
        norm_sq += v * v;
    }
    if (norm_sq == 0.0) {
        throw DomainError("make_embedding: zero vector");
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (auto& v : values) {
        v *= inv;
    }
    return EmbeddingVector{std::move(values)};
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DimensionMismatch("cosine: dimensions differ");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
    }
    return std::clamp(dot, -1.0, 1.0);
}

ClusterSet greedy_cluster(std::span<const EmbeddingVector> embeddings, double threshold) {
    if (embeddings.empty()) {
        throw EmptyInput("greedy_cluster: no embeddings");
    }
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw DomainError("greedy_cluster: threshold must be in (0,1]");
    }

    const std::size_t n = embeddings.size();
    ClusterSet set;
    set.n_total = n;
    set.threshold = threshold;

    std::vector<bool> assigned(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (assigned[i]) {
            continue;
        }
        Cluster cluster;
        cluster.seed_index = i;
        cluster.member_indices.push_back(i);
        assigned[i] = true;
        for (std::size_t j = i + 1; j < n; ++j) {
            if (!assigned[j] && cosine(embeddings[i], embeddings[j]) >= threshold) {
                cluster.member_indices.push_back(j);
                assigned[j] = true;
            }
        }
        cluster.representative_index = cluster.seed_index;
        set.clusters.push_back(std::move(cluster));
    }
    return set;
}

std::size_t pick_representative(const Cluster& cluster, std::mt19937_64& rng) {
    if (cluster.member_indices.empty()) {
        throw EmptyInput("pick_representative: empty cluster");
    }
    const std::uint64_t k = uniform_index(rng, cluster.member_indices.size());
    return cluster.member_indices[static_cast<std::size_t>(k)];
}

void assign_representatives(ClusterSet& set, std::mt19937_64& rng) {
    for (auto& cluster : set.clusters) {
        cluster.representative_index = pick_representative(cluster, rng);
    }
}

void validate_cluster_set(const ClusterSet& set) {
    std::vector<bool> seen(set.n_total, false);
    std::size_t total = 0;
    for (const auto& cluster : set.clusters) {
        if (cluster.member_indices.empty()) {
            throw DomainError("cluster set: empty cluster");
        }
        bool has_seed = false;
        bool has_representative = false;
        for (const auto m : cluster.member_indices) {
            if (m >= set.n_total || seen[m]) {
                throw DomainError("cluster set: member out of range or duplicated");
            }
            seen[m] = true;
            has_seed = has_seed || m == cluster.seed_index;
            has_representative = has_representative || m == cluster.representative_index;
        }
        if (!has_seed || !has_representative) {
            throw DomainError("cluster set: seed or representative not a member");
        }
        total += cluster.size();
    }
    if (total != set.n_total) {
        throw DomainError("cluster set: members do not cover all samples");
    }
}

double proportion(const Cluster& cluster, std::size_t n_total) {
    if (n_total == 0 || cluster.size() == 0) {
        throw DomainError("proportion: empty cluster or zero total");
    }
    if (cluster.size() > n_total) {
        throw DomainError("proportion: cluster larger than total");
    }
    return static_cast<double>(cluster.size()) / static_cast<double>(n_total);
}

} // namespace confcal
