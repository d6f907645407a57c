#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "confcal/embedding.hpp"

namespace confcal {

struct Cluster {
    std::size_t seed_index = 0;
    std::vector<std::size_t> member_indices; // includes the seed, ascending
    std::size_t representative_index = 0;    // one of member_indices

    std::size_t size() const { return member_indices.size(); }
};

struct ClusterSet {
    std::vector<Cluster> clusters;
    std::size_t n_total = 0;
    double threshold = 0.0;
};

/// Cosine similarity of two unit vectors, clamped into [-1, 1].
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Single-pass seed-scan clustering: indices are visited in ascending order,
/// each unassigned index opens a cluster and absorbs every later unassigned
/// index whose similarity to the seed is >= threshold. Representatives are
/// initialized to the seeds; use assign_representatives for random picks.
ClusterSet greedy_cluster(std::span<const EmbeddingVector> embeddings, double threshold);

/// Uniformly random member of the cluster.
std::size_t pick_representative(const Cluster& cluster, std::mt19937_64& rng);

/// Replaces every cluster's representative with a seeded-random member,
/// drawing in cluster order from `rng`.
void assign_representatives(ClusterSet& set, std::mt19937_64& rng);

/// Cluster size as a fraction of the sample count.
double proportion(const Cluster& cluster, std::size_t n_total);

/// Checks the partition invariants: members are in range, pairwise disjoint
/// across clusters, cover 0..n_total-1, and every representative and seed is
/// a member of its cluster. Throws DomainError on violation.
void validate_cluster_set(const ClusterSet& set);

} // namespace confcal
