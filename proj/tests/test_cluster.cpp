#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "confcal/cluster.hpp"
#include "confcal/errors.hpp"
#include "confcal/rng.hpp"

using namespace confcal;

namespace {

EmbeddingVector vec2(double x, double y) {
    return make_embedding({x, y});
}

std::vector<EmbeddingVector> random_embeddings(std::mt19937_64& rng, std::size_t n,
                                               std::size_t dim) {
    std::vector<EmbeddingVector> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Mix fresh directions with copies of earlier ones so clusters of
        // size > 1 actually occur.
        if (!out.empty() && uniform_unit(rng) < 0.4) {
            out.push_back(out[uniform_index(rng, out.size())]);
        } else {
            out.push_back(EmbeddingVector{unit_sphere_draw(rng, dim)});
        }
    }
    return out;
}

// Independent restatement of the scan rule, kept deliberately naive.
std::vector<std::vector<std::size_t>> seed_scan_oracle(const std::vector<EmbeddingVector>& embs,
                                                       double threshold) {
    std::vector<std::vector<std::size_t>> groups;
    std::vector<bool> taken(embs.size(), false);
    for (std::size_t seed = 0; seed < embs.size(); ++seed) {
        if (taken[seed]) {
            continue;
        }
        std::vector<std::size_t> group{seed};
        taken[seed] = true;
        for (std::size_t j = seed + 1; j < embs.size(); ++j) {
            if (taken[j]) {
                continue;
            }
            double dot = 0.0;
            for (std::size_t k = 0; k < embs[seed].values.size(); ++k) {
                dot += embs[seed].values[k] * embs[j].values[k];
            }
            if (dot >= threshold) {
                group.push_back(j);
                taken[j] = true;
            }
        }
        groups.push_back(std::move(group));
    }
    return groups;
}

void check_partition(const ClusterSet& set) {
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& cluster : set.clusters) {
        CHECK(cluster.size() == cluster.member_indices.size());
        CHECK(cluster.size() >= 1);
        for (const auto m : cluster.member_indices) {
            CHECK(seen.insert(m).second); // disjoint
        }
        total += cluster.size();
        CHECK(std::count(cluster.member_indices.begin(), cluster.member_indices.end(),
                         cluster.seed_index) == 1);
        CHECK(std::count(cluster.member_indices.begin(), cluster.member_indices.end(),
                         cluster.representative_index) == 1);
    }
    CHECK(total == set.n_total);
    CHECK(seen.size() == set.n_total);
    if (!seen.empty()) {
        CHECK(*seen.rbegin() == set.n_total - 1); // exhaustive 0..n-1
    }
}

} // namespace

TEST_SUITE("cluster") {

TEST_CASE("cosine on analytic pairs") {
    CHECK(cosine(vec2(1, 0), vec2(0, 1)) == doctest::Approx(0.0));
    CHECK(cosine(vec2(1, 0), vec2(1, 0)) == doctest::Approx(1.0));
    CHECK(cosine(vec2(1, 1), vec2(1, 0)) == doctest::Approx(0.70710678).epsilon(1e-9));
    CHECK_THROWS_AS(cosine(vec2(1, 0), make_embedding({1, 0, 0})), DimensionMismatch);
}

TEST_CASE("cosine stays clamped under rounding drift") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const EmbeddingVector v{unit_sphere_draw(rng, 8)};
        const double c = cosine(v, v);
        CHECK(c <= 1.0);
        CHECK(c >= -1.0);
        CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("identical vectors collapse into one cluster") {
    const auto v = vec2(0.6, 0.8);
    const auto set = greedy_cluster(std::vector<EmbeddingVector>{v, v, v}, 0.9);
    REQUIRE(set.clusters.size() == 1);
    CHECK(set.clusters[0].seed_index == 0);
    CHECK(set.clusters[0].size() == 3);
}

TEST_CASE("orthogonal vectors stay singletons") {
    const std::vector<EmbeddingVector> embs{
        make_embedding({1, 0, 0}), make_embedding({0, 1, 0}), make_embedding({0, 0, 1})};
    const auto set = greedy_cluster(embs, 0.9);
    CHECK(set.clusters.size() == 3);
    for (const auto& cluster : set.clusters) {
        CHECK(cluster.size() == 1);
    }
}

TEST_CASE("greedy_cluster validates input") {
    CHECK_THROWS_AS(greedy_cluster(std::vector<EmbeddingVector>{}, 0.9), EmptyInput);
    CHECK_THROWS_AS(greedy_cluster(std::vector<EmbeddingVector>{vec2(1, 0)}, 0.0), DomainError);
    CHECK_THROWS_AS(greedy_cluster(std::vector<EmbeddingVector>{vec2(1, 0)}, 1.5), DomainError);
}

TEST_CASE("ties at exactly the threshold join the cluster") {
    // cos(a, b) == 0.9 by construction.
    const auto a = make_embedding({1.0, 0.0});
    const auto b = make_embedding({0.9, std::sqrt(1.0 - 0.81)});
    REQUIRE(cosine(a, b) == doctest::Approx(0.9).epsilon(1e-12));
    const auto set = greedy_cluster(std::vector<EmbeddingVector>{a, b}, cosine(a, b));
    CHECK(set.clusters.size() == 1);
}

TEST_CASE("matches the seed-scan oracle on random inputs") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 50; ++trial) {
        const auto embs = random_embeddings(rng, 20, 16);
        const auto set = greedy_cluster(embs, 0.9);
        const auto oracle = seed_scan_oracle(embs, 0.9);
        REQUIRE(set.clusters.size() == oracle.size());
        for (std::size_t i = 0; i < oracle.size(); ++i) {
            CHECK(set.clusters[i].seed_index == oracle[i].front());
            CHECK(set.clusters[i].member_indices == oracle[i]);
        }
    }
}

TEST_CASE("partition and seed-cohesion invariants on random inputs") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + uniform_index(rng, 60);
        const auto embs = random_embeddings(rng, n, 12);
        const double threshold = 0.5 + 0.5 * uniform_unit(rng);
        const auto set = greedy_cluster(embs, threshold);
        check_partition(set);
        for (const auto& cluster : set.clusters) {
            for (const auto m : cluster.member_indices) {
                CHECK(cosine(embs[cluster.seed_index], embs[m]) >= threshold - 1e-12);
            }
        }
    }
}

TEST_CASE("same input order always yields the same output") {
    std::mt19937_64 rng(24);
    const auto embs = random_embeddings(rng, 40, 12);
    const auto a = greedy_cluster(embs, 0.9);
    const auto b = greedy_cluster(embs, 0.9);
    REQUIRE(a.clusters.size() == b.clusters.size());
    for (std::size_t i = 0; i < a.clusters.size(); ++i) {
        CHECK(a.clusters[i].member_indices == b.clusters[i].member_indices);
    }
}

TEST_CASE("raising the threshold never merges clusters") {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        const auto embs = random_embeddings(rng, 30, 12);
        std::size_t previous = 0;
        for (const double threshold : {0.3, 0.5, 0.7, 0.9, 0.99}) {
            const auto set = greedy_cluster(embs, threshold);
            CHECK(set.clusters.size() >= previous);
            previous = set.clusters.size();
        }
    }
}

TEST_CASE("pick_representative draws uniformly and reproducibly") {
    Cluster cluster;
    cluster.seed_index = 3;
    cluster.member_indices = {3, 5, 8, 13};
    cluster.representative_index = 3;

    Cluster singleton;
    singleton.seed_index = 7;
    singleton.member_indices = {7};
    singleton.representative_index = 7;
    std::mt19937_64 rng_a(99);
    CHECK(pick_representative(singleton, rng_a) == 7);

    std::mt19937_64 rng_b(42);
    std::mt19937_64 rng_c(42);
    CHECK(pick_representative(cluster, rng_b) == pick_representative(cluster, rng_c));

    std::mt19937_64 rng(4242);
    std::map<std::size_t, int> counts;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        counts[pick_representative(cluster, rng)] += 1;
    }
    for (const auto m : cluster.member_indices) {
        const double freq = static_cast<double>(counts[m]) / draws;
        CHECK(freq == doctest::Approx(0.25).epsilon(0.08)); // 0.25 +- 0.02
        CHECK(std::abs(freq - 0.25) <= 0.02);
    }
}

TEST_CASE("validate_cluster_set rejects malformed partitions") {
    ClusterSet good;
    good.n_total = 3;
    good.threshold = 0.9;
    Cluster a;
    a.seed_index = 0;
    a.member_indices = {0, 2};
    a.representative_index = 2;
    Cluster b;
    b.seed_index = 1;
    b.member_indices = {1};
    b.representative_index = 1;
    good.clusters = {a, b};
    CHECK_NOTHROW(validate_cluster_set(good));

    ClusterSet overlapping = good;
    overlapping.clusters[1].member_indices = {1, 2};
    CHECK_THROWS_AS(validate_cluster_set(overlapping), DomainError);

    ClusterSet incomplete = good;
    incomplete.clusters.pop_back();
    CHECK_THROWS_AS(validate_cluster_set(incomplete), DomainError);

    ClusterSet out_of_range = good;
    out_of_range.clusters[0].member_indices = {0, 7};
    CHECK_THROWS_AS(validate_cluster_set(out_of_range), DomainError);

    ClusterSet stray_rep = good;
    stray_rep.clusters[0].representative_index = 1;
    CHECK_THROWS_AS(validate_cluster_set(stray_rep), DomainError);
}

TEST_CASE("proportion arithmetic") {
    Cluster cluster;
    cluster.member_indices.resize(33);
    CHECK(proportion(cluster, 100) == doctest::Approx(0.33));
    Cluster full;
    full.member_indices.resize(10);
    CHECK(proportion(full, 10) == doctest::Approx(1.0));
    Cluster one;
    one.member_indices.resize(1);
    CHECK(proportion(one, 100) == doctest::Approx(0.01));
    CHECK_THROWS_AS(proportion(full, 5), DomainError);
}

} // TEST_SUITE
