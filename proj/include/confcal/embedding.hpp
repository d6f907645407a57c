#pragma once

#include <cstddef>
#include <vector>

namespace confcal {

/// Unit-normalized text embedding.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
};

/// Builds an EmbeddingVector from raw components, enforcing the unit-norm
/// invariant (throws DomainError on zero or non-finite input).
EmbeddingVector make_embedding(std::vector<double> values);

} // namespace confcal
