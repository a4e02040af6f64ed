// pairwise_sum.hpp: fixed-shape summation trees.
//
// pairwise_sum splits [0, n) at n/2 recursively, so the tree depends only on
// n. CascadeAccumulator merges per-record results like a binary counter: the
// merge order depends only on the number of pushes, never on who computed
// them.

#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <vector>

namespace qpsim::reduce {

template <typename T>
T pairwise_sum(const T* x, std::size_t n) {
    if (n == 0) return T{};
    if (n == 1) return x[0];
    const std::size_t h = n / 2;
    return pairwise_sum(x, h) + pairwise_sum(x + h, n - h);
}

template <typename T>
T pairwise_sum(const std::vector<T>& x) {
    return pairwise_sum(x.data(), x.size());
}

/// Element-wise vector accumulator. Level l holds the sum of 2^l consecutive
/// pushes; a carry is formed as (older + newer).
class CascadeAccumulator {
public:
    using value_type = std::complex<double>;

    CascadeAccumulator() = default;
    explicit CascadeAccumulator(std::size_t width) : width_(width) {}

    std::size_t width() const { return width_; }
    std::uint64_t count() const { return count_; }

    void push(std::vector<value_type> v);
    /// Sum of all pushes, combining levels from the highest down.
    std::vector<value_type> total() const;

    void save(std::ostream& os) const;
    static CascadeAccumulator load(std::istream& is);

    bool operator==(const CascadeAccumulator&) const = default;

private:
    std::size_t width_{0};
    std::uint64_t count_{0};
    std::vector<std::vector<value_type>> levels_; // empty vector = vacant level
};

} // namespace qpsim::reduce
