#include "qpsim/pairwise_sum.hpp"

#include <cstring>

#include "qpsim/errors.hpp"

namespace qpsim::reduce {

namespace {

void add_into(std::vector<CascadeAccumulator::value_type>& older,
              const std::vector<CascadeAccumulator::value_type>& newer) {
    for (std::size_t i = 0; i < older.size(); ++i) older[i] += newer[i];
}

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("truncated accumulator state");
    return v;
}

constexpr std::uint32_t kMagic = 0x43534351; // "QCSC"

} // namespace

void CascadeAccumulator::push(std::vector<value_type> v) {
    if (v.size() != width_) throw RangeError("accumulator width mismatch");
    std::size_t l = 0;
    while (l < levels_.size() && !levels_[l].empty()) {
        add_into(levels_[l], v);
        v = std::move(levels_[l]);
        levels_[l].clear();
        ++l;
    }
    if (l == levels_.size()) levels_.emplace_back();
    levels_[l] = std::move(v);
    ++count_;
}

std::vector<CascadeAccumulator::value_type> CascadeAccumulator::total() const {
    std::vector<value_type> out;
    for (std::size_t l = levels_.size(); l-- > 0;) {
        if (levels_[l].empty()) continue;
        if (out.empty()) {
            out = levels_[l];
        } else {
            add_into(out, levels_[l]);
        }
    }
    if (out.empty()) out.assign(width_, value_type{});
    return out;
}

void CascadeAccumulator::save(std::ostream& os) const {
    put(os, kMagic);
    put(os, static_cast<std::uint64_t>(width_));
    put(os, count_);
    put(os, static_cast<std::uint64_t>(levels_.size()));
    for (const auto& lv : levels_) {
        put(os, static_cast<std::uint8_t>(lv.empty() ? 0 : 1));
        if (!lv.empty()) os.write(reinterpret_cast<const char*>(lv.data()),
                                  static_cast<std::streamsize>(lv.size() * sizeof(value_type)));
    }
}

CascadeAccumulator CascadeAccumulator::load(std::istream& is) {
    if (get<std::uint32_t>(is) != kMagic) throw FormatError("not an accumulator state");
    CascadeAccumulator acc(static_cast<std::size_t>(get<std::uint64_t>(is)));
    acc.count_ = get<std::uint64_t>(is);
    const auto n = get<std::uint64_t>(is);
    if (n > 64) throw FormatError("corrupt accumulator state");
    acc.levels_.resize(static_cast<std::size_t>(n));
    for (auto& lv : acc.levels_) {
        if (get<std::uint8_t>(is) == 0) continue;
        lv.resize(acc.width_);
        is.read(reinterpret_cast<char*>(lv.data()), static_cast<std::streamsize>(lv.size() * sizeof(value_type)));
        if (!is) throw FormatError("truncated accumulator state");
    }
    return acc;
}

} // namespace qpsim::reduce
