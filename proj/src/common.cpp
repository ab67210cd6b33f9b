#include "bmdal/common.hpp"

#include <numeric>

namespace bmdal {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
    std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
    for (unsigned char ch : tag) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(splitmix64(root ^ h) + index);
}

int argmax_masked(const Vec& score, const std::vector<bool>& mask) {
    int best = -1;
    for (int i = 0; i < score.size(); ++i) {
        if (!mask[i]) continue;
        if (best < 0 || score[i] > score[best]) best = i;
    }
    return best;
}

Indices concat(const Indices& a, const Indices& b) {
    Indices out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

Indices iota_indices(int begin, int end) {
    Indices out(static_cast<std::size_t>(std::max(0, end - begin)));
    std::iota(out.begin(), out.end(), begin);
    return out;
}

}  // namespace bmdal
