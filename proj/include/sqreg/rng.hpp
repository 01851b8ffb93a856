#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace sqreg {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

/// Philox4x32-10 counter-based generator. The key fixes the stream; the
/// 128-bit counter walks through it, so any (key, position) is addressable.
class Philox {
public:
    using result_type = std::uint64_t;

    explicit Philox(std::uint64_t key = 0, std::uint64_t stream = 0) noexcept
        : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
          ctr_{0, 0, static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)} {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        if (pos_ == 2) refill();
        return buf_[pos_++];
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1).
    double uniform_open() noexcept {
        return (static_cast<double>((*this)() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Derive an independent child stream; the parent is not advanced.
    [[nodiscard]] Philox split(std::uint64_t label) const noexcept {
        std::uint64_t k = (static_cast<std::uint64_t>(key_[1]) << 32) | key_[0];
        std::uint64_t s = (static_cast<std::uint64_t>(ctr_[3]) << 32) | ctr_[2];
        return Philox(splitmix64(k ^ splitmix64(label + 0x632BE59BD9B4E019ull)), splitmix64(s + label));
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

    void refill() noexcept {
        std::array<std::uint32_t, 4> x = ctr_;
        std::array<std::uint32_t, 2> k = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * x[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * x[2];
            x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        buf_[0] = (static_cast<std::uint64_t>(x[1]) << 32) | x[0];
        buf_[1] = (static_cast<std::uint64_t>(x[3]) << 32) | x[2];
        pos_ = 0;
        if (++ctr_[0] == 0) ++ctr_[1];
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint64_t, 2> buf_{};
    int pos_ = 2;
};

using Rng = Philox;

/// Stream for (master seed, experiment label, trial index).
inline Rng make_stream(std::uint64_t master_seed, std::string_view label, std::uint64_t index = 0) {
    return Rng(splitmix64(master_seed ^ splitmix64(fnv1a64(label))), splitmix64(index));
}

}  // namespace sqreg
