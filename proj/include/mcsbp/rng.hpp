#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mcsbp
{
/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// The 128-bit counter is laid out as (block, substream, path_lo, path_hi), so
/// every (seed, path, substream) triple owns an independent sequence of 2^32
/// blocks. Ensembles derive path k's generator from (seed, k) alone, which makes
/// results independent of how paths are scheduled onto threads.
class Philox
{
  public:
    using result_type = std::uint64_t;

    Philox(std::uint64_t seed, std::uint64_t path, std::uint32_t substream = 0) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          ctr_{0u, substream, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)}
    {
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        if (pos_ == 2)
        {
            refill();
            pos_ = 0;
        }
        const auto lo = static_cast<std::uint64_t>(out_[2 * pos_]);
        const auto hi = static_cast<std::uint64_t>(out_[2 * pos_ + 1]);
        ++pos_;
        return lo | (hi << 32);
    }

    /// Uniform double in (0, 1); never returns an endpoint.
    double uniform_open() noexcept
    {
        return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// A fresh generator for another substream of the same path.
    Philox split(std::uint32_t substream) const noexcept
    {
        Philox child = *this;
        child.ctr_[0] = 0;
        child.ctr_[1] = substream;
        child.pos_ = 2;
        return child;
    }

    /// The keyed Philox bijection on one 128-bit block.
    static std::array<std::uint32_t, 4> bijection(std::array<std::uint32_t, 4> x,
                                                  std::array<std::uint32_t, 2> k) noexcept
    {
        for (int round = 0; round < 10; ++round)
        {
            const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * x[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * x[2];
            x = {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k[0], static_cast<std::uint32_t>(p1),
                 static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k[1], static_cast<std::uint32_t>(p0)};
            k[0] += 0x9E3779B9u;
            k[1] += 0xBB67AE85u;
        }
        return x;
    }

  private:
    void refill() noexcept
    {
        out_ = bijection(ctr_, key_);
        ++ctr_[0];
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 4> ctr_;
    std::array<std::uint32_t, 4> out_{};
    int pos_ = 2;
};
}  // namespace mcsbp
