#pragma once

// Counter-based Gaussian noise. Every normal draw is a pure function of
// (seed, path, step, component), so paths can be simulated in any order or
// partition and two engines fed the same seed see the same Brownian increments.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rankbsde {

/// Philox4x32-10 block cipher (Salmon et al., Random123).
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Block generate(Block ctr, Key key) noexcept {
        for (int round = 0; round < 10; ++round) {
            if (round > 0) {
                key[0] += kWeyl0;
                key[1] += kWeyl1;
            }
            const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
            const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        }
        return ctr;
    }

private:
    static constexpr std::uint32_t kMul0 = 0xD2511F53u;
    static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
};

/// Standard normals addressed by (path, step, component) under a master seed.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    [[nodiscard]] double operator()(std::uint64_t path, std::uint32_t step,
                                    std::uint32_t component) const noexcept {
        const auto pair = component / 2;
        const Philox4x32::Block ctr{static_cast<std::uint32_t>(path),
                                    static_cast<std::uint32_t>(path >> 32), step, pair};
        const auto out = Philox4x32::generate(ctr, key_);
        const double u1 = to_unit((std::uint64_t{out[0]} << 32) | out[1]);
        const double u2 = to_unit((std::uint64_t{out[2]} << 32) | out[3]);
        // Box-Muller
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        return (component % 2 == 0) ? radius * std::cos(angle) : radius * std::sin(angle);
    }

private:
    // Maps to the open interval (0, 1) so the logarithm stays finite.
    static double to_unit(std::uint64_t bits) noexcept {
        return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
    }

    Philox4x32::Key key_;
};

}  // namespace rankbsde
