/*
   Copyright 2026 The tfm-lab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace tfm::mpcsim {

__extension__ using uint128 = unsigned __int128;

//! Element of the prime field modulo 2^61 - 1.
class Fp {
  public:
    static constexpr std::uint64_t kModulus = (std::uint64_t{1} << 61) - 1;

    constexpr Fp() = default;
    constexpr explicit Fp(std::uint64_t v) : v_(reduce(v)) {}

    [[nodiscard]] constexpr std::uint64_t value() const noexcept { return v_; }

    friend constexpr Fp operator+(Fp a, Fp b) noexcept { return Fp(a.v_ + b.v_); }
    friend constexpr Fp operator-(Fp a, Fp b) noexcept { return Fp(a.v_ + kModulus - b.v_); }
    friend constexpr Fp operator*(Fp a, Fp b) noexcept {
        const uint128 prod = static_cast<uint128>(a.v_) * b.v_;
        const std::uint64_t lo = static_cast<std::uint64_t>(prod & kModulus);
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 61);
        return Fp(lo + hi);
    }
    friend constexpr bool operator==(Fp a, Fp b) noexcept { return a.v_ == b.v_; }

    [[nodiscard]] Fp pow(std::uint64_t e) const noexcept;
    //! Multiplicative inverse; zero maps to zero.
    [[nodiscard]] Fp inverse() const noexcept { return pow(kModulus - 2); }

    static Fp random(std::mt19937_64& rng);

  private:
    static constexpr std::uint64_t reduce(std::uint64_t v) noexcept {
        v = (v & kModulus) + (v >> 61);
        return v >= kModulus ? v - kModulus : v;
    }

    std::uint64_t v_{0};
};

struct Share {
    std::uint32_t index{0};  // evaluation point, 1..m
    Fp value;
};

//! Degree t-1 polynomial with constant term `secret`, evaluated at 1..m.
std::vector<Share> shamir_share(Fp secret, std::size_t t, std::size_t m, std::mt19937_64& rng);
std::vector<Share> shamir_share(Fp secret, std::size_t t, std::size_t m, std::uint64_t seed);

//! Lagrange interpolation at 0 through every supplied share. Empty when fewer
//! than t shares are given or an index repeats.
std::optional<Fp> shamir_reconstruct(std::span<const Share> shares, std::size_t t);

//! Whether the shares lie on one polynomial of degree below t.
bool is_consistent_sharing(std::span<const Share> shares, std::size_t t);

//! m uniformly random values summing to `secret`.
std::vector<Share> additive_share(Fp secret, std::size_t m, std::mt19937_64& rng);
Fp additive_reconstruct(std::span<const Share> shares);

//! Fixed-point encoding of non-negative currency amounts.
Fp encode_amount(double amount, double scale);
double decode_amount(Fp value, double scale);

}  // namespace tfm::mpcsim
