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

#include <tfm/mpcsim/field.hpp>

#include <cmath>

#include <tfm/core.hpp>

namespace tfm::mpcsim {

Fp Fp::pow(std::uint64_t e) const noexcept {
    Fp base = *this;
    Fp acc(1);
    while (e != 0) {
        if ((e & 1U) != 0) acc = acc * base;
        base = base * base;
        e >>= 1U;
    }
    return acc;
}

Fp Fp::random(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::uint64_t> dist(0, kModulus - 1);
    return Fp(dist(rng));
}

std::vector<Share> shamir_share(Fp secret, std::size_t t, std::size_t m, std::mt19937_64& rng) {
    if (t < 1 || t > m) throw InvalidParameters("shamir_share: need 1 <= t <= m");
    std::vector<Fp> coeffs{secret};
    for (std::size_t d = 1; d < t; ++d) coeffs.push_back(Fp::random(rng));
    std::vector<Share> shares;
    shares.reserve(m);
    for (std::size_t j = 1; j <= m; ++j) {
        const Fp point(j);
        Fp acc;
        for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * point + *it;
        shares.push_back(Share{static_cast<std::uint32_t>(j), acc});
    }
    return shares;
}

std::vector<Share> shamir_share(Fp secret, std::size_t t, std::size_t m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return shamir_share(secret, t, m, rng);
}

namespace {

bool distinct_nonzero_indices(std::span<const Share> shares) {
    for (std::size_t a = 0; a < shares.size(); ++a) {
        if (shares[a].index == 0) return false;
        for (std::size_t b = a + 1; b < shares.size(); ++b)
            if (shares[a].index == shares[b].index) return false;
    }
    return true;
}

// Value at `at` of the interpolating polynomial through `shares`.
Fp interpolate(std::span<const Share> shares, Fp at) {
    Fp acc;
    for (std::size_t a = 0; a < shares.size(); ++a) {
        Fp num(1);
        Fp den(1);
        const Fp xa(shares[a].index);
        for (std::size_t b = 0; b < shares.size(); ++b) {
            if (a == b) continue;
            const Fp xb(shares[b].index);
            num = num * (at - xb);
            den = den * (xa - xb);
        }
        acc = acc + shares[a].value * num * den.inverse();
    }
    return acc;
}

}  // namespace

std::optional<Fp> shamir_reconstruct(std::span<const Share> shares, std::size_t t) {
    if (shares.size() < t || shares.empty() || !distinct_nonzero_indices(shares)) return std::nullopt;
    return interpolate(shares, Fp(0));
}

bool is_consistent_sharing(std::span<const Share> shares, std::size_t t) {
    if (t == 0 || !distinct_nonzero_indices(shares)) return false;
    if (shares.size() <= t) return true;
    const auto basis = shares.first(t);
    for (std::size_t j = t; j < shares.size(); ++j)
        if (!(interpolate(basis, Fp(shares[j].index)) == shares[j].value)) return false;
    return true;
}

std::vector<Share> additive_share(Fp secret, std::size_t m, std::mt19937_64& rng) {
    if (m < 1) throw InvalidParameters("additive_share: need m >= 1");
    std::vector<Share> shares;
    shares.reserve(m);
    Fp rest = secret;
    for (std::size_t j = 1; j < m; ++j) {
        const Fp v = Fp::random(rng);
        shares.push_back(Share{static_cast<std::uint32_t>(j), v});
        rest = rest - v;
    }
    shares.push_back(Share{static_cast<std::uint32_t>(m), rest});
    return shares;
}

Fp additive_reconstruct(std::span<const Share> shares) {
    Fp acc;
    for (const auto& s : shares) acc = acc + s.value;
    return acc;
}

Fp encode_amount(double amount, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidParameters("encode_amount: scale must be positive");
    const double units = std::round(amount * scale);
    if (!(units >= 0.0) || units >= static_cast<double>(Fp::kModulus))
        throw InvalidParameters("encode_amount: amount out of field range");
    return Fp(static_cast<std::uint64_t>(units));
}

double decode_amount(Fp value, double scale) { return static_cast<double>(value.value()) / scale; }

}  // namespace tfm::mpcsim
