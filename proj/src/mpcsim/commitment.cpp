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

#include <tfm/mpcsim/commitment.hpp>

#include <cstdio>
#include <stdexcept>

namespace tfm::mpcsim {

std::string Commitment::hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

std::uint64_t CommitmentScheme::digest_of(const Opening& opening) noexcept {
    // splitmix64 finalizer over both words.
    auto mix = [](std::uint64_t z) {
        z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31U);
    };
    return mix(mix(opening.value.value() + 0x9e3779b97f4a7c15ULL) ^ opening.randomness);
}

Commitment CommitmentScheme::commit(const Opening& opening) {
    const std::uint64_t d = digest_of(opening);
    const auto [it, inserted] = registry_.emplace(d, opening);
    if (!inserted && !(it->second.value == opening.value && it->second.randomness == opening.randomness))
        throw std::logic_error("commitment digest collision");
    return Commitment{d};
}

bool CommitmentScheme::verify(const Commitment& commitment, const Opening& opening) const {
    const auto it = registry_.find(commitment.digest);
    if (it == registry_.end()) return false;
    return it->second.value == opening.value && it->second.randomness == opening.randomness &&
           digest_of(opening) == commitment.digest;
}

}  // namespace tfm::mpcsim
