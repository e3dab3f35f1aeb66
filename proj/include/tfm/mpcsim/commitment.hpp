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

#include <cstdint>
#include <string>
#include <unordered_map>

#include <tfm/mpcsim/field.hpp>

namespace tfm::mpcsim {

struct Opening {
    Fp value;
    std::uint64_t randomness{0};
};

struct Commitment {
    std::uint64_t digest{0};

    [[nodiscard]] std::string hex() const;
    friend bool operator==(const Commitment&, const Commitment&) = default;
};

//! Hash-style commitments. Binding is enforced by an injective registry: a
//! digest maps to exactly one opening, and verification recomputes the hash.
class CommitmentScheme {
  public:
    Commitment commit(const Opening& opening);
    [[nodiscard]] bool verify(const Commitment& commitment, const Opening& opening) const;

  private:
    static std::uint64_t digest_of(const Opening& opening) noexcept;
    std::unordered_map<std::uint64_t, Opening> registry_;
};

}  // namespace tfm::mpcsim
