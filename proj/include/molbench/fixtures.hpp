// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace molbench {

/// Pseudo-random SMILES assembled from fragments (rings, aromatics,
/// branches, bracket atoms, %NN ring bonds). Syntactically valid, not
/// chemically curated. Duplicates are possible.
std::vector<std::string> synthetic_smiles(std::size_t count, std::uint64_t seed);

/// Hand-picked real molecules covering stereo, charges and multi-digit rings.
const std::vector<std::string>& reference_smiles();

}  // namespace molbench
