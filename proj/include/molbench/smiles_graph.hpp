// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace molbench {

struct GraphAtom {
  std::string element;  // capitalized symbol, "*" for wildcard
  bool aromatic = false;
  bool bracket = false;
  int explicit_h = 0;  // bracket H count
  int charge = 0;
};

struct GraphBond {
  std::size_t a = 0;
  std::size_t b = 0;
  double order = 1.0;  // 1.5 marks aromatic
  bool aromatic = false;
};

/// Heavy-atom connectivity from a minimal SMILES parse. Hydrogens are
/// implicit unless written as their own bracket atom.
struct MolGraph {
  std::vector<GraphAtom> atoms;
  std::vector<GraphBond> bonds;
  std::size_t branch_count = 0;

  std::size_t component_count() const;
  /// Cyclomatic number: bonds - atoms + components.
  std::size_t ring_count() const;
  int implicit_hydrogens(std::size_t atom) const;
  double molecular_weight() const;
};

/// Throws DataError on a dangling ring-bond label or an unparseable token.
MolGraph parse_smiles_graph(std::string_view smiles);

inline constexpr std::size_t kNumBuiltinDescriptors = 8;

/// Column names of builtin_descriptors, in output order.
const std::array<std::string_view, kNumBuiltinDescriptors>& builtin_descriptor_names();

/// [atom_count, bond_count, ring_count, mol_weight, aromatic_atom_count,
///  heteroatom_count, halogen_count, branch_count]
std::array<double, kNumBuiltinDescriptors> builtin_descriptors(std::string_view smiles);

double atomic_weight(std::string_view element);

}  // namespace molbench
