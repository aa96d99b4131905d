// SPDX-License-Identifier: Apache-2.0
#include "molbench/smiles_graph.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "molbench/error.hpp"
#include "molbench/tokenizer.hpp"

namespace molbench {

namespace {

struct ElementInfo {
  double weight;
};

const std::map<std::string, ElementInfo, std::less<>>& element_table() {
  static const std::map<std::string, ElementInfo, std::less<>> table = {
      {"H", {1.008}},    {"He", {4.0026}},  {"Li", {6.94}},     {"Be", {9.0122}},
      {"B", {10.81}},    {"C", {12.011}},   {"N", {14.007}},    {"O", {15.999}},
      {"F", {18.998}},   {"Ne", {20.180}},  {"Na", {22.990}},   {"Mg", {24.305}},
      {"Al", {26.982}},  {"Si", {28.085}},  {"P", {30.974}},    {"S", {32.06}},
      {"Cl", {35.45}},   {"Ar", {39.948}},  {"K", {39.098}},    {"Ca", {40.078}},
      {"Ti", {47.867}},  {"Cr", {51.996}},  {"Mn", {54.938}},   {"Fe", {55.845}},
      {"Co", {58.933}},  {"Ni", {58.693}},  {"Cu", {63.546}},   {"Zn", {65.38}},
      {"Ga", {69.723}},  {"Ge", {72.630}},  {"As", {74.922}},   {"Se", {78.971}},
      {"Br", {79.904}},  {"Kr", {83.798}},  {"Rb", {85.468}},   {"Sr", {87.62}},
      {"Mo", {95.95}},   {"Ru", {101.07}},  {"Rh", {102.91}},   {"Pd", {106.42}},
      {"Ag", {107.87}},  {"Cd", {112.41}},  {"In", {114.82}},   {"Sn", {118.71}},
      {"Sb", {121.76}},  {"Te", {127.60}},  {"I", {126.90}},    {"Xe", {131.29}},
      {"Cs", {132.91}},  {"Ba", {137.33}},  {"Gd", {157.25}},   {"Pt", {195.08}},
      {"Au", {196.97}},  {"Hg", {200.59}},  {"Tl", {204.38}},   {"Pb", {207.2}},
      {"Bi", {208.98}},  {"*", {0.0}},
  };
  return table;
}

// Lowest-first normal valences for the organic subset.
std::vector<int> default_valences(std::string_view element) {
  if (element == "B") return {3};
  if (element == "C") return {4};
  if (element == "N") return {3, 5};
  if (element == "O") return {2};
  if (element == "P") return {3, 5};
  if (element == "S") return {2, 4, 6};
  if (element == "F" || element == "Cl" || element == "Br" || element == "I") return {1};
  return {};
}

bool is_organic_atom_token(std::string_view tok) {
  static const char* const organic[] = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I",
                                        "b", "c", "n", "o", "p", "s", "*"};
  for (const char* o : organic) {
    if (tok == o) return true;
  }
  return false;
}

GraphAtom parse_organic(std::string_view tok) {
  GraphAtom atom;
  if (std::islower(static_cast<unsigned char>(tok[0]))) {
    atom.aromatic = true;
    atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(tok[0]))));
  } else {
    atom.element = std::string(tok);
  }
  return atom;
}

GraphAtom parse_bracket(std::string_view tok) {
  // [isotope? symbol chirality? hcount? charge? class?]
  const std::string_view body = tok.substr(1, tok.size() - 2);
  GraphAtom atom;
  atom.bracket = true;
  std::size_t i = 0;
  while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
  if (i >= body.size()) throw DataError("bracket atom '" + std::string(tok) + "' has no element");

  const auto& table = element_table();
  const char first = body[i];
  if (first == '*') {
    atom.element = "*";
    ++i;
  } else if (std::islower(static_cast<unsigned char>(first))) {
    atom.aromatic = true;
    std::string two;
    if (i + 1 < body.size()) {
      two = std::string{static_cast<char>(std::toupper(static_cast<unsigned char>(first))), body[i + 1]};
    }
    if (!two.empty() && std::islower(static_cast<unsigned char>(body[i + 1])) && table.count(two)) {
      atom.element = two;
      i += 2;
    } else {
      atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(first))));
      ++i;
    }
  } else if (std::isupper(static_cast<unsigned char>(first))) {
    if (i + 1 < body.size() && std::islower(static_cast<unsigned char>(body[i + 1])) &&
        table.count(std::string{first, body[i + 1]})) {
      atom.element = std::string{first, body[i + 1]};
      i += 2;
    } else {
      atom.element = std::string(1, first);
      ++i;
    }
  } else {
    throw DataError("bracket atom '" + std::string(tok) + "' has no element");
  }
  if (!table.count(atom.element)) {
    throw DataError("unknown element '" + atom.element + "' in '" + std::string(tok) + "'");
  }

  while (i < body.size() && body[i] == '@') ++i;
  // Tetrahedral/allene classes such as @TH1 or @SP2 are skipped letter-wise.
  while (i < body.size() && std::isupper(static_cast<unsigned char>(body[i])) && body[i] != 'H') ++i;
  while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
  if (i < body.size() && body[i] == 'H') {
    ++i;
    int h = 1;
    if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      h = body[i] - '0';
      ++i;
    }
    atom.explicit_h = h;
  }
  while (i < body.size() && (body[i] == '+' || body[i] == '-')) {
    const int sign = body[i] == '+' ? 1 : -1;
    ++i;
    int mag = 1;
    if (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
      mag = 0;
      while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) {
        mag = mag * 10 + (body[i] - '0');
        ++i;
      }
    }
    atom.charge += sign * mag;
  }
  return atom;
}

double bond_order_of(char symbol) {
  switch (symbol) {
    case '=': return 2.0;
    case '#': return 3.0;
    case '$': return 4.0;
    case ':': return 1.5;
    default: return 1.0;
  }
}

}  // namespace

double atomic_weight(std::string_view element) {
  const auto& table = element_table();
  const auto it = table.find(element);
  if (it == table.end()) throw DataError("unknown element '" + std::string(element) + "'");
  return it->second.weight;
}

MolGraph parse_smiles_graph(std::string_view smiles) {
  MolGraph g;
  std::optional<std::size_t> prev;
  std::vector<std::optional<std::size_t>> branch_stack;
  std::optional<char> pending_bond;
  bool pending_dot = false;
  struct OpenRing {
    std::size_t atom;
    std::optional<char> bond;
  };
  std::map<std::string, OpenRing> open_rings;

  auto add_bond = [&](std::size_t a, std::size_t b, std::optional<char> sym) {
    GraphBond bond{a, b, 1.0, false};
    if (sym) {
      bond.order = bond_order_of(*sym);
      bond.aromatic = *sym == ':';
    } else if (g.atoms[a].aromatic && g.atoms[b].aromatic) {
      bond.order = 1.5;
      bond.aromatic = true;
    }
    g.bonds.push_back(bond);
  };

  for (const auto& tok : tokenize(smiles)) {
    const bool is_ring_label =
        (tok.size() == 1 && std::isdigit(static_cast<unsigned char>(tok[0]))) ||
        (tok.size() == 3 && tok[0] == '%');
    if (tok[0] == '[' || is_organic_atom_token(tok)) {
      g.atoms.push_back(tok[0] == '[' ? parse_bracket(tok) : parse_organic(tok));
      const std::size_t cur = g.atoms.size() - 1;
      if (prev && !pending_dot) add_bond(*prev, cur, pending_bond);
      pending_bond.reset();
      pending_dot = false;
      prev = cur;
    } else if (tok == "(") {
      if (!prev) throw DataError("branch opened before any atom in '" + std::string(smiles) + "'");
      branch_stack.push_back(prev);
      ++g.branch_count;
    } else if (tok == ")") {
      if (branch_stack.empty()) throw DataError("unbalanced ')' in '" + std::string(smiles) + "'");
      prev = branch_stack.back();
      branch_stack.pop_back();
    } else if (tok == "." ) {
      pending_dot = true;
    } else if (tok.size() == 1 && std::string_view("-=#$:/\\").find(tok[0]) != std::string_view::npos) {
      pending_bond = tok[0];
    } else if (is_ring_label) {
      if (!prev) throw DataError("ring-bond digit " + tok + " precedes any atom");
      const auto it = open_rings.find(tok);
      if (it == open_rings.end()) {
        open_rings.emplace(tok, OpenRing{*prev, pending_bond});
      } else {
        const auto sym = pending_bond ? pending_bond : it->second.bond;
        add_bond(it->second.atom, *prev, sym);
        open_rings.erase(it);
      }
      pending_bond.reset();
    } else {
      throw DataError("unexpected token '" + tok + "' in '" + std::string(smiles) + "'");
    }
  }
  if (!open_rings.empty()) {
    throw DataError("dangling ring-bond digit " + open_rings.begin()->first + " in '" +
                    std::string(smiles) + "'");
  }
  if (!branch_stack.empty()) throw DataError("unbalanced '(' in '" + std::string(smiles) + "'");
  return g;
}

std::size_t MolGraph::component_count() const {
  std::vector<std::size_t> parent(atoms.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = atoms.size();
  for (const auto& b : bonds) {
    const auto ra = find(b.a);
    const auto rb = find(b.b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components;
}

std::size_t MolGraph::ring_count() const {
  return bonds.size() + component_count() - atoms.size();
}

int MolGraph::implicit_hydrogens(std::size_t atom) const {
  const auto& a = atoms[atom];
  if (a.bracket) return a.explicit_h;
  const auto valences = default_valences(a.element);
  if (valences.empty()) return 0;
  double sum = 0.0;
  int aromatic_bonds = 0;
  for (const auto& b : bonds) {
    if (b.a != atom && b.b != atom) continue;
    if (b.aromatic) {
      ++aromatic_bonds;
    } else {
      sum += b.order;
    }
  }
  if (a.aromatic) {
    // Aromatic atoms contribute one extra electron; only the lowest valence applies.
    const int used = static_cast<int>(sum) + aromatic_bonds + 1;
    return std::max(0, valences.front() - used);
  }
  const int used = static_cast<int>(std::ceil(sum + static_cast<double>(aromatic_bonds) * 1.5));
  for (const int v : valences) {
    if (v >= used) return v - used;
  }
  return 0;
}

double MolGraph::molecular_weight() const {
  double w = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    w += atomic_weight(atoms[i].element) + implicit_hydrogens(i) * atomic_weight("H");
  }
  return w;
}

const std::array<std::string_view, kNumBuiltinDescriptors>& builtin_descriptor_names() {
  static const std::array<std::string_view, kNumBuiltinDescriptors> names = {
      "atom_count",          "bond_count",      "ring_count",    "mol_weight",
      "aromatic_atom_count", "heteroatom_count", "halogen_count", "branch_count"};
  return names;
}

std::array<double, kNumBuiltinDescriptors> builtin_descriptors(std::string_view smiles) {
  const MolGraph g = parse_smiles_graph(smiles);
  double aromatic = 0, hetero = 0, halogen = 0;
  for (const auto& a : g.atoms) {
    if (a.aromatic) aromatic += 1;
    if (a.element != "C" && a.element != "H" && a.element != "*") hetero += 1;
    if (a.element == "F" || a.element == "Cl" || a.element == "Br" || a.element == "I" ||
        a.element == "At") {
      halogen += 1;
    }
  }
  return {static_cast<double>(g.atoms.size()),
          static_cast<double>(g.bonds.size()),
          static_cast<double>(g.ring_count()),
          g.molecular_weight(),
          aromatic,
          hetero,
          halogen,
          static_cast<double>(g.branch_count)};
}

}  // namespace molbench
