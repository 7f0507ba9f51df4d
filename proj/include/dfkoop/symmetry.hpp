#pragma once

#include <vector>

#include "dfkoop/types.hpp"

namespace dfkoop {

/// Diagonal of a sign matrix; every entry is +1 or -1.
using SignVector = std::vector<int>;

/// Sign-symmetry group of a system and the sparsity it imposes on (A, B, C).
///
/// gamma_x[g] and gamma_u[g] are paired: gamma_u[g] = h(gamma_x[g]). The
/// lifted state is partitioned into consecutive blocks, block i holding the
/// block_sizes[i] lifted coordinates that reconstruct state i, so
/// gamma_z[g] repeats gamma_x[g][i] over block i. Element 0 is the identity.
struct SymmetryStructure {
  int n_x = 0;
  int n_u = 0;
  int n_z = 0;
  std::vector<SignVector> gamma_x;
  std::vector<SignVector> gamma_u;
  std::vector<SignVector> gamma_z;
  std::vector<int> block_sizes;
  /// Maximal sets of state indices (0-based) that flip sign together.
  std::vector<std::vector<int>> index_groups;
  /// 1 where an entry is free, 0 where it is pinned to zero.
  Mat mask_a;
  Mat mask_b;
  Mat mask_c;

  [[nodiscard]] int order() const { return static_cast<int>(gamma_x.size()); }
  [[nodiscard]] bool trivial() const { return gamma_x.size() <= 1; }
  /// Index of the state that lifted coordinate j belongs to.
  [[nodiscard]] int owner_of(int j) const;

  [[nodiscard]] Vec act_x(int g, const Vec& x) const;
  [[nodiscard]] Vec act_u(int g, const Vec& u) const;
  [[nodiscard]] Vec act_z(int g, const Vec& z) const;
};

/// Validates the group and homomorphism axioms and derives index groups,
/// gamma_z and the masks. Throws ConfigError on any violation.
SymmetryStructure build_structure(std::vector<SignVector> gamma_x, std::vector<SignVector> gamma_u,
                                  std::vector<int> block_sizes);

/// Closure of a generator set. gen_u[i] is the image of gen_x[i]; the images of
/// products are products of images, and a ConfigError is raised when two
/// products of generators coincide in x but not in u (h would not be a map).
/// The identity comes first in the result.
struct SignGroup {
  std::vector<SignVector> gamma_x;
  std::vector<SignVector> gamma_u;
};
SignGroup generate_group(const std::vector<SignVector>& gen_x, const std::vector<SignVector>& gen_u,
                         int n_x, int n_u);

/// Structure with only the identity element: no sparsity constraints.
SymmetryStructure trivial_structure(int n_x, int n_u, std::vector<int> block_sizes);

/// Zeroes the entries of A, B, C outside their masks.
void apply_masks(const SymmetryStructure& s, Mat& a, Mat& b, Mat& c);

}  // namespace dfkoop
