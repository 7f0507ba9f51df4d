#include "dfkoop/symmetry.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "dfkoop/error.hpp"

namespace dfkoop {

namespace {

SignVector product(const SignVector& a, const SignVector& b) {
  SignVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = a[i] * b[i];
  }
  return out;
}

bool is_sign_vector(const SignVector& v, int n) {
  return static_cast<int>(v.size()) == n &&
         std::all_of(v.begin(), v.end(), [](int s) { return s == 1 || s == -1; });
}

int find(const std::vector<SignVector>& set, const SignVector& v) {
  const auto it = std::find(set.begin(), set.end(), v);
  return it == set.end() ? -1 : static_cast<int>(it - set.begin());
}

Vec act(const SignVector& g, const Vec& v) {
  Vec out = v;
  for (Index i = 0; i < v.size(); ++i) {
    if (g[i] < 0) {
      out(i) = -v(i);
    }
  }
  return out;
}

}  // namespace

int SymmetryStructure::owner_of(int j) const {
  int acc = 0;
  for (int i = 0; i < static_cast<int>(block_sizes.size()); ++i) {
    acc += block_sizes[i];
    if (j < acc) {
      return i;
    }
  }
  throw ConfigError("lifted index out of range");
}

Vec SymmetryStructure::act_x(int g, const Vec& x) const { return act(gamma_x.at(g), x); }
Vec SymmetryStructure::act_u(int g, const Vec& u) const { return act(gamma_u.at(g), u); }
Vec SymmetryStructure::act_z(int g, const Vec& z) const { return act(gamma_z.at(g), z); }

SymmetryStructure build_structure(std::vector<SignVector> gamma_x, std::vector<SignVector> gamma_u,
                                  std::vector<int> block_sizes) {
  if (gamma_x.empty() || gamma_x.size() != gamma_u.size()) {
    throw ConfigError("symmetry: gamma_x and h table must be non-empty and paired");
  }
  const int n_x = static_cast<int>(gamma_x.front().size());
  const int n_u = static_cast<int>(gamma_u.front().size());
  if (static_cast<int>(block_sizes.size()) != n_x) {
    throw ConfigError("symmetry: need one block size per state");
  }
  if (std::any_of(block_sizes.begin(), block_sizes.end(), [](int b) { return b < 1; })) {
    throw ConfigError("symmetry: block sizes must be positive");
  }
  for (std::size_t g = 0; g < gamma_x.size(); ++g) {
    if (!is_sign_vector(gamma_x[g], n_x) || !is_sign_vector(gamma_u[g], n_u)) {
      throw ConfigError("symmetry: element " + std::to_string(g) + " is not a sign vector of the right size");
    }
    if (find(gamma_x, gamma_x[g]) != static_cast<int>(g)) {
      throw ConfigError("symmetry: duplicate group element " + std::to_string(g));
    }
  }

  // Identity first; callers may list it anywhere.
  const int id = find(gamma_x, SignVector(n_x, 1));
  if (id < 0) {
    throw ConfigError("symmetry: gamma_x does not contain the identity");
  }
  std::swap(gamma_x[0], gamma_x[id]);
  std::swap(gamma_u[0], gamma_u[id]);

  for (std::size_t a = 0; a < gamma_x.size(); ++a) {
    for (std::size_t b = 0; b < gamma_x.size(); ++b) {
      const int c = find(gamma_x, product(gamma_x[a], gamma_x[b]));
      if (c < 0) {
        throw ConfigError("symmetry: gamma_x is not closed under multiplication");
      }
      if (gamma_u[c] != product(gamma_u[a], gamma_u[b])) {
        throw ConfigError("symmetry: h is not a homomorphism");
      }
    }
  }

  SymmetryStructure s;
  s.n_x = n_x;
  s.n_u = n_u;
  s.n_z = std::accumulate(block_sizes.begin(), block_sizes.end(), 0);
  s.gamma_x = std::move(gamma_x);
  s.gamma_u = std::move(gamma_u);
  s.block_sizes = std::move(block_sizes);

  // Coordinates sharing a sign pattern over the whole group form one index set,
  // listed in order of their smallest member.
  std::vector<SignVector> patterns;
  for (int i = 0; i < n_x; ++i) {
    SignVector pattern;
    pattern.reserve(s.gamma_x.size());
    for (const auto& g : s.gamma_x) {
      pattern.push_back(g[i]);
    }
    const int at = find(patterns, pattern);
    if (at < 0) {
      patterns.push_back(pattern);
      s.index_groups.push_back({i});
    } else {
      s.index_groups[at].push_back(i);
    }
  }

  for (const auto& g : s.gamma_x) {
    SignVector gz;
    gz.reserve(s.n_z);
    for (int i = 0; i < n_x; ++i) {
      gz.insert(gz.end(), s.block_sizes[i], g[i]);
    }
    s.gamma_z.push_back(std::move(gz));
  }

  const int order = s.order();
  auto same_over_group = [&](auto lhs, auto rhs) {
    for (int g = 0; g < order; ++g) {
      if (lhs(g) != rhs(g)) {
        return false;
      }
    }
    return true;
  };

  s.mask_a = Mat::Zero(s.n_z, s.n_z);
  for (int i = 0; i < s.n_z; ++i) {
    for (int j = 0; j < s.n_z; ++j) {
      s.mask_a(i, j) = same_over_group([&](int g) { return s.gamma_z[g][i]; },
                                       [&](int g) { return s.gamma_z[g][j]; });
    }
  }
  s.mask_b = Mat::Zero(s.n_z, n_u);
  for (int i = 0; i < s.n_z; ++i) {
    for (int k = 0; k < n_u; ++k) {
      s.mask_b(i, k) = same_over_group([&](int g) { return s.gamma_z[g][i]; },
                                       [&](int g) { return s.gamma_u[g][k]; });
    }
  }
  if (s.trivial()) {
    s.mask_c = Mat::Ones(n_x, s.n_z);
  } else {
    s.mask_c = Mat::Zero(n_x, s.n_z);
    for (int j = 0; j < s.n_z; ++j) {
      s.mask_c(s.owner_of(j), j) = 1.0;
    }
  }
  return s;
}

SignGroup generate_group(const std::vector<SignVector>& gen_x, const std::vector<SignVector>& gen_u,
                         int n_x, int n_u) {
  if (gen_x.size() != gen_u.size()) {
    throw ConfigError("symmetry: every generator needs an image under h");
  }
  SignGroup group;
  group.gamma_x.push_back(SignVector(n_x, 1));
  group.gamma_u.push_back(SignVector(n_u, 1));
  for (std::size_t i = 0; i < gen_x.size(); ++i) {
    if (!is_sign_vector(gen_x[i], n_x) || !is_sign_vector(gen_u[i], n_u)) {
      throw ConfigError("symmetry: generator " + std::to_string(i) + " has the wrong size or non-sign entries");
    }
  }
  // Breadth-first closure.
  for (std::size_t cursor = 0; cursor < group.gamma_x.size(); ++cursor) {
    for (std::size_t i = 0; i < gen_x.size(); ++i) {
      SignVector x = product(group.gamma_x[cursor], gen_x[i]);
      SignVector u = product(group.gamma_u[cursor], gen_u[i]);
      const int at = find(group.gamma_x, x);
      if (at < 0) {
        group.gamma_x.push_back(std::move(x));
        group.gamma_u.push_back(std::move(u));
      } else if (group.gamma_u[at] != u) {
        throw ConfigError("symmetry: generator images are inconsistent with a homomorphism");
      }
    }
  }
  return group;
}

SymmetryStructure trivial_structure(int n_x, int n_u, std::vector<int> block_sizes) {
  return build_structure({SignVector(n_x, 1)}, {SignVector(n_u, 1)}, std::move(block_sizes));
}

void apply_masks(const SymmetryStructure& s, Mat& a, Mat& b, Mat& c) {
  a = a.cwiseProduct(s.mask_a);
  b = b.cwiseProduct(s.mask_b);
  c = c.cwiseProduct(s.mask_c);
}

}  // namespace dfkoop
