#pragma once

// Recovering unknown coding vectors from sketches of sparse inputs:
// y = sum_i r_i x_i with at most k nonzero x_i. Coding is orthogonal matching
// pursuit; learning is K-SVD-style alternating minimization.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/random.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

struct SparseCode {
  std::vector<std::size_t> support;  // selection order
  std::vector<double> coefficients;

  [[nodiscard]] Eigen::VectorXd reconstruct(const Eigen::MatrixXd& atoms) const {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(atoms.rows());
    for (std::size_t i = 0; i < support.size(); ++i) {
      y += coefficients[i] * atoms.col(static_cast<Eigen::Index>(support[i]));
    }
    return y;
  }
};

/// k rounds of max-|correlation| selection with a joint least-squares re-fit.
/// Stops early once the residual vanishes; ties go to the lower atom index.
inline SparseCode sparse_codes(const Eigen::VectorXd& y, const Eigen::MatrixXd& atoms, std::size_t k) {
  require(k >= 1, ErrorKind::kInvalidInput, "k must be >= 1");
  require(static_cast<Eigen::Index>(k) <= atoms.rows(), ErrorKind::kInvalidInput, "k exceeds sketch dimension");
  require(y.size() == atoms.rows(), ErrorKind::kInvalidInput, "sketch and atom dimensions differ");
  SparseCode code;
  const double y_norm = y.norm();
  if (y_norm == 0.0) return code;
  Eigen::VectorXd residual = y;
  Eigen::VectorXd coeffs;
  std::vector<bool> taken(static_cast<std::size_t>(atoms.cols()), false);
  const std::size_t rounds = std::min<std::size_t>(k, static_cast<std::size_t>(atoms.cols()));
  for (std::size_t round = 0; round < rounds; ++round) {
    if (residual.norm() <= 1e-10 * y_norm) break;
    const Eigen::VectorXd corr = atoms.transpose() * residual;
    std::size_t best = taken.size();
    for (std::size_t j = 0; j < taken.size(); ++j) {
      if (taken[j]) continue;
      if (best == taken.size() || std::abs(corr[static_cast<Eigen::Index>(j)]) > std::abs(corr[static_cast<Eigen::Index>(best)])) {
        best = j;
      }
    }
    taken[best] = true;
    code.support.push_back(best);
    Eigen::MatrixXd sub(atoms.rows(), static_cast<Eigen::Index>(code.support.size()));
    for (std::size_t i = 0; i < code.support.size(); ++i) {
      sub.col(static_cast<Eigen::Index>(i)) = atoms.col(static_cast<Eigen::Index>(code.support[i]));
    }
    coeffs = sub.colPivHouseholderQr().solve(y);
    residual = y - sub * coeffs;
  }
  code.coefficients.assign(coeffs.data(), coeffs.data() + coeffs.size());
  return code;
}

inline SparseCode sparse_codes(const Sketch& sketch, const Eigen::MatrixXd& atoms, std::size_t k) {
  return sparse_codes(sketch.values(), atoms, k);
}

struct DictionaryAtoms {
  Eigen::MatrixXd atoms;               // d x N, unit columns
  double initial_energy = 0.0;         // reconstruction energy of the initial coding
  std::vector<double> energies;        // after each iteration, non-increasing
};

struct LearnOptions {
  std::size_t atoms = 20;
  std::size_t sparsity = 3;
  std::size_t iterations = 30;
  std::uint64_t seed = 0;
};

namespace detail {

inline bool lexicographic_less(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

inline long double column_energy(const Eigen::MatrixXd& residual, Eigen::Index col) {
  long double e = 0.0L;
  for (Eigen::Index r = 0; r < residual.rows(); ++r) {
    const long double v = residual(r, col);
    e += v * v;
  }
  return e;
}

inline long double total_energy(const Eigen::MatrixXd& residual) {
  long double e = 0.0L;
  for (Eigen::Index c = 0; c < residual.cols(); ++c) e += column_energy(residual, c);
  return e;
}

}  // namespace detail

/// K-SVD-style dictionary learning. The corpus is put in a canonical
/// (lexicographic) order first, so the result depends only on the multiset
/// of samples and the seed. Each sample keeps its previous code when fresh
/// OMP does worse, and an atom update that fails to lower its users' energy
/// is reverted; together these make the energy trace non-increasing.
inline DictionaryAtoms learn_dictionary(std::span<const Eigen::VectorXd> corpus, const LearnOptions& options) {
  require(options.atoms >= 1 && options.sparsity >= 1, ErrorKind::kInvalidInput, "atoms and sparsity must be >= 1");
  require(options.atoms <= corpus.size(), ErrorKind::kInvalidInput, "more atoms than corpus samples");
  require(corpus.size() >= 10 * options.atoms, ErrorKind::kInvalidInput, "corpus must hold at least 10 samples per atom");
  const Eigen::Index d = corpus.front().size();
  for (const auto& y : corpus) require(y.size() == d, ErrorKind::kInvalidInput, "corpus samples differ in dimension");

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detail::lexicographic_less(corpus[a], corpus[b]); });
  const auto n = static_cast<Eigen::Index>(corpus.size());
  Eigen::MatrixXd samples(d, n);
  for (Eigen::Index i = 0; i < n; ++i) samples.col(i) = corpus[order[static_cast<std::size_t>(i)]];

  // Initialize from distinct nonzero samples.
  const auto n_atoms = static_cast<Eigen::Index>(options.atoms);
  DictionaryAtoms out;
  out.atoms.resize(d, n_atoms);
  {
    Stream rng = Stream::derive(options.seed, "dictionary/init");
    std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Eigen::Index{0});
    Eigen::Index filled = 0;
    for (std::size_t i = 0; i < pool.size() && filled < n_atoms; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
      const double norm = samples.col(pool[i]).norm();
      if (norm == 0.0) continue;
      out.atoms.col(filled++) = samples.col(pool[i]) / norm;
    }
    require(filled == n_atoms, ErrorKind::kInvalidInput, "not enough nonzero samples to initialize atoms");
  }

  const std::size_t k = std::min<std::size_t>(options.sparsity, static_cast<std::size_t>(d));
  std::vector<SparseCode> codes(static_cast<std::size_t>(n));
  Eigen::MatrixXd residual(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    codes[static_cast<std::size_t>(i)] = sparse_codes(Eigen::VectorXd(samples.col(i)), out.atoms, k);
    residual.col(i) = samples.col(i) - codes[static_cast<std::size_t>(i)].reconstruct(out.atoms);
  }
  out.initial_energy = static_cast<double>(detail::total_energy(residual));

  for (std::size_t iter = 0; iter < options.iterations; ++iter) {
    if (iter > 0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        auto fresh = sparse_codes(Eigen::VectorXd(samples.col(i)), out.atoms, k);
        const Eigen::VectorXd fresh_residual = samples.col(i) - fresh.reconstruct(out.atoms);
        if (fresh_residual.squaredNorm() < residual.col(i).squaredNorm()) {
          codes[static_cast<std::size_t>(i)] = std::move(fresh);
          residual.col(i) = fresh_residual;
        }
      }
    }

    std::vector<bool> reseeded_from(static_cast<std::size_t>(n), false);
    for (Eigen::Index j = 0; j < n_atoms; ++j) {
      // Users of atom j and where j sits in each code.
      std::vector<std::pair<Eigen::Index, std::size_t>> users;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = codes[static_cast<std::size_t>(i)].support;
        auto it = std::find(s.begin(), s.end(), static_cast<std::size_t>(j));
        if (it != s.end()) users.emplace_back(i, static_cast<std::size_t>(it - s.begin()));
      }

      if (users.empty()) {
        // Unused atom: move it onto the worst-reconstructed sample. No code
        // references it, so the energy is unchanged.
        Eigen::Index worst = -1;
        long double worst_energy = -1.0L;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (reseeded_from[static_cast<std::size_t>(i)]) continue;
          const long double e = detail::column_energy(residual, i);
          if (e > worst_energy) {
            worst_energy = e;
            worst = i;
          }
        }
        if (worst >= 0 && samples.col(worst).norm() > 0.0) {
          reseeded_from[static_cast<std::size_t>(worst)] = true;
          out.atoms.col(j) = samples.col(worst).normalized();
        }
        continue;
      }

      const auto m = static_cast<Eigen::Index>(users.size());
      Eigen::MatrixXd err(d, m);
      long double before = 0.0L;
      for (Eigen::Index u = 0; u < m; ++u) {
        const auto [i, slot] = users[static_cast<std::size_t>(u)];
        before += detail::column_energy(residual, i);
        err.col(u) = residual.col(i) + codes[static_cast<std::size_t>(i)].coefficients[slot] * out.atoms.col(j);
      }
      // Best rank-1 approximation of err: top eigenvector of err err^T.
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(err * err.transpose());
      Eigen::VectorXd atom = eig.eigenvectors().col(d - 1);
      if (atom.dot(out.atoms.col(j)) < 0.0) atom = -atom;
      const Eigen::VectorXd coeffs = err.transpose() * atom;
      const Eigen::MatrixXd updated = err - atom * coeffs.transpose();
      long double after = 0.0L;
      for (Eigen::Index u = 0; u < m; ++u) after += detail::column_energy(updated, u);
      if (!(after < before)) continue;

      out.atoms.col(j) = atom;
      for (Eigen::Index u = 0; u < m; ++u) {
        const auto [i, slot] = users[static_cast<std::size_t>(u)];
        codes[static_cast<std::size_t>(i)].coefficients[slot] = coeffs[u];
        residual.col(i) = updated.col(u);
      }
    }
    out.energies.push_back(static_cast<double>(detail::total_energy(residual)));
  }
  return out;
}

struct AtomMatch {
  std::vector<std::size_t> assignment;  // learned atom i -> truth atom assignment[i]
  std::vector<double> similarity;       // |cosine| of each learned atom to its match
  double mean = 0.0;
};

/// Greedy maximum-|cosine| bipartite matching: all pairs sorted descending,
/// taken while both ends are free.
inline AtomMatch match_atoms(const Eigen::MatrixXd& learned, const Eigen::MatrixXd& truth) {
  require(learned.cols() == truth.cols(), ErrorKind::kInvalidInput, "atom counts differ");
  require(learned.rows() == truth.rows(), ErrorKind::kInvalidInput, "atom dimensions differ");
  const auto n = static_cast<std::size_t>(learned.cols());
  struct Pair {
    double sim;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  pairs.reserve(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = learned.col(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < n; ++j) {
      const auto b = truth.col(static_cast<Eigen::Index>(j));
      const double denom = a.norm() * b.norm();
      pairs.push_back({denom > 0.0 ? std::abs(a.dot(b)) / denom : 0.0, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.sim != y.sim) return x.sim > y.sim;
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  AtomMatch match;
  match.assignment.assign(n, n);
  match.similarity.assign(n, 0.0);
  std::vector<bool> truth_used(n, false);
  std::size_t assigned = 0;
  for (const auto& p : pairs) {
    if (assigned == n) break;
    if (match.assignment[p.i] != n || truth_used[p.j]) continue;
    match.assignment[p.i] = p.j;
    match.similarity[p.i] = std::min(1.0, p.sim);
    truth_used[p.j] = true;
    ++assigned;
  }
  match.mean = n == 0 ? 0.0 : std::accumulate(match.similarity.begin(), match.similarity.end(), 0.0) / static_cast<double>(n);
  return match;
}

}  // namespace sketchmem
