#include "stylelab/kmeans.hpp"

#include <limits>

#include "stylelab/errors.hpp"
#include "stylelab/rng.hpp"

namespace stylelab::data {

namespace {

Eigen::MatrixXd plus_plus_init(const Eigen::MatrixXd& x, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd c(static_cast<Eigen::Index>(k), x.cols());
  std::vector<bool> taken(n, false);
  std::size_t first = rng.index(n);
  c.row(0) = x.row(static_cast<Eigen::Index>(first));
  taken[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = (x.row(static_cast<Eigen::Index>(i)) - c.row(0)).squaredNorm();
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += taken[i] ? 0.0 : d2[i];
    std::size_t pick = 0;
    if (total > 0.0) {
      std::vector<double> w(n);
      for (std::size_t i = 0; i < n; ++i) w[i] = taken[i] ? 0.0 : d2[i];
      pick = rng.categorical(w);
    } else {
      // every remaining point coincides with a centre
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i)
        if (!taken[i]) free.push_back(i);
      pick = free[rng.index(free.size())];
    }
    taken[pick] = true;
    c.row(static_cast<Eigen::Index>(m)) = x.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (x.row(static_cast<Eigen::Index>(i)) -
                               c.row(static_cast<Eigen::Index>(m))).squaredNorm());
    }
  }
  return c;
}

// Returns true when any assignment changed.
bool assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c, std::vector<int>& a) {
  bool changed = false;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < c.rows(); ++j) {
      const double d = (x.row(i) - c.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(j);
      }
    }
    if (a[static_cast<std::size_t>(i)] != best) {
      a[static_cast<std::size_t>(i)] = best;
      changed = true;
    }
  }
  return changed;
}

void update(const Eigen::MatrixXd& x, Eigen::MatrixXd& c, const std::vector<int>& a) {
  const Eigen::Index k = c.rows();
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int j = a[static_cast<std::size_t>(i)];
    sums.row(j) += x.row(i);
    ++counts[static_cast<std::size_t>(j)];
  }
  std::vector<bool> used(static_cast<std::size_t>(x.rows()), false);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) {
      c.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
    }
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    if (counts[static_cast<std::size_t>(j)] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = (x.row(i) - c.row(a[static_cast<std::size_t>(i)])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    used[static_cast<std::size_t>(far)] = true;
    c.row(j) = x.row(far);
  }
}

}  // namespace

double inertia(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
               const std::vector<int>& assignments) {
  if (assignments.size() != static_cast<std::size_t>(x.rows())) {
    throw ShapeError("assignments do not cover the points");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    total += (x.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return total;
}

KMeansResult kmeans(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter) {
  const auto n = static_cast<std::size_t>(x.rows());
  if (k == 0) throw ConfigError("k-means needs k >= 1");
  if (k > n) {
    throw ConfigError("k-means with k=" + std::to_string(k) + " over " + std::to_string(n) +
                      " points");
  }
  if (max_iter == 0) throw ConfigError("k-means needs max_iter >= 1");
  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_init(x, k, rng);
  r.assignments.assign(n, -1);
  for (std::size_t it = 0; it < max_iter; ++it) {
    const bool changed = assign(x, r.centroids, r.assignments);
    r.history.push_back(inertia(x, r.centroids, r.assignments));
    r.iterations = it + 1;
    if (!changed && it > 0) break;
    update(x, r.centroids, r.assignments);
  }
  r.inertia = inertia(x, r.centroids, r.assignments);
  return r;
}

}  // namespace stylelab::data
