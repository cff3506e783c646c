#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace stylelab::data {

struct KMeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centroids;  ///< k x dim
  double inertia = 0.0;
  /// Inertia after each assignment step.
  std::vector<double> history;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm from a k-means++ start. Points are rows of `x`. A cluster
/// left empty by an update is moved onto the point farthest from its centroid.
/// Stops when assignments no longer change or after max_iter assignment steps.
KMeansResult kmeans(const Eigen::MatrixXd& x, std::size_t k, std::uint64_t seed,
                    std::size_t max_iter = 100);

/// Sum of squared distances from each point to its assigned centroid.
double inertia(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
               const std::vector<int>& assignments);

}  // namespace stylelab::data
