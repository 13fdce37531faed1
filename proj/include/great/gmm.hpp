#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "great/rng.hpp"

namespace great {

/// Full-covariance Gaussian mixture.
struct Gmm {
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> means;
    std::vector<Eigen::MatrixXd> covariances;
    /// Mean log-likelihood of the training data after init and after every
    /// EM iteration.
    std::vector<double> loglik_trace;

    std::size_t dim() const { return means.empty() ? 0 : static_cast<std::size_t>(means[0].size()); }
    std::size_t size() const { return weights.size(); }
    double log_density(const Eigen::VectorXd& x) const;
    /// Mean log-density of the rows of `x`.
    double mean_log_density(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd sample(Rng& rng) const;
};

struct GmmOptions {
    std::size_t n_components = 1;
    std::size_t max_iter = 200;
    /// Stop once the mean log-likelihood improves by less than this.
    double tol = 1e-6;
    /// Lower bound on every covariance eigenvalue.
    double variance_floor = 1e-6;
};

/// EM from a k-means++ start. Rows of `x` are observations. The M-step clamps
/// covariance eigenvalues at the floor, which is the constrained maximizer, so
/// the log-likelihood never decreases. Throws EmDegenerate when there are
/// fewer rows than components or the floor is not positive.
Gmm fit_gmm(const Eigen::MatrixXd& x, const GmmOptions& options, std::uint64_t seed);

}  // namespace great
