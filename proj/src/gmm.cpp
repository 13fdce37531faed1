#include "great/gmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <numbers>

#include "great/error.hpp"

namespace great {

namespace {

struct Factor {
    Eigen::MatrixXd l;  // lower Cholesky factor
    double log_norm = 0.0;
};

Factor factorize(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::EmDegenerate, "covariance is not positive definite");
    Factor f;
    f.l = llt.matrixL();
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < f.l.rows(); ++i) logdet += 2.0 * std::log(f.l(i, i));
    f.log_norm = -0.5 * (static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi) + logdet);
    return f;
}

double component_log_density(const Factor& f, const Eigen::VectorXd& mean, const Eigen::VectorXd& x) {
    const Eigen::VectorXd z = f.l.triangularView<Eigen::Lower>().solve(x - mean);
    return f.log_norm - 0.5 * z.squaredNorm();
}

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((v.array() - m).exp().sum());
}

Eigen::MatrixXd clamp_eigenvalues(const Eigen::MatrixXd& s, double floor) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
    if (eig.eigenvalues().minCoeff() >= floor) return s;
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(floor);
    return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

// Log of weight_k * N(x_i | k) for every row and component.
Eigen::MatrixXd joint_log(const Gmm& g, const Eigen::MatrixXd& x) {
    const auto n = x.rows();
    const auto k = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd out(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        if (g.weights[ci] <= 0.0) {
            out.col(c).setConstant(-std::numeric_limits<double>::infinity());
            continue;
        }
        const Factor f = factorize(g.covariances[ci]);
        const double lw = std::log(g.weights[ci]);
        for (Eigen::Index i = 0; i < n; ++i)
            out(i, c) = lw + component_log_density(f, g.means[ci], x.row(i).transpose());
    }
    return out;
}

Eigen::MatrixXd scatter(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, const Eigen::VectorXd& mean, double total) {
    const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
    return (centered.transpose() * w.asDiagonal() * centered) / total;
}

}  // namespace

double Gmm::log_density(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd row = x.transpose();
    return log_sum_exp(joint_log(*this, row).row(0).transpose());
}

double Gmm::mean_log_density(const Eigen::MatrixXd& x) const {
    const Eigen::MatrixXd jl = joint_log(*this, x);
    double total = 0.0;
    for (Eigen::Index i = 0; i < jl.rows(); ++i) total += log_sum_exp(jl.row(i).transpose());
    return total / static_cast<double>(x.rows());
}

Eigen::VectorXd Gmm::sample(Rng& rng) const {
    const auto c = rng.categorical(weights);
    Eigen::LLT<Eigen::MatrixXd> llt(covariances[c]);
    Eigen::VectorXd z(means[c].size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return means[c] + llt.matrixL() * z;
}

Gmm fit_gmm(const Eigen::MatrixXd& x, const GmmOptions& options, std::uint64_t seed) {
    const auto n = x.rows();
    const auto k = static_cast<Eigen::Index>(options.n_components);
    if (k < 1 || n < k) throw Error(ErrorCode::EmDegenerate, "need at least as many rows as mixture components");
    if (!(options.variance_floor > 0.0)) throw Error(ErrorCode::EmDegenerate, "variance floor must be positive");
    if (!x.allFinite()) throw Error(ErrorCode::EmDegenerate, "non-finite observation");

    // k-means++ seeding followed by one hard assignment.
    Rng rng(seed);
    std::vector<Eigen::Index> centers{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)))};
    Eigen::VectorXd dist2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
    while (static_cast<Eigen::Index>(centers.size()) < k) {
        const double total = dist2.sum();
        const Eigen::Index next = total > 0.0 ? static_cast<Eigen::Index>(rng.categorical(dist2))
                                              : static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
        centers.push_back(next);
        dist2 = dist2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
    }
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < k; ++c) {
            const double dd = (x.row(i) - x.row(centers[static_cast<std::size_t>(c)])).squaredNorm();
            if (dd < best_d) best_d = dd, best = c;
        }
        resp(i, best) = 1.0;
    }

    const Eigen::VectorXd global_mean = x.colwise().mean().transpose();
    const Eigen::MatrixXd global_cov =
        clamp_eigenvalues(scatter(x, Eigen::VectorXd::Ones(n), global_mean, static_cast<double>(n)),
                          options.variance_floor);

    Gmm g;
    g.weights.assign(static_cast<std::size_t>(k), 0.0);
    g.means.assign(static_cast<std::size_t>(k), global_mean);
    g.covariances.assign(static_cast<std::size_t>(k), global_cov);

    auto m_step = [&](bool init) {
        for (Eigen::Index c = 0; c < k; ++c) {
            const auto ci = static_cast<std::size_t>(c);
            const double nk = resp.col(c).sum();
            g.weights[ci] = nk / static_cast<double>(n);
            // An empty component keeps its previous parameters; its weight is zero.
            if (nk <= 1e-12 * static_cast<double>(n)) continue;
            g.means[ci] = (x.transpose() * resp.col(c)) / nk;
            if (init && nk < 2.0) continue;
            g.covariances[ci] = clamp_eigenvalues(scatter(x, resp.col(c), g.means[ci], nk), options.variance_floor);
        }
    };
    m_step(true);

    double prev = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0;; ++iter) {
        const Eigen::MatrixXd jl = joint_log(g, x);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double lse = log_sum_exp(jl.row(i).transpose());
            ll += lse;
            resp.row(i) = (jl.row(i).array() - lse).exp();
        }
        ll /= static_cast<double>(n);
        if (!std::isfinite(ll)) throw Error(ErrorCode::EmDegenerate, "log-likelihood is not finite");
        g.loglik_trace.push_back(ll);
        if (iter >= options.max_iter || ll - prev < options.tol) break;
        prev = ll;
        m_step(false);
    }
    return g;
}

}  // namespace great
