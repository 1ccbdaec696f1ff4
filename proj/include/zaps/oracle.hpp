#pragma once

#include <Eigen/Dense>
#include <functional>
#include <utility>
#include <vector>

#include "zaps/image.hpp"
#include "zaps/operators.hpp"

// Brute-force reference computations for tests and acceptance checks.
// Nothing here is called from the solver path.
namespace zaps::oracle {

inline constexpr int kDenseSizeCap = 4096;

// Column-by-column assembly of A through its apply() on canonical basis
// vectors.
inline Eigen::MatrixXd dense_operator_matrix(const LinearOperator& A) {
    const int n = A.input_shape().size();
    const int m = A.output_shape().size();
    if (n > kDenseSizeCap || m > kDenseSizeCap)
        throw std::invalid_argument("dense oracle: operator exceeds size cap");
    Eigen::MatrixXd M(m, n);
    for (int j = 0; j < n; ++j) {
        ImageTensor e(A.input_shape());
        e.flat()[static_cast<std::size_t>(j)] = 1.0;
        const ImageTensor col = A.apply(e);
        for (int i = 0; i < m; ++i) M(i, j) = col.flat()[static_cast<std::size_t>(i)];
    }
    return M;
}

// Evaluates the two algebraically equal guidance forms
//   direct   = A^T (r^2 A A^T + sigma^2 I)^{-1} res
//   woodbury = (A^T A + eta I)^{-1} A^T res / r^2,  eta = sigma^2 / r^2
// by dense factorization.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> woodbury_both_forms(
    const Eigen::MatrixXd& A, double r_sq, double sigma_y,
    const Eigen::VectorXd& residual) {
    if (!(r_sq > 0.0)) throw std::invalid_argument("woodbury oracle: r_sq must be > 0");
    const auto m = A.rows();
    const auto n = A.cols();
    const double s2 = sigma_y * sigma_y;

    Eigen::MatrixXd outer = r_sq * (A * A.transpose());
    outer.diagonal().array() += s2;
    const Eigen::VectorXd direct = A.transpose() * outer.ldlt().solve(residual);

    const double eta = s2 / r_sq;
    Eigen::MatrixXd inner = A.transpose() * A;
    inner.diagonal().array() += eta;
    const Eigen::VectorXd woodbury =
        inner.ldlt().solve(A.transpose() * residual) / r_sq;

    (void)m;
    (void)n;
    return {direct, woodbury};
}

struct GaussianPosterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

// Conjugate posterior of x ~ N(mu0, Sigma0) under y = A x + N(0, sigma^2 I):
//   mean = mu0 + Sigma0 A^T (A Sigma0 A^T + sigma^2 I)^{-1} (y - A mu0)
//   cov  = Sigma0 - Sigma0 A^T (A Sigma0 A^T + sigma^2 I)^{-1} A Sigma0
inline GaussianPosterior gaussian_conjugate_posterior(const Eigen::VectorXd& mu0,
                                                      const Eigen::MatrixXd& Sigma0,
                                                      const Eigen::MatrixXd& A,
                                                      const Eigen::VectorXd& y,
                                                      double sigma_y) {
    if (!(sigma_y > 0.0))
        throw std::invalid_argument("conjugate posterior: sigma_y must be > 0");
    Eigen::MatrixXd S = A * Sigma0 * A.transpose();
    S.diagonal().array() += sigma_y * sigma_y;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    const Eigen::MatrixXd SA = Sigma0 * A.transpose();
    GaussianPosterior post;
    post.mean = mu0 + SA * ldlt.solve(y - A * mu0);
    post.cov = Sigma0 - SA * ldlt.solve(A * Sigma0);
    return post;
}

// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> p,
    double h) {
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double p0 = p[i];
        p[i] = p0 + h;
        const double fp = f(p);
        p[i] = p0 - h;
        const double fm = f(p);
        p[i] = p0;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace zaps::oracle
