#include "btfstream/btf.hpp"

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "btfstream/errors.hpp"

namespace btfstream {

namespace {

using Matrix = Eigen::MatrixXd;

// Small side up to this uses a dense decomposition; above it a seeded
// randomized subspace iteration with power steps keeps runtime bounded on
// measured-scale matrices (their spectra decay fast, which is what the
// method needs).
constexpr uint32_t kDenseLimit = 384;

void dense_svd(const Matrix& a, uint32_t k, Matrix& u, Matrix& sv) {
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU().leftCols(k);
    sv = svd.singularValues().head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

void randomized_svd(const Matrix& a, uint32_t k, Matrix& u, Matrix& sv) {
    const uint32_t oversample = 8;
    const uint32_t power_steps = 6;
    uint32_t small = uint32_t(std::min(a.rows(), a.cols()));
    uint32_t width = std::min(k + oversample, small);

    std::mt19937_64 rng(0x5a17ed0c1ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix omega(a.cols(), width);
    for (Eigen::Index j = 0; j < omega.cols(); ++j)
        for (Eigen::Index i = 0; i < omega.rows(); ++i)
            omega(i, j) = gauss(rng);

    Matrix q = Eigen::HouseholderQR<Matrix>(a * omega).householderQ() * Matrix::Identity(a.rows(), width);
    for (uint32_t step = 0; step < power_steps; ++step) {
        Matrix z = Eigen::HouseholderQR<Matrix>(a.transpose() * q).householderQ() *
                   Matrix::Identity(a.cols(), width);
        q = Eigen::HouseholderQR<Matrix>(a * z).householderQ() * Matrix::Identity(a.rows(), width);
    }

    Matrix b = q.transpose() * a;
    Eigen::BDCSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = q * svd.matrixU().leftCols(k);
    sv = svd.singularValues().head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
}

} // namespace

void truncated_svd(const std::vector<float>& matrix, uint32_t rows, uint32_t cols, uint32_t k,
                   std::vector<float>& angular_out, std::vector<float>& spatial_out) {
    if (k == 0 || k > std::min(rows, cols))
        throw ValidationError("invalid rank for truncated SVD");
    Matrix a(rows, cols);
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < cols; ++c) {
            float v = matrix[size_t(r) * cols + c];
            if (!std::isfinite(v))
                throw ValidationError("non-finite entry in SVD input");
            a(r, c) = v;
        }

    Matrix u, sv;
    if (std::min(rows, cols) <= kDenseLimit)
        dense_svd(a, k, u, sv);
    else
        randomized_svd(a, k, u, sv);

    // Sign normalization: largest-magnitude entry of each angular column
    // positive, compensated in the matching spatial row.
    for (uint32_t c = 0; c < k; ++c) {
        Eigen::Index imax = 0;
        u.col(c).cwiseAbs().maxCoeff(&imax);
        if (u(imax, c) < 0.0) {
            u.col(c) = -u.col(c);
            sv.row(c) = -sv.row(c);
        }
    }

    angular_out.resize(size_t(rows) * k);
    for (uint32_t r = 0; r < rows; ++r)
        for (uint32_t c = 0; c < k; ++c)
            angular_out[size_t(r) * k + c] = float(u(r, c));
    spatial_out.resize(size_t(k) * cols);
    for (uint32_t c = 0; c < k; ++c)
        for (uint32_t p = 0; p < cols; ++p)
            spatial_out[size_t(c) * cols + p] = float(sv(c, p));
}

} // namespace btfstream
