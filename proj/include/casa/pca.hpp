#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "casa/math.hpp"

namespace casa {

// Principal component model fitted once on the base set; immutable afterwards.
// Components are stored as rows (e x d, mutually orthonormal), eigenvalue
// order is non-increasing with ties broken by original coordinate index.
class PcaModel {
public:
    PcaModel() = default;
    PcaModel(Vec mean, Matrix components, Vec variances)
        : mean_(std::move(mean)),
          components_(std::move(components)),
          variances_(std::move(variances)) {}

    std::size_t input_dim() const { return mean_.size(); }
    std::size_t output_dim() const { return components_.rows; }
    const Vec& mean() const { return mean_; }
    const Matrix& components() const { return components_; }
    const Vec& explained_variance() const { return variances_; }

    Vec project(const Vec& x) const {
        if (x.size() != mean_.size())
            throw std::invalid_argument("PcaModel::project: input has dimension " +
                                        std::to_string(x.size()) + ", model expects " +
                                        std::to_string(mean_.size()));
        Vec centered(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - mean_[i];
        Vec out(components_.rows, 0.0);
        for (std::size_t r = 0; r < components_.rows; ++r)
            out[r] = dot(components_.row(r), centered.data(), centered.size());
        return out;
    }

    // Maps a projection back into input space (mean + C^T y).
    Vec reconstruct(const Vec& y) const {
        if (y.size() != components_.rows)
            throw std::invalid_argument("PcaModel::reconstruct: dimension mismatch");
        Vec out = mean_;
        for (std::size_t r = 0; r < components_.rows; ++r)
            for (std::size_t c = 0; c < components_.cols; ++c)
                out[c] += y[r] * components_(r, c);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["mean"] = mean_;
        j["components"] = components_.data;  // row-major, e x d
        j["output_dim"] = components_.rows;
        j["input_dim"] = components_.cols;
        j["explained_variance"] = variances_;
        return j;
    }

    static PcaModel from_json(const nlohmann::json& j) {
        Matrix comp(j.at("output_dim").get<std::size_t>(), j.at("input_dim").get<std::size_t>());
        comp.data = j.at("components").get<Vec>();
        if (comp.data.size() != comp.rows * comp.cols)
            throw std::invalid_argument("PcaModel::from_json: component size mismatch");
        return PcaModel(j.at("mean").get<Vec>(), std::move(comp),
                        j.at("explained_variance").get<Vec>());
    }

private:
    Vec mean_;
    Matrix components_;
    Vec variances_;
};

// Fits a PCA of output dimension e by eigendecomposition of the sample
// covariance. Requires at least e+1 vectors and non-degenerate data.
inline PcaModel fit_pca(const std::vector<Vec>& vectors, std::size_t e) {
    if (e == 0) throw std::invalid_argument("fit_pca: output dimension must be >= 1");
    if (vectors.size() < e + 1)
        throw std::invalid_argument("fit_pca: need at least e+1 = " + std::to_string(e + 1) +
                                    " vectors, got " + std::to_string(vectors.size()));
    const std::size_t d = vectors.front().size();
    if (d < e) throw std::invalid_argument("fit_pca: input dimension smaller than e");
    for (const Vec& v : vectors) {
        if (v.size() != d) throw std::invalid_argument("fit_pca: vectors of unequal length");
        if (!all_finite(v)) throw std::invalid_argument("fit_pca: non-finite input");
    }

    Vec mean(d, 0.0);
    for (const Vec& v : vectors)
        for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
    for (double& m : mean) m /= static_cast<double>(vectors.size());

    Matrix cov(d, d, 0.0);
    for (const Vec& v : vectors) {
        Vec c(d);
        for (std::size_t i = 0; i < d; ++i) c[i] = v[i] - mean[i];
        for (std::size_t i = 0; i < d; ++i) {
            if (c[i] == 0.0) continue;
            for (std::size_t j = i; j < d; ++j) cov(i, j) += c[i] * c[j];
        }
    }
    const double denom = static_cast<double>(vectors.size() - 1);
    double total_var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
            cov(i, j) /= denom;
            cov(j, i) = cov(i, j);
        }
        total_var += cov(i, i);
    }
    if (total_var <= 1e-300)
        throw std::invalid_argument("fit_pca: degenerate input with zero variance");

    EigenDecomposition eig = jacobi_eigensymm(cov);

    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return eig.values[a] > eig.values[b];
    });

    Matrix components(e, d);
    Vec variances(e);
    for (std::size_t r = 0; r < e; ++r) {
        const std::size_t k = order[r];
        variances[r] = std::max(0.0, eig.values[k]);
        // canonical sign: largest-magnitude coordinate positive
        std::size_t arg = 0;
        double best = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double m = std::abs(eig.vectors(i, k));
            if (m > best) {
                best = m;
                arg = i;
            }
        }
        const double sign = (eig.vectors(arg, k) < 0.0) ? -1.0 : 1.0;
        for (std::size_t i = 0; i < d; ++i) components(r, i) = sign * eig.vectors(i, k);
    }
    return PcaModel(std::move(mean), std::move(components), std::move(variances));
}

}  // namespace casa
