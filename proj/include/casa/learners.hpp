#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <vector>

#include "casa/domains.hpp"
#include "casa/math.hpp"

namespace casa {

struct TrainExample {
    const Vec* x = nullptr;
    double y = 0.0;
};

// Task-module contract. predict/metric/uncertainty leave the model untouched;
// train_step is the only mutator. Parameter snapshots support checkpointed
// evaluation.
class Learner {
public:
    virtual ~Learner() = default;

    virtual TaskKind kind() const = 0;
    virtual void train_step(const std::vector<TrainExample>& batch) = 0;
    virtual Vec predict(const Vec& x) const = 0;
    virtual double metric(const Vec& prediction, double label) const = 0;
    virtual double batch_loss(const std::vector<TrainExample>& batch) const = 0;
    virtual double uncertainty(const Vec& x, std::mt19937_64& rng) const = 0;
    virtual Vec snapshot() const = 0;
    virtual void restore(const Vec& params) = 0;
    virtual std::unique_ptr<Learner> clone() const = 0;
};

namespace detail {

inline void check_batch(const std::vector<TrainExample>& batch, std::size_t dim) {
    if (batch.empty()) throw std::invalid_argument("train batch is empty");
    for (const auto& ex : batch) {
        if (!ex.x) throw std::invalid_argument("train batch holds a null feature pointer");
        if (ex.x->size() != dim)
            throw std::invalid_argument("feature dimension mismatch: got " +
                                        std::to_string(ex.x->size()) + ", expected " +
                                        std::to_string(dim));
    }
}

inline Vec masked(const Vec& x, double p_drop, std::mt19937_64& rng) {
    if (p_drop <= 0.0) return x;
    Vec out(x.size());
    std::bernoulli_distribution drop(p_drop);
    const double scale = 1.0 / (1.0 - p_drop);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = drop(rng) ? 0.0 : x[i] * scale;
    return out;
}

}  // namespace detail

// Linear softmax classifier trained with SGD on the mean cross-entropy.
class SgdClassifier final : public Learner {
public:
    SgdClassifier(std::size_t features, std::size_t classes, double learning_rate,
                  std::uint64_t seed, int mc_passes = 10, double p_drop = 0.25)
        : features_(features),
          classes_(classes),
          lr_(learning_rate),
          mc_passes_(mc_passes),
          p_drop_(p_drop),
          w_(classes * features, 0.0),
          b_(classes, 0.0) {
        if (classes < 2) throw std::invalid_argument("SgdClassifier: need >= 2 classes");
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> init(0.0, 0.01);
        for (double& v : w_) v = init(rng);
    }

    TaskKind kind() const override { return TaskKind::classification; }
    std::size_t classes() const { return classes_; }
    std::size_t features() const { return features_; }

    Vec predict(const Vec& x) const override { return softmax(logits(x)); }

    // 1.0 on an argmax hit, else 0.0
    double metric(const Vec& prediction, double label) const override {
        const auto arg = std::max_element(prediction.begin(), prediction.end());
        const auto cls = static_cast<std::size_t>(arg - prediction.begin());
        return cls == static_cast<std::size_t>(label) ? 1.0 : 0.0;
    }

    double batch_loss(const std::vector<TrainExample>& batch) const override {
        detail::check_batch(batch, features_);
        double loss = 0.0;
        for (const auto& ex : batch) {
            const Vec p = softmax(logits(*ex.x));
            const auto y = static_cast<std::size_t>(ex.y);
            if (y >= classes_) throw std::invalid_argument("class label out of range");
            loss += -std::log(std::max(p[y], 1e-300));
        }
        return loss / static_cast<double>(batch.size());
    }

    void train_step(const std::vector<TrainExample>& batch) override {
        detail::check_batch(batch, features_);
        Vec gw(w_.size(), 0.0);
        Vec gb(b_.size(), 0.0);
        const double inv_n = 1.0 / static_cast<double>(batch.size());
        for (const auto& ex : batch) {
            const Vec p = softmax(logits(*ex.x));
            const auto y = static_cast<std::size_t>(ex.y);
            if (y >= classes_) throw std::invalid_argument("class label out of range");
            for (std::size_t c = 0; c < classes_; ++c) {
                const double g = (p[c] - (c == y ? 1.0 : 0.0)) * inv_n;
                gb[c] += g;
                const Vec& x = *ex.x;
                double* gw_c = gw.data() + c * features_;
                for (std::size_t f = 0; f < features_; ++f) gw_c[f] += g * x[f];
            }
        }
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= lr_ * gw[i];
        for (std::size_t i = 0; i < b_.size(); ++i) b_[i] -= lr_ * gb[i];
    }

    // Predictive entropy of the mean class distribution over mc_passes
    // feature-masked forward passes.
    double uncertainty(const Vec& x, std::mt19937_64& rng) const override {
        if (mc_passes_ < 2) throw std::invalid_argument("uncertainty: K must be >= 2");
        Vec mean_p(classes_, 0.0);
        for (int k = 0; k < mc_passes_; ++k) {
            const Vec p = softmax(logits(detail::masked(x, p_drop_, rng)));
            for (std::size_t c = 0; c < classes_; ++c) mean_p[c] += p[c];
        }
        double h = 0.0;
        for (double p : mean_p) {
            p /= static_cast<double>(mc_passes_);
            if (p > 0.0) h -= p * std::log(p);
        }
        return h;
    }

    Vec snapshot() const override {
        Vec s = w_;
        s.insert(s.end(), b_.begin(), b_.end());
        return s;
    }

    void restore(const Vec& params) override {
        if (params.size() != w_.size() + b_.size())
            throw std::invalid_argument("SgdClassifier::restore: parameter size mismatch");
        std::copy(params.begin(), params.begin() + static_cast<long>(w_.size()), w_.begin());
        std::copy(params.begin() + static_cast<long>(w_.size()), params.end(), b_.begin());
    }

    std::unique_ptr<Learner> clone() const override {
        return std::make_unique<SgdClassifier>(*this);
    }

private:
    Vec logits(const Vec& x) const {
        if (x.size() != features_)
            throw std::invalid_argument("SgdClassifier: feature dimension mismatch");
        Vec z(classes_);
        for (std::size_t c = 0; c < classes_; ++c)
            z[c] = dot(w_.data() + c * features_, x.data(), features_) + b_[c];
        return z;
    }

    static Vec softmax(Vec z) {
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double& v : z) {
            v = std::exp(v - m);
            sum += v;
        }
        for (double& v : z) v /= sum;
        return z;
    }

    std::size_t features_;
    std::size_t classes_;
    double lr_;
    int mc_passes_;
    double p_drop_;
    Vec w_;  // classes x features, row-major
    Vec b_;
};

// Linear regressor trained with SGD on the mean squared error.
class SgdRegressor final : public Learner {
public:
    SgdRegressor(std::size_t features, double learning_rate, std::uint64_t seed,
                 int mc_passes = 10, double p_drop = 0.25)
        : features_(features),
          lr_(learning_rate),
          mc_passes_(mc_passes),
          p_drop_(p_drop),
          w_(features, 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> init(0.0, 0.01);
        for (double& v : w_) v = init(rng);
    }

    TaskKind kind() const override { return TaskKind::regression; }
    std::size_t features() const { return features_; }

    Vec predict(const Vec& x) const override { return Vec{value(x)}; }

    // absolute error
    double metric(const Vec& prediction, double label) const override {
        return std::abs(prediction.at(0) - label);
    }

    double batch_loss(const std::vector<TrainExample>& batch) const override {
        detail::check_batch(batch, features_);
        double loss = 0.0;
        for (const auto& ex : batch) {
            const double r = value(*ex.x) - ex.y;
            loss += r * r;
        }
        return loss / static_cast<double>(batch.size());
    }

    void train_step(const std::vector<TrainExample>& batch) override {
        detail::check_batch(batch, features_);
        Vec gw(w_.size(), 0.0);
        double gb = 0.0;
        const double inv_n = 1.0 / static_cast<double>(batch.size());
        for (const auto& ex : batch) {
            const double g = 2.0 * (value(*ex.x) - ex.y) * inv_n;
            gb += g;
            const Vec& x = *ex.x;
            for (std::size_t f = 0; f < features_; ++f) gw[f] += g * x[f];
        }
        for (std::size_t i = 0; i < w_.size(); ++i) w_[i] -= lr_ * gw[i];
        b_ -= lr_ * gb;
    }

    // standard deviation of the masked forward passes
    double uncertainty(const Vec& x, std::mt19937_64& rng) const override {
        if (mc_passes_ < 2) throw std::invalid_argument("uncertainty: K must be >= 2");
        Vec preds(static_cast<std::size_t>(mc_passes_));
        for (auto& p : preds) p = value(detail::masked(x, p_drop_, rng));
        const double m = mean(preds);
        double var = 0.0;
        for (double p : preds) var += (p - m) * (p - m);
        return std::sqrt(var / static_cast<double>(mc_passes_));
    }

    Vec snapshot() const override {
        Vec s = w_;
        s.push_back(b_);
        return s;
    }

    void restore(const Vec& params) override {
        if (params.size() != w_.size() + 1)
            throw std::invalid_argument("SgdRegressor::restore: parameter size mismatch");
        std::copy(params.begin(), params.end() - 1, w_.begin());
        b_ = params.back();
    }

    std::unique_ptr<Learner> clone() const override {
        return std::make_unique<SgdRegressor>(*this);
    }

private:
    double value(const Vec& x) const {
        if (x.size() != features_)
            throw std::invalid_argument("SgdRegressor: feature dimension mismatch");
        return dot(w_.data(), x.data(), features_) + b_;
    }

    std::size_t features_;
    double lr_;
    int mc_passes_;
    double p_drop_;
    Vec w_;
    double b_ = 0.0;
};

// Conventional epoch-based training on a static labelled set; base-set labels
// cost no budget.
inline void base_train(Learner& learner, const std::vector<TrainExample>& labelled,
                       int epochs, std::size_t batch_size, std::mt19937_64& rng) {
    if (labelled.empty()) throw std::invalid_argument("base_train: empty labelled set");
    if (batch_size < 1) throw std::invalid_argument("base_train: batch size must be >= 1");
    std::vector<std::size_t> order(labelled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int ep = 0; ep < epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            std::vector<TrainExample> batch;
            const std::size_t end = std::min(order.size(), start + batch_size);
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(labelled[order[i]]);
            learner.train_step(batch);
        }
    }
}

}  // namespace casa
