#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "casa/math.hpp"
#include "casa/pca.hpp"

namespace casa {

// Activations of one convolutional layer: maps x elems, row-major.
struct LayerActivations {
    int layer_id = 0;
    std::size_t maps = 0;   // N_l
    std::size_t elems = 0;  // M_l, elements per vectorized map
    Vec a;                  // maps * elems

    const double* map(std::size_t i) const { return a.data() + i * elems; }
};

struct FeatureMapSet {
    std::vector<LayerActivations> layers;
};

// Normalized inner products between vectorized feature maps:
// G[i][j] = f_i . f_j / (N_l * M_l). Symmetric with non-negative diagonal.
inline Matrix gram_matrix(const LayerActivations& layer) {
    if (layer.maps < 1 || layer.elems < 1)
        throw std::invalid_argument("gram_matrix: layer must have at least one map and element");
    if (layer.a.size() != layer.maps * layer.elems)
        throw std::invalid_argument("gram_matrix: activation buffer size mismatch");
    if (!all_finite(layer.a)) throw std::invalid_argument("gram_matrix: non-finite activations");

    const double norm = 1.0 / (static_cast<double>(layer.maps) * static_cast<double>(layer.elems));
    Matrix g(layer.maps, layer.maps);
    for (std::size_t i = 0; i < layer.maps; ++i) {
        for (std::size_t j = i; j < layer.maps; ++j) {
            const double v = dot(layer.map(i), layer.map(j), layer.elems) * norm;
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

// Concatenation, in layer order, of the upper triangle (diagonal included)
// of each layer's gram matrix, row-major.
inline Vec raw_style_vector(const FeatureMapSet& fm) {
    if (fm.layers.empty()) throw std::invalid_argument("raw_style_vector: empty layer set");
    Vec out;
    std::size_t total = 0;
    for (const auto& layer : fm.layers) total += layer.maps * (layer.maps + 1) / 2;
    out.reserve(total);
    for (const auto& layer : fm.layers) {
        const Matrix g = gram_matrix(layer);
        for (std::size_t i = 0; i < g.rows; ++i)
            for (std::size_t j = i; j < g.cols; ++j) out.push_back(g(i, j));
    }
    return out;
}

// Fixed random-weight convolutional stack standing in for a pretrained style
// network: weights are drawn once from the seed and never updated.
struct StyleExtractorSpec {
    std::uint64_t seed = 0;
    std::vector<int> layer_widths{8, 16};
    int kernel_size = 3;
};

class StyleExtractor {
public:
    explicit StyleExtractor(const StyleExtractorSpec& spec) : spec_(spec) {
        if (spec.layer_widths.empty())
            throw std::invalid_argument("StyleExtractor: need at least one layer");
        if (spec.kernel_size < 1 || spec.kernel_size % 2 == 0)
            throw std::invalid_argument("StyleExtractor: kernel size must be odd and positive");
        std::mt19937_64 rng(spec.seed);
        int in_ch = 1;
        const int k2 = spec.kernel_size * spec.kernel_size;
        for (int out_ch : spec.layer_widths) {
            if (out_ch < 1) throw std::invalid_argument("StyleExtractor: layer width must be >= 1");
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_ch * k2)));
            Vec w(static_cast<std::size_t>(out_ch) * in_ch * k2);
            for (double& x : w) x = dist(rng);
            weights_.push_back(std::move(w));
            in_channels_.push_back(in_ch);
            in_ch = out_ch;
        }
    }

    const StyleExtractorSpec& spec() const { return spec_; }

    // Same-padding convolutions with clamp-at-zero nonlinearity; one
    // LayerActivations per layer, M_l = width*height throughout.
    FeatureMapSet extract(const Vec& patch, std::size_t width, std::size_t height) const {
        if (patch.size() != width * height)
            throw std::invalid_argument("StyleExtractor::extract: patch size mismatch");
        if (!all_finite(patch))
            throw std::invalid_argument("StyleExtractor::extract: non-finite patch");

        FeatureMapSet fm;
        std::vector<Vec> current{patch};
        const int k = spec_.kernel_size;
        const int r = k / 2;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            const int in_ch = in_channels_[l];
            const int out_ch = spec_.layer_widths[l];
            LayerActivations act;
            act.layer_id = static_cast<int>(l);
            act.maps = static_cast<std::size_t>(out_ch);
            act.elems = width * height;
            act.a.assign(act.maps * act.elems, 0.0);

            for (int oc = 0; oc < out_ch; ++oc) {
                double* out = act.a.data() + static_cast<std::size_t>(oc) * act.elems;
                const double* w_oc =
                    weights_[l].data() + static_cast<std::size_t>(oc) * in_ch * k * k;
                for (int ic = 0; ic < in_ch; ++ic) {
                    const double* in = current[static_cast<std::size_t>(ic)].data();
                    const double* w = w_oc + static_cast<std::size_t>(ic) * k * k;
                    for (std::size_t y = 0; y < height; ++y) {
                        for (std::size_t x = 0; x < width; ++x) {
                            double s = 0.0;
                            for (int dy = -r; dy <= r; ++dy) {
                                const long yy = static_cast<long>(y) + dy;
                                if (yy < 0 || yy >= static_cast<long>(height)) continue;
                                for (int dx = -r; dx <= r; ++dx) {
                                    const long xx = static_cast<long>(x) + dx;
                                    if (xx < 0 || xx >= static_cast<long>(width)) continue;
                                    s += w[(dy + r) * k + (dx + r)] *
                                         in[static_cast<std::size_t>(yy) * width +
                                            static_cast<std::size_t>(xx)];
                                }
                            }
                            out[y * width + x] += s;
                        }
                    }
                }
                for (std::size_t i = 0; i < act.elems; ++i)
                    if (out[i] < 0.0) out[i] = 0.0;
            }

            std::vector<Vec> next;
            next.reserve(act.maps);
            for (std::size_t m = 0; m < act.maps; ++m)
                next.emplace_back(act.map(m), act.map(m) + act.elems);
            fm.layers.push_back(std::move(act));
            current = std::move(next);
        }
        return fm;
    }

    // Total raw style vector length for this stack.
    std::size_t raw_dim() const {
        std::size_t total = 0;
        for (int w : spec_.layer_widths)
            total += static_cast<std::size_t>(w) * (w + 1) / 2;
        return total;
    }

private:
    StyleExtractorSpec spec_;
    std::vector<Vec> weights_;     // per layer: out*in*k*k
    std::vector<int> in_channels_;
};

struct StyleEmbedding {
    Vec values;
};

inline StyleEmbedding embed(const Vec& patch, std::size_t width, std::size_t height,
                            const StyleExtractor& extractor, const PcaModel& pca) {
    const Vec raw = raw_style_vector(extractor.extract(patch, width, height));
    return StyleEmbedding{pca.project(raw)};
}

}  // namespace casa
