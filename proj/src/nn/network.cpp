// SPDX-License-Identifier: Apache-2.0
#include "reft/nn/network.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace reft::nn {

namespace {

// Unfolds one C,H,W sample into a (C*k*k) x (Ho*Wo) column matrix.
template <typename T>
void im2col(const T *in, std::size_t c, std::size_t h, std::size_t w, const LayerSpec &l, std::size_t ho,
            std::size_t wo, T *col) {
    const std::size_t k = l.kernel;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                T *row = col + ((ch * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                              static_cast<std::ptrdiff_t>(l.padding);
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(l.padding);
                        const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(h) &&
                                            ix < static_cast<std::ptrdiff_t>(w);
                        row[oy * wo + ox] = inside ? in[(ch * h + static_cast<std::size_t>(iy)) * w +
                                                        static_cast<std::size_t>(ix)]
                                                   : T{0};
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T *col, std::size_t c, std::size_t h, std::size_t w, const LayerSpec &l, std::size_t ho,
            std::size_t wo, T *in) {
    const std::size_t k = l.kernel;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                const T *row = col + ((ch * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * l.stride + ky) -
                                              static_cast<std::ptrdiff_t>(l.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * l.stride + kx) -
                                                  static_cast<std::ptrdiff_t>(l.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        in[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] +=
                            row[oy * wo + ox];
                    }
                }
            }
        }
    }
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T *a, const T *b, T *c) {
    for (std::size_t i = 0; i < m; ++i) {
        T *crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T{0}) continue;
            const T *brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T *a, const T *b, T *c) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc{0};
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] += acc;
        }
    }
}

// c[m x n] += a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T *a, const T *b, T *c) {
    for (std::size_t p = 0; p < k; ++p) {
        const T *arow = a + p * m;
        const T *brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T{0}) continue;
            T *crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Shape batched(std::size_t n, const Shape &per_sample) {
    Shape s{n};
    s.insert(s.end(), per_sample.begin(), per_sample.end());
    return s;
}

} // namespace

template <typename T>
BasicNetwork<T>::BasicNetwork(Architecture arch) : arch_(std::move(arch)) {
    weight_idx_.resize(arch_.size());
    bias_idx_.resize(arch_.size());
    for (std::size_t i = 0; i < arch_.size(); ++i) {
        const auto shapes = arch_.param_shapes(i);
        if (shapes.empty()) continue;
        weight_idx_[i] = params_.size();
        params_.emplace_back(shapes[0]);
        if (shapes.size() > 1) {
            bias_idx_[i] = params_.size();
            params_.emplace_back(shapes[1]);
        }
    }
}

template <typename T>
Tensor<T> *BasicNetwork<T>::bias(std::size_t layer) {
    const auto idx = bias_idx_.at(layer);
    return idx ? &params_[*idx] : nullptr;
}

template <typename T>
const Tensor<T> *BasicNetwork<T>::bias(std::size_t layer) const {
    const auto idx = bias_idx_.at(layer);
    return idx ? &params_[*idx] : nullptr;
}

template <typename T>
void BasicNetwork<T>::init_kaiming_uniform(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < arch_.size(); ++i) {
        if (!weight_idx_[i]) continue;
        Tensor<T> &w = params_[*weight_idx_[i]];
        const std::size_t fan_in = w.size() / w.dim(0);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (auto &v : w.values()) v = static_cast<T>(dist(rng));
        if (Tensor<T> *b = bias(i)) b->fill(T{0});
    }
}

template <typename T>
std::size_t BasicNetwork<T>::param_count() const {
    std::size_t n = 0;
    for (const auto &p : params_) n += p.size();
    return n;
}

template <typename T>
Tensor<T> BasicNetwork<T>::forward(const Tensor<T> &batch) {
    Cache cache;
    Tensor<T> out = run(batch, &cache);
    cache_ = std::move(cache);
    return out;
}

template <typename T>
Tensor<T> BasicNetwork<T>::predict(const Tensor<T> &batch) const {
    return run(batch, nullptr);
}

template <typename T>
Tensor<T> BasicNetwork<T>::run(const Tensor<T> &batch, Cache *cache) const {
    const Shape &in_shape = arch_.input_shape();
    if (batch.rank() != in_shape.size() + 1 ||
        !std::equal(in_shape.begin(), in_shape.end(), batch.shape().begin() + 1)) {
        throw ShapeError("input batch " + shape_to_string(batch.shape()) + " does not match network input " +
                         shape_to_string(in_shape));
    }
    const std::size_t n = batch.dim(0);
    std::vector<Tensor<T>> values;
    values.reserve(arch_.size() + 1);
    values.push_back(batch);
    std::vector<std::vector<std::uint32_t>> argmax(arch_.size());
    std::vector<T> col;

    for (std::size_t li = 0; li < arch_.size(); ++li) {
        const LayerSpec &l = arch_.layer(li);
        const Tensor<T> &x = value(values, arch_.source(li));
        const Shape &xs = arch_.value_shape(arch_.source(li));
        const Shape &ys = arch_.value_shape(static_cast<int>(li));
        Tensor<T> y(batched(n, ys));

        switch (l.kind) {
        case LayerKind::conv2d: {
            const std::size_t c = xs[0], h = xs[1], w = xs[2];
            const std::size_t co = ys[0], ho = ys[1], wo = ys[2];
            const std::size_t kk = c * l.kernel * l.kernel, hw = ho * wo;
            col.assign(kk * hw, T{0});
            const Tensor<T> &wt = params_[*weight_idx_[li]];
            const Tensor<T> *b = bias(li);
            for (std::size_t s = 0; s < n; ++s) {
                im2col(x.data() + s * c * h * w, c, h, w, l, ho, wo, col.data());
                T *ys_ptr = y.data() + s * co * hw;
                if (b) {
                    for (std::size_t o = 0; o < co; ++o) std::fill(ys_ptr + o * hw, ys_ptr + (o + 1) * hw, (*b)[o]);
                }
                gemm_nn(co, hw, kk, wt.data(), col.data(), ys_ptr);
            }
            break;
        }
        case LayerKind::dense: {
            const std::size_t in = xs[0], out = ys[0];
            const Tensor<T> &wt = params_[*weight_idx_[li]];
            const Tensor<T> *b = bias(li);
            if (b) {
                for (std::size_t s = 0; s < n; ++s) std::copy(b->data(), b->data() + out, y.data() + s * out);
            }
            gemm_nt(n, out, in, x.data(), wt.data(), y.data());
            break;
        }
        case LayerKind::relu:
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
            break;
        case LayerKind::maxpool2d: {
            const std::size_t c = xs[0], h = xs[1], w = xs[2], ho = ys[1], wo = ys[2];
            auto &am = argmax[li];
            am.resize(y.size());
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const std::size_t base = (s * c + ch) * h * w;
                    for (std::size_t oy = 0; oy < ho; ++oy) {
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            std::size_t best = base + (oy * l.stride) * w + ox * l.stride;
                            for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                                for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                    const std::size_t idx = base + (oy * l.stride + ky) * w + ox * l.stride + kx;
                                    if (x[idx] > x[best]) best = idx;
                                }
                            }
                            const std::size_t oi = ((s * c + ch) * ho + oy) * wo + ox;
                            y[oi] = x[best];
                            am[oi] = static_cast<std::uint32_t>(best);
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::global_avg_pool: {
            const std::size_t c = xs[0], hw = xs[1] * xs[2];
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T *p = x.data() + (s * c + ch) * hw;
                    T acc{0};
                    for (std::size_t i = 0; i < hw; ++i) acc += p[i];
                    y[s * c + ch] = acc / static_cast<T>(hw);
                }
            }
            break;
        }
        case LayerKind::flatten:
            std::copy(x.data(), x.data() + x.size(), y.data());
            break;
        case LayerKind::residual_add: {
            const Tensor<T> &other = value(values, l.skip);
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + other[i];
            break;
        }
        }
        values.push_back(std::move(y));
    }

    Tensor<T> out = values.back();
    if (cache) {
        cache->values = std::move(values);
        cache->argmax = std::move(argmax);
    }
    return out;
}

template <typename T>
ParamList<T> BasicNetwork<T>::backward(const Tensor<T> &logits_grad) {
    if (!cache_) throw Error("backward called before forward");
    const auto &values = cache_->values;
    const std::size_t n = values.front().dim(0);
    if (logits_grad.shape() != values.back().shape()) {
        throw ShapeError("logits gradient " + shape_to_string(logits_grad.shape()) + " does not match logits " +
                         shape_to_string(values.back().shape()));
    }

    ParamList<T> grads;
    grads.reserve(params_.size());
    for (const auto &p : params_) grads.emplace_back(p.shape());

    // Gradients w.r.t. every value; index mirrors Cache::values.
    std::vector<Tensor<T>> dvalues(values.size());
    dvalues.back() = logits_grad;
    auto dvalue = [&](int node) -> Tensor<T> & {
        const std::size_t idx = node == kNetworkInput ? 0 : static_cast<std::size_t>(node + 1);
        if (dvalues[idx].empty()) dvalues[idx] = Tensor<T>(values[idx].shape());
        return dvalues[idx];
    };
    std::vector<T> col, dcol;

    for (std::size_t li = arch_.size(); li-- > 0;) {
        Tensor<T> &dy = dvalues[li + 1];
        if (dy.empty()) continue; // output unused downstream
        const LayerSpec &l = arch_.layer(li);
        const int src = arch_.source(li);
        const Tensor<T> &x = value(values, src);
        const Shape &xs = arch_.value_shape(src);
        const Shape &ys = arch_.value_shape(static_cast<int>(li));

        switch (l.kind) {
        case LayerKind::conv2d: {
            Tensor<T> &dx = dvalue(src);
            const std::size_t c = xs[0], h = xs[1], w = xs[2];
            const std::size_t co = ys[0], ho = ys[1], wo = ys[2];
            const std::size_t kk = c * l.kernel * l.kernel, hw = ho * wo;
            const Tensor<T> &wt = params_[*weight_idx_[li]];
            Tensor<T> &dw = grads[*weight_idx_[li]];
            col.assign(kk * hw, T{0});
            dcol.assign(kk * hw, T{0});
            for (std::size_t s = 0; s < n; ++s) {
                const T *g = dy.data() + s * co * hw;
                im2col(x.data() + s * c * h * w, c, h, w, l, ho, wo, col.data());
                gemm_nt(co, kk, hw, g, col.data(), dw.data());
                if (bias_idx_[li]) {
                    Tensor<T> &db = grads[*bias_idx_[li]];
                    for (std::size_t o = 0; o < co; ++o) {
                        T acc{0};
                        for (std::size_t i = 0; i < hw; ++i) acc += g[o * hw + i];
                        db[o] += acc;
                    }
                }
                std::fill(dcol.begin(), dcol.end(), T{0});
                gemm_tn(kk, hw, co, wt.data(), g, dcol.data());
                col2im(dcol.data(), c, h, w, l, ho, wo, dx.data() + s * c * h * w);
            }
            break;
        }
        case LayerKind::dense: {
            Tensor<T> &dx = dvalue(src);
            const std::size_t in = xs[0], out = ys[0];
            const Tensor<T> &wt = params_[*weight_idx_[li]];
            gemm_tn(out, in, n, dy.data(), x.data(), grads[*weight_idx_[li]].data());
            if (bias_idx_[li]) {
                Tensor<T> &db = grads[*bias_idx_[li]];
                for (std::size_t s = 0; s < n; ++s) {
                    for (std::size_t o = 0; o < out; ++o) db[o] += dy[s * out + o];
                }
            }
            gemm_nn(n, in, out, dy.data(), wt.data(), dx.data());
            break;
        }
        case LayerKind::relu: {
            Tensor<T> &dx = dvalue(src);
            for (std::size_t i = 0; i < dy.size(); ++i) {
                if (x[i] > T{0}) dx[i] += dy[i];
            }
            break;
        }
        case LayerKind::maxpool2d: {
            Tensor<T> &dx = dvalue(src);
            const auto &am = cache_->argmax[li];
            for (std::size_t i = 0; i < dy.size(); ++i) dx[am[i]] += dy[i];
            break;
        }
        case LayerKind::global_avg_pool: {
            Tensor<T> &dx = dvalue(src);
            const std::size_t c = xs[0], hw = xs[1] * xs[2];
            for (std::size_t s = 0; s < n; ++s) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const T g = dy[s * c + ch] / static_cast<T>(hw);
                    T *p = dx.data() + (s * c + ch) * hw;
                    for (std::size_t i = 0; i < hw; ++i) p[i] += g;
                }
            }
            break;
        }
        case LayerKind::flatten: {
            Tensor<T> &dx = dvalue(src);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
            break;
        }
        case LayerKind::residual_add: {
            // Copy first: both operands may alias the same value.
            const Tensor<T> g = dy;
            Tensor<T> &da = dvalue(src);
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            Tensor<T> &db = dvalue(l.skip);
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
            break;
        }
        }
    }
    cache_.reset();
    return grads;
}

template class BasicNetwork<float>;
template class BasicNetwork<double>;

} // namespace reft::nn
