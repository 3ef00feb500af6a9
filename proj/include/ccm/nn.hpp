#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ccm/errors.hpp"
#include "ccm/rng.hpp"

namespace ccm {

inline bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

/// Fully connected net, tanh hidden layers, linear output. Parameters live
/// in one flat vector (per layer: row-major weights, then biases) so the
/// optimizer and checkpoints can treat them uniformly.
class FeedforwardNet {
public:
    FeedforwardNet() = default;
    FeedforwardNet(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
        if (sizes_.size() < 2) throw ShapeError("net needs at least two layers");
        std::size_t count = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
            count += static_cast<std::size_t>(sizes_[l + 1]) * sizes_[l] + sizes_[l + 1];
        params_.resize(count);
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (int i = 0; i < fan_out * fan_in; ++i)
                params_[off + i] = rng.uniform(-limit, limit);
            off += static_cast<std::size_t>(fan_out) * fan_in;
            for (int i = 0; i < fan_out; ++i) params_[off + i] = 0.0;
            off += fan_out;
        }
    }

    const std::vector<int>& sizes() const { return sizes_; }
    int input_size() const { return sizes_.front(); }
    int output_size() const { return sizes_.back(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::vector<double> forward(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != sizes_.front())
            throw ShapeError("input size " + std::to_string(x.size()) +
                             " does not match net input " +
                             std::to_string(sizes_.front()));
        acts_.assign(1, std::vector<double>(x.begin(), x.end()));
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            const int in = sizes_[l], out = sizes_[l + 1];
            std::vector<double> z(out);
            for (int i = 0; i < out; ++i) {
                double s = params_[off + static_cast<std::size_t>(out) * in + i];
                const double* w = &params_[off + static_cast<std::size_t>(i) * in];
                const auto& a = acts_.back();
                for (int j = 0; j < in; ++j) s += w[j] * a[j];
                z[i] = s;
            }
            off += static_cast<std::size_t>(out) * in + out;
            if (l + 2 < sizes_.size())
                for (double& v : z) v = std::tanh(v);
            acts_.push_back(std::move(z));
        }
        return acts_.back();
    }

    /// Backprop through the activations cached by the last forward call.
    /// Accumulates parameter gradients into `grad` (same layout as params)
    /// and returns the gradient w.r.t. the input.
    std::vector<double> backward(std::span<const double> dy,
                                 std::vector<double>& grad) const {
        if (acts_.size() != sizes_.size())
            throw ShapeError("backward without a preceding forward");
        if (static_cast<int>(dy.size()) != sizes_.back())
            throw ShapeError("output gradient size mismatch");
        if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);

        std::vector<double> delta(dy.begin(), dy.end());
        std::size_t off = params_.size();
        for (std::size_t l = sizes_.size() - 1; l-- > 0;) {
            const int in = sizes_[l], out = sizes_[l + 1];
            off -= static_cast<std::size_t>(out) * in + out;
            // delta currently holds dL/dz of layer l+1 (post-activation handled below)
            const auto& a = acts_[l];
            for (int i = 0; i < out; ++i) {
                grad[off + static_cast<std::size_t>(out) * in + i] += delta[i];
                double* gw = &grad[off + static_cast<std::size_t>(i) * in];
                for (int j = 0; j < in; ++j) gw[j] += delta[i] * a[j];
            }
            std::vector<double> prev(in, 0.0);
            for (int j = 0; j < in; ++j) {
                double s = 0.0;
                for (int i = 0; i < out; ++i)
                    s += params_[off + static_cast<std::size_t>(i) * in + j] * delta[i];
                prev[j] = s;
            }
            if (l > 0) {
                // undo tanh of the hidden activation below
                for (int j = 0; j < in; ++j) prev[j] *= 1.0 - a[j] * a[j];
            }
            delta = std::move(prev);
        }
        return delta;
    }

private:
    std::vector<int> sizes_;
    std::vector<double> params_;
    mutable std::vector<std::vector<double>> acts_;
};

/// Elman-style recurrent cell with a linear readout:
///   h' = tanh(Wx x + Wh h + bh),  y = Wy h' + by
/// The readout is zero-initialized so an untrained cell emits exactly 0.
class RecurrentCell {
public:
    RecurrentCell() = default;
    RecurrentCell(int input, int hidden, int output, Rng& rng)
        : in_(input), hid_(hidden), out_(output) {
        const std::size_t count = wx_len() + wh_len() + hid_ + wy_len() + out_;
        params_.resize(count, 0.0);
        const double lx = std::sqrt(6.0 / (in_ + hid_));
        for (std::size_t i = 0; i < wx_len(); ++i) params_[i] = rng.uniform(-lx, lx);
        const double lh = std::sqrt(6.0 / (hid_ + hid_));
        for (std::size_t i = 0; i < wh_len(); ++i)
            params_[wx_len() + i] = rng.uniform(-lh, lh);
        // bh, Wy, by stay zero
    }

    int input_size() const { return in_; }
    int hidden_size() const { return hid_; }
    int output_size() const { return out_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    std::vector<double> initial_hidden() const {
        return std::vector<double>(hid_, 0.0);
    }

    /// One cell application; `h` is updated in place, returns the output.
    std::vector<double> step(std::span<const double> x, std::vector<double>& h) const {
        if (static_cast<int>(x.size()) != in_ || static_cast<int>(h.size()) != hid_)
            throw ShapeError("recurrent cell input/hidden size mismatch");
        std::vector<double> hn(hid_);
        for (int i = 0; i < hid_; ++i) {
            double s = bh()[i];
            for (int j = 0; j < in_; ++j) s += wx()[i * in_ + j] * x[j];
            for (int j = 0; j < hid_; ++j) s += wh()[i * hid_ + j] * h[j];
            hn[i] = std::tanh(s);
        }
        std::vector<double> y(out_);
        for (int o = 0; o < out_; ++o) {
            double s = by()[o];
            for (int j = 0; j < hid_; ++j) s += wy()[o * hid_ + j] * hn[j];
            y[o] = s;
        }
        h = std::move(hn);
        return y;
    }

    /// Backpropagation through time over one recorded sequence.
    /// `xs` are the inputs, `dys` the per-step output gradients; hidden state
    /// starts at zero. Gradients accumulate into `grad`.
    void bptt(const std::vector<std::vector<double>>& xs,
              const std::vector<std::vector<double>>& dys,
              std::vector<double>& grad) const {
        if (xs.size() != dys.size()) throw ShapeError("bptt length mismatch");
        if (grad.size() != params_.size()) grad.assign(params_.size(), 0.0);
        const std::size_t T = xs.size();
        std::vector<std::vector<double>> hs(T + 1, std::vector<double>(hid_, 0.0));
        for (std::size_t t = 0; t < T; ++t) {
            std::vector<double> h = hs[t];
            (void)step(xs[t], h);
            hs[t + 1] = std::move(h);
        }
        std::vector<double> dh(hid_, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            const auto& hn = hs[t + 1];
            // readout gradient
            for (int o = 0; o < out_; ++o) {
                const double d = dys[t][o];
                grad_by(grad)[o] += d;
                for (int j = 0; j < hid_; ++j) {
                    grad_wy(grad)[o * hid_ + j] += d * hn[j];
                    dh[j] += wy()[o * hid_ + j] * d;
                }
            }
            // through tanh
            std::vector<double> dz(hid_);
            for (int i = 0; i < hid_; ++i) dz[i] = dh[i] * (1.0 - hn[i] * hn[i]);
            std::vector<double> dh_prev(hid_, 0.0);
            for (int i = 0; i < hid_; ++i) {
                grad_bh(grad)[i] += dz[i];
                for (int j = 0; j < in_; ++j)
                    grad_wx(grad)[i * in_ + j] += dz[i] * xs[t][j];
                for (int j = 0; j < hid_; ++j) {
                    grad_wh(grad)[i * hid_ + j] += dz[i] * hs[t][j];
                    dh_prev[j] += wh()[i * hid_ + j] * dz[i];
                }
            }
            dh = std::move(dh_prev);
        }
    }

private:
    std::size_t wx_len() const { return static_cast<std::size_t>(hid_) * in_; }
    std::size_t wh_len() const { return static_cast<std::size_t>(hid_) * hid_; }
    std::size_t wy_len() const { return static_cast<std::size_t>(out_) * hid_; }

    const double* wx() const { return params_.data(); }
    const double* wh() const { return params_.data() + wx_len(); }
    const double* bh() const { return params_.data() + wx_len() + wh_len(); }
    const double* wy() const { return params_.data() + wx_len() + wh_len() + hid_; }
    const double* by() const {
        return params_.data() + wx_len() + wh_len() + hid_ + wy_len();
    }
    double* grad_wx(std::vector<double>& g) const { return g.data(); }
    double* grad_wh(std::vector<double>& g) const { return g.data() + wx_len(); }
    double* grad_bh(std::vector<double>& g) const {
        return g.data() + wx_len() + wh_len();
    }
    double* grad_wy(std::vector<double>& g) const {
        return g.data() + wx_len() + wh_len() + hid_;
    }
    double* grad_by(std::vector<double>& g) const {
        return g.data() + wx_len() + wh_len() + hid_ + wy_len();
    }

    int in_ = 0, hid_ = 0, out_ = 0;
    std::vector<double> params_;
};

/// Plain SGD with momentum over one flat parameter vector.
class SgdMomentum {
public:
    SgdMomentum() = default;
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(std::vector<double>& params, std::span<const double> grad) {
        if (grad.size() != params.size()) throw ShapeError("gradient size mismatch");
        if (velocity_.size() != params.size()) velocity_.assign(params.size(), 0.0);
        for (std::size_t i = 0; i < params.size(); ++i) {
            velocity_[i] = momentum_ * velocity_[i] - lr_ * grad[i];
            params[i] += velocity_[i];
        }
    }

    double learning_rate() const { return lr_; }
    std::vector<double>& velocity() { return velocity_; }
    const std::vector<double>& velocity() const { return velocity_; }

private:
    double lr_ = 1e-3;
    double momentum_ = 0.9;
    std::vector<double> velocity_;
};

}  // namespace ccm
