#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "fpaccel/linalg.hpp"
#include "fpaccel/tensor.hpp"

namespace fpaccel {

// Type-II Anderson Acceleration over a sliding window of the previous k
// iterate pairs (x_i, f(x_i)). The combination weights alpha (summing to one)
// minimize || sum_i alpha_i (f(x_i) - x_i) || with Tikhonov regularization on
// the normal equations, and the update returns sum_i alpha_i f(x_i).
class AAState {
public:
    explicit AAState(std::size_t memory, double regularization = 1e-10)
        : memory_(memory), reg_(regularization) {
        if (memory_ < 1) throw config_error("anderson: memory must be >= 1");
        if (reg_ < 0.0) throw config_error("anderson: regularization must be >= 0");
    }

    std::size_t memory() const { return memory_; }
    std::size_t window() const { return xs_.size(); }

    void reset() {
        xs_.clear();
        fxs_.clear();
    }

    // One acceleration step; the buffer absorbs (x_t, f(x_t)) first, oldest
    // pair evicted when full. Falls back to plain f(x_t) whenever the
    // regularized solve degenerates.
    Tensor update(const Tensor& x, const Tensor& fx) {
        check_same_shape(x, fx, "anderson update");
        if (!xs_.empty() && xs_.front().size() != x.size())
            throw config_error("anderson update: iterate dimension changed");
        xs_.push_back(x);
        fxs_.push_back(fx);
        if (xs_.size() > memory_) {
            xs_.pop_front();
            fxs_.pop_front();
        }

        std::size_t w = xs_.size();
        if (w == 1) return fx;

        // residuals g_i = f(x_i) - x_i; M = G'G + reg I; solve M z = 1,
        // alpha = z / (1'z)
        std::vector<Tensor> g(w);
        for (std::size_t i = 0; i < w; ++i) g[i] = sub(fxs_[i], xs_[i]);
        Tensor m({w, w});
        for (std::size_t i = 0; i < w; ++i) {
            for (std::size_t j = i; j < w; ++j) {
                double d = dot(g[i], g[j]);
                m.at(i, j) = d;
                m.at(j, i) = d;
            }
            m.at(i, i) += reg_;
        }
        Tensor ones = Tensor::full({w}, 1.0);
        Tensor z;
        try {
            z = lu_factor(m).solve(ones);
        } catch (const numeric_error&) {
            return fx;
        }
        double zsum = 0.0;
        for (std::size_t i = 0; i < w; ++i) zsum += z[i];
        if (!z.finite() || zsum == 0.0 || !std::isfinite(1.0 / zsum)) return fx;

        Tensor out({x.size()});
        for (std::size_t i = 0; i < w; ++i) axpy(z[i] / zsum, fxs_[i], out);
        if (!out.finite()) return fx;
        return out;
    }

private:
    std::size_t memory_;
    double reg_;
    std::deque<Tensor> xs_;
    std::deque<Tensor> fxs_;
};

}  // namespace fpaccel
