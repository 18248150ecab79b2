#include "hiertax/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hiertax {

LinearLayer::LinearLayer(std::string name, std::size_t in, std::size_t out)
    : weight_(name + ".weight", in, out), bias_(name + ".bias", 1, out) {}

void LinearLayer::init(SplitMix64& rng) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(weight_.value.rows() + weight_.value.cols()));
    for (auto& w : weight_.value.values()) {
        w = (2.0 * rng.uniform() - 1.0) * limit;
    }
    bias_.value.fill(0.0);
}

Tensor LinearLayer::forward(const Tensor& x) const {
    if (x.cols() != in_dim()) {
        throw std::invalid_argument(weight_.name + ": input width " + std::to_string(x.cols()) +
                                    ", expected " + std::to_string(in_dim()));
    }
    Tensor y = matmul(x, weight_.value);
    const auto b = bias_.value.row(0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row(r);
        for (std::size_t j = 0; j < yr.size(); ++j) {
            yr[j] += b[j];
        }
    }
    return y;
}

Tensor LinearLayer::backward(const Tensor& x, const Tensor& dy) {
    add_matmul_at_b(x, dy, weight_.grad);
    auto db = bias_.grad.row(0);
    for (std::size_t r = 0; r < dy.rows(); ++r) {
        const auto d = dy.row(r);
        for (std::size_t j = 0; j < d.size(); ++j) {
            db[j] += d[j];
        }
    }
    return matmul_a_bt(dy, weight_.value);
}

void LinearLayer::collect(std::vector<Param*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

void LinearLayer::collect(std::vector<const Param*>& out) const {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

Tensor relu(Tensor x) {
    for (auto& v : x.values()) {
        v = v > 0.0 ? v : 0.0;
    }
    return x;
}

void relu_backward(const Tensor& out, Tensor& dy) {
    const auto o = out.values();
    auto d = dy.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (!(o[i] > 0.0)) {
            d[i] = 0.0;
        }
    }
}

Backbone::Backbone(std::size_t input_dim, BackboneConfig cfg) : input_dim_(input_dim), cfg_(std::move(cfg)) {
    std::size_t in = input_dim;
    std::size_t concat = input_dim;
    for (std::size_t k = 0; k < cfg_.widths.size(); ++k) {
        if (cfg_.widths[k] == 0) {
            throw std::invalid_argument("backbone widths must be positive");
        }
        const auto block_in = cfg_.dense ? concat : in;
        blocks_.emplace_back("backbone." + std::to_string(k), block_in, cfg_.widths[k]);
        in = cfg_.widths[k];
        concat += cfg_.widths[k];
    }
}

void Backbone::init(SplitMix64& rng) {
    for (auto& b : blocks_) {
        b.init(rng);
    }
}

std::size_t Backbone::output_dim() const {
    return blocks_.empty() ? input_dim_ : blocks_.back().out_dim();
}

Tensor Backbone::forward(const Tensor& x, Cache* cache) const {
    if (x.cols() != input_dim_) {
        throw std::invalid_argument("backbone: input width " + std::to_string(x.cols()) + ", expected " +
                                    std::to_string(input_dim_));
    }
    if (blocks_.empty()) {
        if (cache) {
            cache->x = x;
        }
        return x;
    }
    std::vector<Tensor> outputs;
    std::vector<Tensor> inputs;
    outputs.reserve(blocks_.size());
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        Tensor in;
        if (!cfg_.dense || k == 0) {
            in = k == 0 ? x : outputs.back();
        } else {
            std::vector<const Tensor*> parts{&x};
            for (const auto& o : outputs) {
                parts.push_back(&o);
            }
            in = hconcat(parts);
        }
        outputs.push_back(relu(blocks_[k].forward(in)));
        if (cache) {
            inputs.push_back(std::move(in));
        }
    }
    Tensor features = outputs.back();
    if (cache) {
        cache->x = x;
        cache->inputs = std::move(inputs);
        cache->outputs = std::move(outputs);
    }
    return features;
}

void Backbone::backward(const Cache& cache, const Tensor& dfeatures) {
    if (blocks_.empty()) {
        return;
    }
    const auto n = blocks_.size();
    std::vector<Tensor> dout(n);
    for (std::size_t k = 0; k < n; ++k) {
        dout[k] = Tensor(cache.outputs[k].rows(), cache.outputs[k].cols());
    }
    dout[n - 1] = dfeatures;
    for (std::size_t k = n; k-- > 0;) {
        Tensor dy = dout[k];
        relu_backward(cache.outputs[k], dy);
        const Tensor dx = blocks_[k].backward(cache.inputs[k], dy);
        if (k == 0) {
            break;
        }
        if (!cfg_.dense) {
            auto dst = dout[k - 1].values();
            const auto src = dx.values();
            for (std::size_t i = 0; i < dst.size(); ++i) {
                dst[i] += src[i];
            }
            continue;
        }
        // dx covers [input | out_0 | ... | out_{k-1}]; the raw input needs no gradient.
        std::size_t at = input_dim_;
        for (std::size_t j = 0; j < k; ++j) {
            const auto w = dout[j].cols();
            for (std::size_t r = 0; r < dx.rows(); ++r) {
                const auto src = dx.row(r).subspan(at, w);
                auto dst = dout[j].row(r);
                for (std::size_t c = 0; c < w; ++c) {
                    dst[c] += src[c];
                }
            }
            at += w;
        }
    }
}

void Backbone::collect(std::vector<Param*>& out) {
    for (auto& b : blocks_) {
        b.collect(out);
    }
}

void Backbone::collect(std::vector<const Param*>& out) const {
    for (const auto& b : blocks_) {
        b.collect(out);
    }
}

Tensor softmax_rows(const Tensor& logits) {
    Tensor p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        auto out = p.row(r);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) {
            out[j] = std::exp(z[j] - m);
            sum += out[j];
        }
        for (auto& v : out) {
            v /= sum;
        }
    }
    return p;
}

LossAndGrad weighted_ce(const Tensor& logits, std::span<const std::size_t> targets,
                        std::span<const double> weights) {
    if (targets.size() != logits.rows()) {
        throw std::invalid_argument("weighted_ce: one target per row required");
    }
    if (weights.size() != logits.cols()) {
        throw std::invalid_argument("weighted_ce: one weight per class required");
    }
    if (!logits.all_finite()) {
        throw std::domain_error("weighted_ce: non-finite logits");
    }
    LossAndGrad out;
    out.dlogits = Tensor(logits.rows(), logits.cols());
    const auto batch = logits.rows();
    if (batch == 0) {
        return out;
    }
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto y = targets[i];
        if (y >= logits.cols()) {
            throw std::invalid_argument("weighted_ce: target out of range");
        }
        const double w = weights[y];
        if (!(w >= 0.0)) {
            throw std::invalid_argument("weighted_ce: negative class weight");
        }
        const auto z = logits.row(i);
        const double m = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) {
            sum += std::exp(v - m);
        }
        const double log_sum = std::log(sum);
        out.loss += inv_b * w * (log_sum - (z[y] - m));
        auto d = out.dlogits.row(i);
        for (std::size_t j = 0; j < z.size(); ++j) {
            const double p = std::exp(z[j] - m - log_sum);
            d[j] = inv_b * w * (p - (j == y ? 1.0 : 0.0));
        }
    }
    return out;
}

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void Adam::step(double lr) {
    for (const auto* p : params_) {
        if (!p->grad.all_finite()) {
            throw std::runtime_error("adam: non-finite gradient in " + p->name);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto theta = params_[i]->value.values();
        const auto g = params_[i]->grad.values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / c1;
            const double vhat = v[k] / c2;
            theta[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

double LrSchedule::at(int epoch) const {
    if (epoch < 0 || period < 1) {
        throw std::invalid_argument("LrSchedule: epoch must be >= 0 and period >= 1");
    }
    return initial * std::pow(factor, epoch / period);
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
    return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, double h) {
    for (auto* p : params) {
        p->grad.fill(0.0);
    }
    analytic();
    GradCheckResult result;
    for (auto* p : params) {
        auto theta = p->value.values();
        const auto g = p->grad.values();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double saved = theta[k];
            theta[k] = saved + h;
            const double up = loss();
            theta[k] = saved - h;
            const double down = loss();
            theta[k] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = relative_error(g[k], numeric);
            ++result.checked;
            if (err > result.max_rel_error || result.worst_param.empty()) {
                result.max_rel_error = err;
                result.worst_param = p->name;
                result.worst_index = k;
                result.worst_analytic = g[k];
                result.worst_numeric = numeric;
            }
        }
    }
    return result;
}

} // namespace hiertax
