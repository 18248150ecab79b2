#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "hiertax/rng.hpp"
#include "hiertax/tensor.hpp"

namespace hiertax {

/// A trainable tensor and its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, std::size_t rows, std::size_t cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

/// y = x W + b with W of shape (in, out).
class LinearLayer {
  public:
    LinearLayer() = default;
    LinearLayer(std::string name, std::size_t in, std::size_t out);

    std::size_t in_dim() const { return weight_.value.rows(); }
    std::size_t out_dim() const { return weight_.value.cols(); }

    /// W ~ U(-sqrt(6/(in+out)), +sqrt(6/(in+out))), b = 0.
    void init(SplitMix64& rng);

    Tensor forward(const Tensor& x) const;
    /// Accumulates dW, db and returns dL/dx.
    Tensor backward(const Tensor& x, const Tensor& dy);

    Param& weight() { return weight_; }
    Param& bias() { return bias_; }
    const Param& weight() const { return weight_; }
    const Param& bias() const { return bias_; }

    void collect(std::vector<Param*>& out);
    void collect(std::vector<const Param*>& out) const;

  private:
    Param weight_;
    Param bias_;
};

Tensor relu(Tensor x);
/// Zeroes dy wherever the forward output was not positive.
void relu_backward(const Tensor& out, Tensor& dy);

struct BackboneConfig {
    std::vector<std::size_t> widths{64, 32, 32};
    /// Each block sees the input concatenated with all earlier block outputs.
    bool dense = true;

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Stack of Linear+ReLU blocks. The feature vector is the last block's output
/// (the raw input when there are no blocks).
class Backbone {
  public:
    struct Cache {
        std::vector<Tensor> inputs;
        std::vector<Tensor> outputs;
        Tensor x;
    };

    Backbone() = default;
    Backbone(std::size_t input_dim, BackboneConfig cfg);

    void init(SplitMix64& rng);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const;
    std::size_t block_input_dim(std::size_t k) const { return blocks_.at(k).in_dim(); }
    const BackboneConfig& config() const { return cfg_; }
    std::vector<LinearLayer>& blocks() { return blocks_; }
    const std::vector<LinearLayer>& blocks() const { return blocks_; }

    Tensor forward(const Tensor& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const Tensor& dfeatures);

    void collect(std::vector<Param*>& out);
    void collect(std::vector<const Param*>& out) const;

  private:
    std::size_t input_dim_ = 0;
    BackboneConfig cfg_;
    std::vector<LinearLayer> blocks_;
};

/// Row-wise softmax with max-shift.
Tensor softmax_rows(const Tensor& logits);

struct LossAndGrad {
    double loss = 0.0;
    Tensor dlogits;
};

/// (1/B) sum_i w[y_i] * -log softmax(z_i)[y_i] and its gradient w.r.t. the logits.
LossAndGrad weighted_ce(const Tensor& logits, std::span<const std::size_t> targets,
                        std::span<const double> weights);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
  public:
    explicit Adam(std::vector<Param*> params, AdamConfig cfg = {});

    /// One bias-corrected update from the accumulated gradients. Throws
    /// std::runtime_error on a non-finite gradient before touching anything.
    void step(double lr);
    std::uint64_t steps() const { return t_; }

    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

  private:
    std::vector<Param*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

/// Step decay: initial * factor^floor(epoch / period).
struct LrSchedule {
    double initial = 0.01;
    double factor = 1.0 / 3.0;
    int period = 20;

    double at(int epoch) const;
};

inline double lr_at_epoch(const LrSchedule& s, int epoch) { return s.at(epoch); }

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// |a - n| / max(|a|, |n|, 1e-12).
double relative_error(double analytic, double numeric);

/// Central-difference check of every element of `params`. `analytic` must
/// leave the gradient of `loss` in each Param::grad; `loss` must not touch
/// the gradients.
GradCheckResult grad_check(std::span<Param* const> params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, double h = 1e-5);

} // namespace hiertax
