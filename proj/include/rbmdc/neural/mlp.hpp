#pragma once

#include "rbmdc/core/rng.hpp"
#include "rbmdc/core/types.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

namespace rbmdc {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
inline double elu_derivative(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

class Mlp;

/// Activations recorded by Mlp::forward_cached, consumed by Mlp::backward.
struct ForwardCache {
    std::vector<Matrix> inputs;       // input to each layer (inputs[0] = x)
    std::vector<Matrix> preacts;      // pre-activation of each hidden layer
    Matrix output;
    const Mlp* owner = nullptr;
    std::uint64_t version = 0;
};

/// Fully connected network: elu on hidden layers, identity on the output.
/// All parameters live in one flat vector; layer l stores its weight matrix
/// (out x in, row-major) followed by its bias.
class Mlp {
public:
    Mlp() = default;

    explicit Mlp(std::vector<Eigen::Index> layer_dims) : dims_(std::move(layer_dims)) {
        require(dims_.size() >= 2, "network needs at least an input and an output width");
        for (auto w : dims_) require(w >= 1, "layer widths must be positive");
        offsets_.reserve(dims_.size());
        Eigen::Index total = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            offsets_.push_back(total);
            total += dims_[l + 1] * dims_[l] + dims_[l + 1];
        }
        params_ = Vector::Zero(total);
    }

    /// Uniform(-sqrt(6/(fan_in+fan_out)), +...) weights, zero biases.
    static Mlp initialized(std::vector<Eigen::Index> layer_dims, RandomStream& rng) {
        Mlp net(std::move(layer_dims));
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(net.dims_[l] + net.dims_[l + 1]));
            auto w = net.weight(l);
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
            }
        }
        return net;
    }

    /// Widths for `hidden` layers of `width` units between `in` and `out`.
    static std::vector<Eigen::Index> architecture(Eigen::Index in, std::size_t hidden, Eigen::Index width,
                                                  Eigen::Index out) {
        std::vector<Eigen::Index> dims{in};
        for (std::size_t i = 0; i < hidden; ++i) dims.push_back(width);
        dims.push_back(out);
        return dims;
    }

    [[nodiscard]] const std::vector<Eigen::Index>& layer_dims() const { return dims_; }
    [[nodiscard]] std::size_t num_layers() const { return dims_.empty() ? 0 : dims_.size() - 1; }
    [[nodiscard]] Eigen::Index input_dim() const { return dims_.front(); }
    [[nodiscard]] Eigen::Index output_dim() const { return dims_.back(); }
    [[nodiscard]] Eigen::Index num_params() const { return params_.size(); }
    [[nodiscard]] std::uint64_t version() const { return version_; }

    [[nodiscard]] const Vector& params() const { return params_; }
    /// Mutable access invalidates outstanding forward caches.
    Vector& mutable_params() {
        ++version_;
        return params_;
    }

    [[nodiscard]] Eigen::Map<const RowMajorMatrix> weight(std::size_t l) const {
        return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    [[nodiscard]] Eigen::Map<RowMajorMatrix> weight(std::size_t l) {
        ++version_;
        return {params_.data() + offsets_[l], dims_[l + 1], dims_[l]};
    }
    [[nodiscard]] Eigen::Map<const Vector> bias(std::size_t l) const {
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }
    [[nodiscard]] Eigen::Map<Vector> bias(std::size_t l) {
        ++version_;
        return {params_.data() + offsets_[l] + dims_[l + 1] * dims_[l], dims_[l + 1]};
    }
    [[nodiscard]] Eigen::Index weight_offset(std::size_t l) const { return offsets_[l]; }
    [[nodiscard]] Eigen::Index bias_offset(std::size_t l) const { return offsets_[l] + dims_[l + 1] * dims_[l]; }

    /// Evaluates the network on the columns of x (in x n); returns out x n.
    [[nodiscard]] Matrix forward(const Matrix& x) const {
        check_input(x);
        Matrix a = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix z = weight(l) * a;
            z.colwise() += bias(l);
            if (l + 1 < num_layers()) z = z.unaryExpr([](double v) { return elu(v); });
            a = std::move(z);
        }
        return a;
    }

    [[nodiscard]] ForwardCache forward_cached(const Matrix& x) const {
        check_input(x);
        ForwardCache cache;
        cache.owner = this;
        cache.version = version_;
        cache.inputs.reserve(num_layers());
        cache.preacts.reserve(num_layers());
        Matrix a = x;
        for (std::size_t l = 0; l < num_layers(); ++l) {
            Matrix z = weight(l) * a;
            z.colwise() += bias(l);
            cache.inputs.push_back(std::move(a));
            if (l + 1 < num_layers()) {
                a = z.unaryExpr([](double v) { return elu(v); });
                cache.preacts.push_back(std::move(z));
            } else {
                a = std::move(z);
            }
        }
        cache.output = std::move(a);
        return cache;
    }

    /// Reverse-mode pass. `upstream` (out x n) holds dLoss/dOutput for each
    /// column; parameter gradients are added into `grad` (size num_params).
    /// When `input_grad` is non-null it receives dLoss/dInput (in x n).
    void backward(const ForwardCache& cache, const Matrix& upstream, Eigen::Ref<Vector> grad,
                  Matrix* input_grad = nullptr) const {
        if (cache.owner != this || cache.version != version_) {
            throw ConfigError("stale forward cache: parameters changed since the forward pass");
        }
        require(grad.size() == num_params(), "gradient buffer has the wrong size");
        require(upstream.rows() == output_dim() && upstream.cols() == cache.output.cols(),
                "upstream gradient has the wrong shape");
        Matrix delta = upstream;
        for (std::size_t l = num_layers(); l-- > 0;) {
            const Matrix& a = cache.inputs[l];
            Eigen::Map<RowMajorMatrix> gw(grad.data() + offsets_[l], dims_[l + 1], dims_[l]);
            gw.noalias() += delta * a.transpose();
            grad.segment(bias_offset(l), dims_[l + 1]) += delta.rowwise().sum();
            if (l > 0) {
                Matrix back = weight(l).transpose() * delta;
                const Matrix& z = cache.preacts[l - 1];
                delta = back.cwiseProduct(z.unaryExpr([](double v) { return elu_derivative(v); }));
            } else if (input_grad != nullptr) {
                *input_grad = weight(0).transpose() * delta;
            }
        }
    }

    /// Gradient of a scalar-output network with respect to its input at each
    /// column of x (in x n).
    [[nodiscard]] Matrix input_gradient(const Matrix& x) const {
        require(output_dim() == 1, "input_gradient requires a scalar-output network");
        ForwardCache cache = forward_cached(x);
        Vector scratch = Vector::Zero(num_params());
        Matrix out;
        backward(cache, Matrix::Ones(1, x.cols()), scratch, &out);
        return out;
    }

private:
    void check_input(const Matrix& x) const {
        if (x.rows() != input_dim()) {
            std::ostringstream msg;
            msg << "network input has " << x.rows() << " rows, expected " << input_dim();
            throw ConfigError(msg.str());
        }
    }

    std::vector<Eigen::Index> dims_;
    std::vector<Eigen::Index> offsets_;
    Vector params_;
    std::uint64_t version_ = 0;
};

}  // namespace rbmdc
