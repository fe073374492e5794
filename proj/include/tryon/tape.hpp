#ifndef TRYON_TAPE_HPP
#define TRYON_TAPE_HPP

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tryon/rng.hpp"
#include "tryon/tensor.hpp"

namespace tryon {

// Reverse-mode tape. Nodes are created in topological order by
// construction; backward() walks them in reverse. Node gradients are
// released as soon as their backward closure has consumed them.
template <typename T>
class Tape {
public:
    using Var = int32_t;

    struct Node {
        Tensor<T> val;                    // owned value (leaves and ops)
        const Tensor<T>* pval = nullptr;  // external value (parameters)
        Tensor<T>* pgrad = nullptr;       // external gradient accumulator
        Tensor<T> grad;
        bool has_grad = false;
        bool needs_grad = false;
        std::function<void(Tape&, Var)> back;  // null for leaves
    };

    Var input(Tensor<T> v, bool needs_grad = false) {
        Node n;
        n.val = std::move(v);
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var param(const Tensor<T>* value, Tensor<T>* grad_sink, bool needs_grad = true) {
        Node n;
        n.pval = value;
        n.pgrad = needs_grad ? grad_sink : nullptr;
        n.needs_grad = needs_grad;
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    Var make(Tensor<T> v, bool needs_grad, std::function<void(Tape&, Var)> back) {
        Node n;
        n.val = std::move(v);
        n.needs_grad = needs_grad;
        if (needs_grad) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return static_cast<Var>(nodes_.size() - 1);
    }

    const Tensor<T>& val(Var v) const {
        const Node& n = nodes_[static_cast<size_t>(v)];
        return n.pval ? *n.pval : n.val;
    }

    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }

    // Gradient accumulator, lazily allocated with the value's shape.
    Tensor<T>& grad(Var v) {
        Node& n = nodes_[static_cast<size_t>(v)];
        if (!n.has_grad) {
            n.grad = Tensor<T>::zeros(val(v).shape);
            n.has_grad = true;
        }
        return n.grad;
    }

    void accum(Var v, const Tensor<T>& g) {
        if (!nodes_[static_cast<size_t>(v)].needs_grad) return;
        Tensor<T>& dst = grad(v);
        const size_t n = dst.data.size();
        for (size_t i = 0; i < n; ++i) dst.data[i] += g.data[i];
    }

    bool has_grad(Var v) const { return nodes_[static_cast<size_t>(v)].has_grad; }

    void backward(Var root) {
        Tensor<T>& g = grad(root);
        std::fill(g.data.begin(), g.data.end(), T(1));
        for (int64_t i = static_cast<int64_t>(root); i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad || !n.has_grad) continue;
            if (n.back) {
                n.back(*this, static_cast<Var>(i));
                // op values are only read by consumers, which have all run
                if (i != static_cast<int64_t>(root)) n.val = Tensor<T>();
            } else if (n.pgrad) {
                for (size_t j = 0; j < n.grad.data.size(); ++j)
                    n.pgrad->data[j] += n.grad.data[j];
            }
            n.grad = Tensor<T>();  // release
            n.has_grad = false;
        }
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    std::vector<Node> nodes_;
};

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> m;  // Adam first moment
    Tensor<T> v;  // Adam second moment
};

template <typename T>
class ParamStore {
public:
    int add(std::string name, Tensor<T> init) {
        Param<T> p;
        p.name = std::move(name);
        p.grad = Tensor<T>::zeros(init.shape);
        p.m = Tensor<T>::zeros(init.shape);
        p.v = Tensor<T>::zeros(init.shape);
        p.value = std::move(init);
        params_.push_back(std::move(p));
        return static_cast<int>(params_.size() - 1);
    }

    Param<T>& at(int i) { return params_[static_cast<size_t>(i)]; }
    const Param<T>& at(int i) const { return params_[static_cast<size_t>(i)]; }
    size_t count() const { return params_.size(); }

    int find(const std::string& name) const {
        for (size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name == name) return static_cast<int>(i);
        return -1;
    }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_)
            std::fill(p.grad.data.begin(), p.grad.data.end(), T(0));
    }

    // step_index is 1-based.
    void adam_step(double lr, double beta1, double beta2, double eps, int64_t step_index) {
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
        for (auto& p : params_) {
            const size_t n = p.value.data.size();
            for (size_t i = 0; i < n; ++i) {
                const double g = static_cast<double>(p.grad.data[i]);
                const double m = beta1 * static_cast<double>(p.m.data[i]) + (1.0 - beta1) * g;
                const double v = beta2 * static_cast<double>(p.v.data[i]) + (1.0 - beta2) * g * g;
                p.m.data[i] = static_cast<T>(m);
                p.v.data[i] = static_cast<T>(v);
                const double mh = m / bc1;
                const double vh = v / bc2;
                p.value.data[i] -= static_cast<T>(lr * mh / (std::sqrt(vh) + eps));
            }
        }
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Param<T>> params_;
};

// Weight initializers.
template <typename T>
Tensor<T> init_normal(std::vector<int64_t> shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(stddev * rng.normal());
    return t;
}

// He-style fan-in scaling, the default for conv and linear weights.
template <typename T>
Tensor<T> init_fan_in(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
    return init_normal<T>(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

}  // namespace tryon

#endif
