#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "stackelgrad/errors.hpp"
#include "stackelgrad/tensor.hpp"

namespace stackelgrad {

// Ordered collection of a model's trainable tensors. Order is part of the
// identity: flatten/unflatten, dot products and checkpoints all assume it.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<Tensor> tensors) : tensors_(std::move(tensors)) {}

    std::size_t count() const { return tensors_.size(); }
    bool empty() const { return tensors_.empty(); }

    Tensor& operator[](std::size_t i) { return tensors_[i]; }
    const Tensor& operator[](std::size_t i) const { return tensors_[i]; }

    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    void push_back(Tensor t) { tensors_.push_back(std::move(t)); }

    // Total number of scalar entries (N).
    std::size_t size() const {
        std::size_t n = 0;
        for (const Tensor& t : tensors_) n += t.data.size();
        return n;
    }

    bool same_layout(const ParamVector& o) const {
        if (tensors_.size() != o.tensors_.size()) return false;
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            if (tensors_[i].shape != o.tensors_[i].shape) return false;
        return true;
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(size());
        for (const Tensor& t : tensors_) flat.insert(flat.end(), t.data.begin(), t.data.end());
        return flat;
    }

    // Rebuild from a flat buffer using this vector's shapes.
    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != size())
            throw ContractError("param vector: flat length " + std::to_string(flat.size()) +
                                " != expected " + std::to_string(size()));
        std::size_t off = 0;
        for (Tensor& t : tensors_) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + t.data.size()),
                      t.data.begin());
            off += t.data.size();
        }
    }

    // this += c * other, tensor by tensor.
    void add_scaled(const ParamVector& other, double c) {
        require_layout(other, "add_scaled");
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            for (std::size_t j = 0; j < tensors_[i].data.size(); ++j)
                tensors_[i].data[j] += c * other.tensors_[i].data[j];
    }

    void scale(double c) {
        for (Tensor& t : tensors_)
            for (double& v : t.data) v *= c;
    }

    void fill(double c) {
        for (Tensor& t : tensors_)
            for (double& v : t.data) v = c;
    }

    ParamVector zeros_like() const {
        std::vector<Tensor> zs;
        zs.reserve(tensors_.size());
        for (const Tensor& t : tensors_) zs.push_back(Tensor::zeros(t.shape));
        return ParamVector(std::move(zs));
    }

    double dot(const ParamVector& other) const {
        require_layout(other, "dot");
        double s = 0.0;
        for (std::size_t i = 0; i < tensors_.size(); ++i)
            for (std::size_t j = 0; j < tensors_[i].data.size(); ++j)
                s += tensors_[i].data[j] * other.tensors_[i].data[j];
        return s;
    }

    double norm2_sq() const { return dot(*this); }
    double norm2() const { return std::sqrt(norm2_sq()); }

    double linf() const {
        double m = 0.0;
        for (const Tensor& t : tensors_)
            for (double v : t.data) m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const {
        for (const Tensor& t : tensors_)
            if (!t.all_finite()) return false;
        return true;
    }

    // Joint vector over two players' parameters, in (a, b) order.
    static ParamVector concat(const ParamVector& a, const ParamVector& b) {
        std::vector<Tensor> ts;
        ts.reserve(a.count() + b.count());
        for (const Tensor& t : a.tensors()) ts.push_back(t);
        for (const Tensor& t : b.tensors()) ts.push_back(t);
        return ParamVector(std::move(ts));
    }

private:
    void require_layout(const ParamVector& o, const char* who) const {
        if (!same_layout(o))
            throw ContractError(std::string("param vector: layout mismatch in ") + who);
    }

    std::vector<Tensor> tensors_;
};

}  // namespace stackelgrad
