#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl {

/// Ordered collection of named parameter tensors.
class ParamSet {
public:
    void add(std::string name, ag::Tensor value);

    std::size_t size() const { return tensors_.size(); }
    bool empty() const { return tensors_.empty(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<ag::Tensor>& tensors() const { return tensors_; }
    const ag::Tensor& operator[](std::size_t i) const { return tensors_.at(i); }
    const ag::Tensor& at(std::string_view name) const;
    bool contains(std::string_view name) const;

    /// Same names, new tensors.
    ParamSet with_tensors(std::vector<ag::Tensor> tensors) const;
    /// Every tensor cut from its graph.
    ParamSet detached() const;
    /// Every tensor as a fresh gradient-requiring leaf.
    ParamSet as_parameters() const;

    std::size_t total_numel() const;
    /// Concatenated values in declaration order.
    std::vector<double> flatten() const;
    /// Inverse of flatten() on the current shapes; the result holds constants.
    ParamSet unflatten(const std::vector<double>& flat) const;

private:
    std::vector<std::string> names_;
    std::vector<ag::Tensor> tensors_;
};

/// Weights drawn N(0, 2/fan_in) (He), stored as a constant tensor.
ag::Tensor he_normal(ag::Shape shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace vlcl
