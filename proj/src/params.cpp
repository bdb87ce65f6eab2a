#include "vlcl/params.hpp"

#include <cmath>
#include <stdexcept>

namespace vlcl {

void ParamSet::add(std::string name, ag::Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(value));
}

const ag::Tensor& ParamSet::at(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return tensors_[i];
    throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
    for (const auto& n : names_)
        if (n == name) return true;
    return false;
}

ParamSet ParamSet::with_tensors(std::vector<ag::Tensor> tensors) const {
    if (tensors.size() != tensors_.size()) {
        throw std::invalid_argument("parameter count mismatch: " + std::to_string(tensors.size()) +
                                    " vs " + std::to_string(tensors_.size()));
    }
    ParamSet out;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].shape() != tensors_[i].shape()) {
            throw std::invalid_argument("shape mismatch for parameter '" + names_[i] + "'");
        }
        out.add(names_[i], std::move(tensors[i]));
    }
    return out;
}

ParamSet ParamSet::detached() const {
    std::vector<ag::Tensor> t;
    for (const auto& x : tensors_) t.push_back(x.detach());
    return with_tensors(std::move(t));
}

ParamSet ParamSet::as_parameters() const {
    std::vector<ag::Tensor> t;
    for (const auto& x : tensors_) t.push_back(x.as_parameter());
    return with_tensors(std::move(t));
}

std::size_t ParamSet::total_numel() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

std::vector<double> ParamSet::flatten() const {
    std::vector<double> flat;
    flat.reserve(total_numel());
    for (const auto& t : tensors_) flat.insert(flat.end(), t.values().begin(), t.values().end());
    return flat;
}

ParamSet ParamSet::unflatten(const std::vector<double>& flat) const {
    if (flat.size() != total_numel()) {
        throw std::invalid_argument("unflatten: expected " + std::to_string(total_numel()) +
                                    " values, got " + std::to_string(flat.size()));
    }
    std::vector<ag::Tensor> t;
    std::size_t offset = 0;
    for (const auto& x : tensors_) {
        t.push_back(ag::Tensor::constant(
            x.shape(), std::vector<double>(flat.begin() + offset, flat.begin() + offset + x.numel())));
        offset += x.numel();
    }
    return with_tensors(std::move(t));
}

ag::Tensor he_normal(ag::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = dist(rng);
    return ag::Tensor::constant(std::move(shape), std::move(v));
}

}  // namespace vlcl
