#include "vlcl/tensor.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "vlcl/ops.hpp"

namespace vlcl::ag {
namespace {

thread_local bool g_grad_mode = true;

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size()) {
        throw std::invalid_argument("tensor shape " + to_string(shape) + " does not match " +
                                    std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->op = requires_grad ? "parameter" : "constant";
    return node;
}

// Post-order (inputs before consumers) over nodes that require grad.
std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].node_ptr().get();
            if (child != nullptr && child->requires_grad && visited.insert(child).second) {
                stack.emplace_back(child, 0);
            }
            continue;
        }
        order.push_back(node);
        stack.pop_back();
    }
    return order;
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    return Tensor(new_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::zeros(Shape shape) {
    const auto n = ag::numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape shape, double value) {
    const auto n = ag::numel(shape);
    return constant(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return constant({}, {value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    return Tensor(new_node(std::move(shape), std::move(values), true));
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::numel() const { return values().size(); }

std::span<const double> Tensor::values() const {
    if (!node_) throw std::logic_error("use of undefined tensor");
    return node_->value;
}

double Tensor::item() const {
    if (numel() != 1) {
        throw std::invalid_argument("item() on tensor of shape " + to_string(shape()));
    }
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::is_leaf() const { return node_ && !node_->backward; }

const char* Tensor::op_name() const { return node_ ? node_->op : "undefined"; }

Tensor Tensor::detach() const {
    if (!requires_grad()) return *this;
    return constant(node_->shape, node_->value);
}

Tensor Tensor::as_parameter() const { return parameter(shape(), node_->value); }

Tensor make_op(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               BackwardFn backward) {
    bool record = g_grad_mode && std::any_of(inputs.begin(), inputs.end(),
                                             [](const Tensor& t) { return t.requires_grad(); });
    auto node = new_node(std::move(shape), std::move(value), record);
    node->op = op;
    if (record) {
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph) {
    if (output.numel() != 1) {
        throw std::invalid_argument("grad() without a seed needs a scalar output, got " +
                                    to_string(output.shape()));
    }
    return grad(output, Tensor::full(output.shape(), 1.0), inputs, create_graph);
}

std::vector<Tensor> grad(const Tensor& output, const Tensor& grad_output,
                         std::span<const Tensor> inputs, bool create_graph) {
    if (grad_output.shape() != output.shape()) {
        throw std::invalid_argument("grad seed shape " + to_string(grad_output.shape()) +
                                    " differs from output shape " + to_string(output.shape()));
    }
    std::vector<Tensor> result;
    result.reserve(inputs.size());
    if (!output.requires_grad()) {
        for (const auto& in : inputs) result.push_back(Tensor::zeros(in.shape()));
        return result;
    }

    std::unordered_set<Node*> targets;
    for (const auto& in : inputs) {
        if (in.requires_grad()) targets.insert(in.node_ptr().get());
    }

    const auto order = topo_order(output.node_ptr().get());
    std::unordered_set<Node*> needed;
    for (Node* n : order) {
        bool need = targets.count(n) > 0;
        for (const auto& in : n->inputs) {
            if (need) break;
            need = needed.count(in.node_ptr().get()) > 0;
        }
        if (need) needed.insert(n);
    }

    std::optional<NoGradGuard> guard;
    if (!create_graph) guard.emplace();

    std::unordered_map<Node*, Tensor> grads;
    grads[output.node_ptr().get()] = create_graph ? grad_output : grad_output.detach();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto found = grads.find(n);
        if (found == grads.end() || !needed.count(n) || !n->backward) continue;
        const Tensor g = found->second;
        if (!targets.count(n)) grads.erase(found);

        std::vector<bool> mask(n->inputs.size());
        bool any = false;
        for (std::size_t i = 0; i < n->inputs.size(); ++i) {
            mask[i] = needed.count(n->inputs[i].node_ptr().get()) > 0;
            any = any || mask[i];
        }
        if (!any) continue;
        auto partials = n->backward(g, mask);
        for (std::size_t i = 0; i < n->inputs.size(); ++i) {
            if (!mask[i]) continue;
            if (!partials.at(i).defined()) continue;
            Node* in = n->inputs[i].node_ptr().get();
            if (partials[i].shape() != in->shape) {
                throw std::logic_error(std::string("backward of '") + n->op +
                                       "' produced gradient of shape " +
                                       to_string(partials[i].shape()) + " for input of shape " +
                                       to_string(in->shape));
            }
            auto slot = grads.find(in);
            if (slot == grads.end()) {
                grads.emplace(in, partials[i]);
            } else {
                slot->second = add(slot->second, partials[i]);
            }
        }
    }

    for (const auto& in : inputs) {
        auto it = in.requires_grad() ? grads.find(in.node_ptr().get()) : grads.end();
        result.push_back(it == grads.end() ? Tensor::zeros(in.shape()) : it->second);
    }
    return result;
}

bool depends_on(const Tensor& output, const Tensor& input) {
    if (!output.requires_grad() || !input.requires_grad()) return false;
    const auto order = topo_order(output.node_ptr().get());
    return std::find(order.begin(), order.end(), input.node_ptr().get()) != order.end();
}

}  // namespace vlcl::ag
