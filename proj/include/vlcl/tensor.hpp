#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Tensor is a cheap handle to an immutable node. Ops record their inputs and
// a backward rule when grad mode is on and any input requires a gradient. The
// backward rules are written in terms of the same ops, so gradients computed
// with create_graph=true are themselves differentiable; this is what lets the
// trainer differentiate a meta loss through a parameter update.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vlcl::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tensor;
struct Node;

// Returns one gradient per recorded input; entries whose `needed` flag is false
// may be left undefined.
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad_output, const std::vector<bool>& needed)>;

class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    /// Leaf that participates in gradient computation.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t dim(std::size_t i) const { return shape().at(i); }
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::span<const double> values() const;
    double item() const;
    bool requires_grad() const;
    bool is_leaf() const;
    const char* op_name() const;

    /// Same values, cut from any graph.
    Tensor detach() const;
    /// Same values as a fresh gradient-requiring leaf.
    Tensor as_parameter() const;

    const Node* node() const { return node_.get(); }
    std::shared_ptr<Node> node_ptr() const { return node_; }

private:
    friend Tensor make_op(const char*, Shape, std::vector<double>, std::vector<Tensor>,
                          BackwardFn);
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}
    std::shared_ptr<Node> node_;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    bool requires_grad = false;
    const char* op = "constant";
    std::vector<Tensor> inputs;
    BackwardFn backward;  // empty for leaves
};

/// Builds an op result; records the graph only when grad mode is enabled and
/// some input requires a gradient.
Tensor make_op(const char* op, Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
               BackwardFn backward);

bool grad_mode_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Gradients of a scalar output with respect to each input. Inputs the output
/// does not depend on get a zero tensor of matching shape. With create_graph
/// the returned tensors carry a graph and may be differentiated again.
std::vector<Tensor> grad(const Tensor& output, std::span<const Tensor> inputs,
                         bool create_graph = false);

/// Seeded variant: accumulates grad_output^T * d(output)/d(inputs).
std::vector<Tensor> grad(const Tensor& output, const Tensor& grad_output,
                         std::span<const Tensor> inputs, bool create_graph = false);

/// Whether `output` reaches `input` through recorded edges.
bool depends_on(const Tensor& output, const Tensor& input);

}  // namespace vlcl::ag
