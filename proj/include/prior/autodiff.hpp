#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>



namespace prior::ad {

// Every tensor is two-dimensional; scalars are 1x1 and vectors are single rows.
struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::string op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
};

class Tensor {
public:
    Tensor();
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor row(std::vector<double> values, bool requires_grad = false);
    static Tensor column(std::vector<double> values, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::size_t rows() const { return node_->shape.rows; }
    std::size_t cols() const { return node_->shape.cols; }
    std::size_t size() const { return node_->shape.size(); }

    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& mutable_values() { return node_->value; }
    const std::vector<double>& grad() const { return node_->grad; }
    std::vector<double>& mutable_grad() { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad();

    double operator()(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    const std::string& op() const { return node_->op; }

    // Copy of the values with no history and no gradient tracking.
    Tensor detach() const;
    Tensor clone(bool requires_grad) const;

    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node> node_;
};

// Ordered record of the operations reachable from a loss, inputs before outputs.
class Tape {
public:
    static Tape record(const Tensor& root);

    const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }
    void backward();
    // Debug dump: one entry per node with op, shape and parent indices.
    std::string to_json() const;

private:
    std::vector<std::shared_ptr<Node>> nodes_;
};

void backward(const Tensor& loss);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// a is m x n, bias is 1 x n.
Tensor add_row(const Tensor& a, const Tensor& bias);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor element(const Tensor& a, std::size_t r, std::size_t c);

// axis 0 normalizes each column, axis 1 normalizes each row.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);

inline constexpr double kKlFloor = 1e-8;

// sum_i p_i ln(p_i / q_i) over all entries. q is floored at kKlFloor and renormalized.
Tensor kl_divergence(const Tensor& p, const Tensor& q);
Tensor mse(const Tensor& prediction, const Tensor& target);

}  // namespace prior::ad
