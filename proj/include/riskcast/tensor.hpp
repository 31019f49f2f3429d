#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace riskcast {

using Shape = std::vector<int>;

std::int64_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode;

// Dense row-major float64 tensor participating in a reverse-mode gradient
// tape. Copies are shallow: they alias the same storage and graph node.
// A tensor with no recorded parents is a leaf; leaf gradients accumulate
// additively across backward() calls, intermediate gradients are rebuilt
// on every call.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(std::vector<double> data, Shape shape, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t size() const;
    int ndim() const;
    bool requires_grad() const;
    bool is_leaf() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;
    // Valid after backward() on tensors that require grad.
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;  // scalar tensors only

    // Reverse-mode replay from this scalar through the recorded tape.
    void backward() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;  // empty for leaves

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    void ensure_grad();
};

// Grad recording is on by default; disable it around pure inference to skip
// graph construction. Thread-local, so worker threads default to recording.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
    static bool grad_enabled();

  private:
    bool prev_;
};

// Elementwise / shape ops. `add` also accepts a right operand whose shape is
// a trailing suffix of the left one (bias broadcast over leading axes); no
// other broadcasting is supported.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);  // ln(1 + e^x), overflow-safe
Tensor relu(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);

// Cross-correlation convolution. input [C_in,H,W] or [N,C_in,H,W],
// kernels [C_out,C_in,kh,kw], optional bias [C_out].
// H' = floor((H + 2*padding - kh)/stride) + 1, same for W'.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride = 1, int padding = 0,
              const Tensor& bias = Tensor());

// k x k window, stride k, floor semantics on odd extents.
Tensor max_pool2d(const Tensor& input, int k = 2);

// Max-subtraction stabilized, over the last axis of a 1-D or 2-D tensor.
Tensor softmax(const Tensor& logits);

// Mean over the batch of -log softmax(logits)[label]; logits [N,C].
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace riskcast
