#include "riskcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace riskcast {

namespace {

thread_local bool g_grad_enabled = true;

double stable_softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data, bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    if (shape_size(shape) != static_cast<std::int64_t>(data.size())) {
        throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                    " does not match shape " + shape_str(shape));
    }
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return n;
}

// Builds the result node and records the op on the tape when recording is on
// and any input requires grad.
Tensor make_op(Shape shape, std::vector<double> data,
               std::vector<std::shared_ptr<TensorNode>> parents,
               std::function<void(TensorNode&)> backprop) {
    bool rg = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) {
            if (p && p->requires_grad) {
                rg = true;
                break;
            }
        }
    }
    auto n = make_node(std::move(shape), std::move(data), rg);
    if (rg) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor(n);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

bool is_suffix(const Shape& suffix, const Shape& full) {
    if (suffix.size() > full.size()) return false;
    return std::equal(suffix.rbegin(), suffix.rend(), full.rbegin());
}

}  // namespace

std::int64_t shape_size(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void TensorNode::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)), 0.0);
    return Tensor(make_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> d(static_cast<std::size_t>(shape_size(shape)), value);
    return Tensor(make_node(std::move(shape), std::move(d), requires_grad));
}

Tensor Tensor::from_data(std::vector<double> data, Shape shape, bool requires_grad) {
    return Tensor(make_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor(make_node({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::size() const { return node_->size(); }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::is_leaf() const { return node_->parents.empty(); }

std::vector<double>& Tensor::data() { return node_->data; }
const std::vector<double>& Tensor::data() const { return node_->data; }

std::vector<double>& Tensor::grad() {
    if (!node_->requires_grad) throw std::logic_error("grad(): tensor does not require grad");
    node_->ensure_grad();
    return node_->grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!node_->requires_grad) throw std::logic_error("grad(): tensor does not require grad");
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->data.size(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw std::logic_error("item(): tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->data[0];
}

void Tensor::backward() const {
    if (!node_) throw std::logic_error("backward(): undefined tensor");
    if (size() != 1) {
        throw std::invalid_argument("backward(): loss must be scalar, got shape " + shape_str(shape()));
    }
    if (!node_->requires_grad) return;

    // Post-order DFS over grad-requiring ancestry; reversing it replays the
    // tape from the loss toward the leaves, touching each node exactly once.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        bool descended = false;
        while (idx < n->parents.size()) {
            TensorNode* p = n->parents[idx++].get();
            if (p->requires_grad && visited.insert(p).second) {
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    // Fresh grads for intermediates; leaves keep accumulating across calls.
    for (TensorNode* n : order) {
        if (!n->parents.empty()) {
            n->grad.assign(n->data.size(), 0.0);
        } else {
            n->ensure_grad();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.data());
        const auto& bd = b.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
        return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i];
            }
        });
    }
    if (is_suffix(b.shape(), a.shape())) {
        // Bias broadcast over the leading axes of a.
        std::int64_t bs = b.size();
        std::int64_t rep = a.size() / bs;
        std::vector<double> out(a.data());
        const auto& bd = b.data();
        for (std::int64_t r = 0; r < rep; ++r) {
            double* row = out.data() + r * bs;
            for (std::int64_t j = 0; j < bs; ++j) row[j] += bd[j];
        }
        return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [bs, rep](TensorNode& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
            }
            if (pb.requires_grad) {
                for (std::int64_t r = 0; r < rep; ++r) {
                    const double* row = self.grad.data() + r * bs;
                    for (std::int64_t j = 0; j < bs; ++j) pb.grad[j] += row[j];
                }
            }
        });
    }
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
    return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    std::vector<double> out(a.data());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
    return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.data[i];
        }
        if (pb.requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= s;
    return make_op(a.shape(), std::move(out), {a.node()}, [s](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * s;
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.data());
    for (double& v : out) v += s;
    return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    });
}

Tensor square(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& v : out) v *= v;
    return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i] * 2.0 * pa.data[i];
        }
    });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& v : out) v = std::log(v);
    return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] / pa.data[i];
    });
}

Tensor softplus(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& v : out) v = stable_softplus(v);
    return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += self.grad[i] * sigmoid(pa.data[i]);
        }
    });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.data());
    for (double& v : out) v = v > 0.0 ? v : 0.0;
    return make_op(a.shape(), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.data[i] > 0.0) pa.grad[i] += self.grad[i];
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    }
    std::vector<double> out(a.data());
    return make_op(std::move(shape), std::move(out), {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_op({1}, {s}, {a.node()}, [](TensorNode& self) {
        auto& pa = *self.parents[0];
        double g = self.grad[0];
        for (double& v : pa.grad) v += g;
    });
}

Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    double inv = 1.0 / static_cast<double>(a.size());
    return make_op({1}, {s * inv}, {a.node()}, [inv](TensorNode& self) {
        auto& pa = *self.parents[0];
        double g = self.grad[0] * inv;
        for (double& v : pa.grad) v += g;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2) {
        throw std::invalid_argument("matmul: expects 2-D operands, got " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    }
    int m = a.shape()[0], k = a.shape()[1];
    int k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    const auto& ad = a.data();
    const auto& bd = b.data();
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            double av = ad[static_cast<std::size_t>(i) * k + kk];
            const double* brow = bd.data() + static_cast<std::size_t>(kk) * n;
            double* orow = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_op({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        // dA = dC * B^T, dB = A^T * dC
        if (pa.requires_grad) {
            for (int i = 0; i < m; ++i) {
                const double* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
                double* garow = pa.grad.data() + static_cast<std::size_t>(i) * k;
                for (int kk = 0; kk < k; ++kk) {
                    const double* brow = pb.data.data() + static_cast<std::size_t>(kk) * n;
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                    garow[kk] += acc;
                }
            }
        }
        if (pb.requires_grad) {
            for (int i = 0; i < m; ++i) {
                const double* arow = pa.data.data() + static_cast<std::size_t>(i) * k;
                const double* grow = self.grad.data() + static_cast<std::size_t>(i) * n;
                for (int kk = 0; kk < k; ++kk) {
                    double av = arow[kk];
                    if (av == 0.0) continue;
                    double* gbrow = pb.grad.data() + static_cast<std::size_t>(kk) * n;
                    for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                }
            }
        }
    });
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, int padding, const Tensor& bias) {
    bool batched = input.ndim() == 4;
    if (!batched && input.ndim() != 3) {
        throw std::invalid_argument("conv2d: input must be [C,H,W] or [N,C,H,W], got " +
                                    shape_str(input.shape()));
    }
    if (kernels.ndim() != 4) {
        throw std::invalid_argument("conv2d: kernels must be [C_out,C_in,kh,kw], got " +
                                    shape_str(kernels.shape()));
    }
    if (stride < 1 || padding < 0) throw std::invalid_argument("conv2d: bad stride/padding");

    const Shape& is = input.shape();
    int N = batched ? is[0] : 1;
    int C = is[batched ? 1 : 0], H = is[batched ? 2 : 1], W = is[batched ? 3 : 2];
    int CO = kernels.shape()[0], CI = kernels.shape()[1];
    int KH = kernels.shape()[2], KW = kernels.shape()[3];
    if (CI != C) {
        throw std::invalid_argument("conv2d: input channels " + shape_str(input.shape()) +
                                    " do not match kernels " + shape_str(kernels.shape()));
    }
    if (KH > H + 2 * padding || KW > W + 2 * padding) {
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernels.shape()) +
                                    " larger than padded input " + shape_str(input.shape()) +
                                    " with padding " + std::to_string(padding));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.shape()[0] != CO)) {
        throw std::invalid_argument("conv2d: bias must be [C_out], got " + shape_str(bias.shape()));
    }
    int OH = (H + 2 * padding - KH) / stride + 1;
    int OW = (W + 2 * padding - KW) / stride + 1;

    std::vector<double> out(static_cast<std::size_t>(N) * CO * OH * OW, 0.0);
    const auto& xd = input.data();
    const auto& kd = kernels.data();
    const std::size_t in_plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;

    if (bias.defined()) {
        const auto& bd = bias.data();
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < CO; ++co) {
                double bv = bd[co];
                double* op = out.data() + (static_cast<std::size_t>(n) * CO + co) * out_plane;
                for (std::size_t i = 0; i < out_plane; ++i) op[i] = bv;
            }
        }
    }

    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < CO; ++co) {
            double* op = out.data() + (static_cast<std::size_t>(n) * CO + co) * out_plane;
            for (int ci = 0; ci < C; ++ci) {
                const double* xp = xd.data() + (static_cast<std::size_t>(n) * C + ci) * in_plane;
                const double* kp = kd.data() + (static_cast<std::size_t>(co) * C + ci) * KH * KW;
                for (int kh = 0; kh < KH; ++kh) {
                    for (int kw = 0; kw < KW; ++kw) {
                        double wv = kp[kh * KW + kw];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < OH; ++oh) {
                            int ih = oh * stride - padding + kh;
                            if (ih < 0 || ih >= H) continue;
                            const double* xrow = xp + static_cast<std::size_t>(ih) * W;
                            double* orow = op + static_cast<std::size_t>(oh) * OW;
                            for (int ow = 0; ow < OW; ++ow) {
                                int iw = ow * stride - padding + kw;
                                if (iw < 0 || iw >= W) continue;
                                orow[ow] += wv * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }

    Shape out_shape = batched ? Shape{N, CO, OH, OW} : Shape{CO, OH, OW};
    std::vector<std::shared_ptr<TensorNode>> parents{input.node(), kernels.node()};
    if (bias.defined()) parents.push_back(bias.node());

    auto bp = [N, C, H, W, CO, KH, KW, OH, OW, stride, padding, in_plane, out_plane](TensorNode& self) {
        auto& px = *self.parents[0];
        auto& pk = *self.parents[1];
        TensorNode* pbias = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        for (int n = 0; n < N; ++n) {
            for (int co = 0; co < CO; ++co) {
                const double* gp = self.grad.data() + (static_cast<std::size_t>(n) * CO + co) * out_plane;
                if (pbias && pbias->requires_grad) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < out_plane; ++i) acc += gp[i];
                    pbias->grad[co] += acc;
                }
                for (int ci = 0; ci < C; ++ci) {
                    const double* xp = px.data.data() + (static_cast<std::size_t>(n) * C + ci) * in_plane;
                    const double* kp = pk.data.data() + (static_cast<std::size_t>(co) * C + ci) * KH * KW;
                    double* gxp = px.requires_grad
                                      ? px.grad.data() + (static_cast<std::size_t>(n) * C + ci) * in_plane
                                      : nullptr;
                    double* gkp = pk.requires_grad
                                      ? pk.grad.data() + (static_cast<std::size_t>(co) * C + ci) * KH * KW
                                      : nullptr;
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            double wv = kp[kh * KW + kw];
                            double wgrad = 0.0;
                            for (int oh = 0; oh < OH; ++oh) {
                                int ih = oh * stride - padding + kh;
                                if (ih < 0 || ih >= H) continue;
                                const double* grow = gp + static_cast<std::size_t>(oh) * OW;
                                const double* xrow = xp + static_cast<std::size_t>(ih) * W;
                                double* gxrow = gxp ? gxp + static_cast<std::size_t>(ih) * W : nullptr;
                                for (int ow = 0; ow < OW; ++ow) {
                                    int iw = ow * stride - padding + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    double g = grow[ow];
                                    wgrad += g * xrow[iw];
                                    if (gxrow) gxrow[iw] += g * wv;
                                }
                            }
                            if (gkp) gkp[kh * KW + kw] += wgrad;
                        }
                    }
                }
            }
        }
    };
    return make_op(std::move(out_shape), std::move(out), std::move(parents), std::move(bp));
}

Tensor max_pool2d(const Tensor& input, int k) {
    bool batched = input.ndim() == 4;
    if (!batched && input.ndim() != 3) {
        throw std::invalid_argument("max_pool2d: input must be [C,H,W] or [N,C,H,W], got " +
                                    shape_str(input.shape()));
    }
    if (k < 1) throw std::invalid_argument("max_pool2d: window must be >= 1");
    const Shape& is = input.shape();
    int N = batched ? is[0] : 1;
    int C = is[batched ? 1 : 0], H = is[batched ? 2 : 1], W = is[batched ? 3 : 2];
    int OH = H / k, OW = W / k;
    if (OH < 1 || OW < 1) {
        throw std::invalid_argument("max_pool2d: window " + std::to_string(k) +
                                    " larger than input " + shape_str(input.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(N) * C * OH * OW);
    std::vector<std::int64_t> argmax(out.size());
    const auto& xd = input.data();
    std::size_t oi = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
            for (int oh = 0; oh < OH; ++oh) {
                for (int ow = 0; ow < OW; ++ow) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::int64_t best_idx = -1;
                    for (int dh = 0; dh < k; ++dh) {
                        for (int dw = 0; dw < k; ++dw) {
                            std::size_t idx = base + static_cast<std::size_t>(oh * k + dh) * W + (ow * k + dw);
                            if (xd[idx] > best) {
                                best = xd[idx];
                                best_idx = static_cast<std::int64_t>(idx);
                            }
                        }
                    }
                    out[oi] = best;
                    argmax[oi] = best_idx;
                    ++oi;
                }
            }
        }
    }
    Shape out_shape = batched ? Shape{N, C, OH, OW} : Shape{C, OH, OW};
    return make_op(std::move(out_shape), std::move(out), {input.node()},
                   [argmax = std::move(argmax)](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           pa.grad[static_cast<std::size_t>(argmax[i])] += self.grad[i];
                       }
                   });
}

Tensor softmax(const Tensor& logits) {
    int nd = logits.ndim();
    if (nd != 1 && nd != 2) {
        throw std::invalid_argument("softmax: expects 1-D or 2-D logits, got " + shape_str(logits.shape()));
    }
    int rows = nd == 2 ? logits.shape()[0] : 1;
    int cols = nd == 2 ? logits.shape()[1] : logits.shape()[0];
    if (cols < 2) throw std::invalid_argument("softmax: needs at least 2 classes");
    const auto& xd = logits.data();
    for (double v : xd) {
        if (std::isnan(v)) throw std::runtime_error("softmax: NaN in logits");
    }
    std::vector<double> out(xd.size());
    for (int r = 0; r < rows; ++r) {
        const double* x = xd.data() + static_cast<std::size_t>(r) * cols;
        double* o = out.data() + static_cast<std::size_t>(r) * cols;
        double m = x[0];
        for (int j = 1; j < cols; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < cols; ++j) {
            o[j] = std::exp(x[j] - m);
            s += o[j];
        }
        for (int j = 0; j < cols; ++j) o[j] /= s;
    }
    return make_op(logits.shape(), std::move(out), {logits.node()}, [rows, cols](TensorNode& self) {
        auto& pa = *self.parents[0];
        for (int r = 0; r < rows; ++r) {
            const double* s = self.data.data() + static_cast<std::size_t>(r) * cols;
            const double* g = self.grad.data() + static_cast<std::size_t>(r) * cols;
            double* gx = pa.grad.data() + static_cast<std::size_t>(r) * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += g[j] * s[j];
            for (int j = 0; j < cols; ++j) gx[j] += s[j] * (g[j] - dot);
        }
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2) {
        throw std::invalid_argument("cross_entropy: logits must be [N,C], got " + shape_str(logits.shape()));
    }
    int N = logits.shape()[0], C = logits.shape()[1];
    if (N == 0 || labels.empty()) throw std::invalid_argument("cross_entropy: empty batch");
    if (static_cast<int>(labels.size()) != N) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(N) + " rows");
    }
    for (int y : labels) {
        if (y < 0 || y >= C) throw std::invalid_argument("cross_entropy: label out of range");
    }
    const auto& xd = logits.data();
    std::vector<double> probs(xd.size());
    double loss = 0.0;
    for (int r = 0; r < N; ++r) {
        const double* x = xd.data() + static_cast<std::size_t>(r) * C;
        double* p = probs.data() + static_cast<std::size_t>(r) * C;
        double m = x[0];
        for (int j = 1; j < C; ++j) m = std::max(m, x[j]);
        double s = 0.0;
        for (int j = 0; j < C; ++j) {
            p[j] = std::exp(x[j] - m);
            s += p[j];
        }
        for (int j = 0; j < C; ++j) p[j] /= s;
        loss += (m + std::log(s)) - x[labels[r]];
    }
    loss /= N;
    return make_op({1}, {loss}, {logits.node()},
                   [N, C, labels, probs = std::move(probs)](TensorNode& self) {
                       auto& pa = *self.parents[0];
                       double g = self.grad[0] / N;
                       for (int r = 0; r < N; ++r) {
                           const double* p = probs.data() + static_cast<std::size_t>(r) * C;
                           double* gx = pa.grad.data() + static_cast<std::size_t>(r) * C;
                           for (int j = 0; j < C; ++j) gx[j] += g * p[j];
                           gx[labels[r]] -= g;
                       }
                   });
}

}  // namespace riskcast
