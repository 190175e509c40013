#include "hst/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace hst {

ShapeError::ShapeError(NodeId node, std::string_view op, const std::string& detail)
    : std::invalid_argument("node " + std::to_string(node) + " (" + std::string(op) + "): " + detail),
      node_(node) {}

const Tensor& GradientMap::at(NodeId id) const {
    if (!contains(id)) {
        throw std::out_of_range("no gradient recorded for node " + std::to_string(id));
    }
    return *grads_[id];
}

NodeId Graph::parameter(Tensor value) {
    Node node;
    node.value = std::move(value);
    node.trainable = true;
    node.requires_grad = true;
    nodes_.push_back(std::move(node));
    parameters_.push_back(nodes_.size() - 1);
    return nodes_.size() - 1;
}

NodeId Graph::constant(Tensor value) {
    Node node;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return nodes_.size() - 1;
}

Tensor Graph::evaluate(NodeId id, const Node& node) const {
    std::vector<const Tensor*> in;
    in.reserve(node.inputs.size());
    for (NodeId input : node.inputs) in.push_back(&nodes_[input].value);
    try {
        return node.op->forward(in);
    } catch (const std::invalid_argument& e) {
        throw ShapeError(id, node.op->name(), e.what());
    }
}

NodeId Graph::apply(std::unique_ptr<Op> op, std::vector<NodeId> inputs) {
    const NodeId id = nodes_.size();
    Node node;
    node.op = std::move(op);
    node.inputs = std::move(inputs);
    for (NodeId input : node.inputs) {
        if (input >= id) throw ShapeError(id, node.op->name(), "input node " + std::to_string(input) + " does not exist");
        node.requires_grad = node.requires_grad || nodes_[input].requires_grad;
    }
    node.value = evaluate(id, node);
    nodes_.push_back(std::move(node));
    return id;
}

void Graph::set_value(NodeId leaf, Tensor value) {
    Node& node = nodes_.at(leaf);
    if (node.op) throw std::logic_error("set_value on non-leaf node " + std::to_string(leaf));
    if (node.value.shape() != value.shape()) {
        throw ShapeError(leaf, "leaf", "expected " + shape_string(node.value.shape()) + ", got " +
                                           shape_string(value.shape()));
    }
    node.value = std::move(value);
}

const Tensor& Graph::forward(NodeId output) {
    for (NodeId id = 0; id <= output && id < nodes_.size(); ++id) {
        if (nodes_[id].op) nodes_[id].value = evaluate(id, nodes_[id]);
    }
    return nodes_.at(output).value;
}

GradientMap Graph::backward(NodeId loss) const {
    const Node& loss_node = nodes_.at(loss);
    if (loss_node.value.size() != 1) {
        throw std::invalid_argument("backward: loss node " + std::to_string(loss) + " has shape " +
                                    shape_string(loss_node.value.shape()) + ", expected a scalar");
    }
    std::vector<std::optional<Tensor>> grads(nodes_.size());
    for (NodeId id = 0; id <= loss; ++id) {
        if (nodes_[id].requires_grad) grads[id] = Tensor(nodes_[id].value.shape(), 0.0);
    }
    if (!loss_node.requires_grad) {
        for (NodeId p : parameters_) grads[p] = Tensor(nodes_[p].value.shape(), 0.0);
        return GradientMap(std::move(grads));
    }
    grads[loss]->fill(1.0);

    std::vector<const Tensor*> in;
    std::vector<Tensor*> grad_in;
    for (NodeId id = loss + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.op || !node.requires_grad) continue;
        in.clear();
        grad_in.clear();
        for (NodeId input : node.inputs) {
            in.push_back(&nodes_[input].value);
            grad_in.push_back(nodes_[input].requires_grad ? &*grads[input] : nullptr);
        }
        node.op->backward(in, node.value, *grads[id], grad_in);
    }
    return GradientMap(std::move(grads));
}

namespace {

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

std::size_t last_dim(const Tensor& t) { return t.rank() == 0 ? 1 : t.shape().back(); }

Shape drop_last(const Shape& s) { return s.empty() ? s : Shape(s.begin(), s.end() - 1); }

class MatMul final : public Op {
public:
    std::string_view name() const override { return "matmul"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                "cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
        Tensor out({a.dim(0), b.dim(1)});
        mm_nn(a.dim(0), a.dim(1), b.dim(1), a.data(), b.data(), out.data());
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
        if (gin[0]) mm_nt(m, n, k, g.data(), b.data(), gin[0]->data());
        if (gin[1]) mm_tn(m, k, n, a.data(), g.data(), gin[1]->data());
    }
};

class BatchMatMul final : public Op {
public:
    explicit BatchMatMul(bool transpose_b) : transpose_b_(transpose_b) {}
    std::string_view name() const override { return "batch_matmul"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        const bool ok = a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) &&
                        a.dim(2) == (transpose_b_ ? b.dim(2) : b.dim(1));
        require(ok, "cannot batch-multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()) +
                        (transpose_b_ ? "^T" : ""));
        const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
        const std::size_t n = transpose_b_ ? b.dim(1) : b.dim(2);
        Tensor out({batch, m, n});
        for (std::size_t i = 0; i < batch; ++i) {
            const double* ap = a.data() + i * m * k;
            const double* bp = b.data() + i * k * n;
            double* cp = out.data() + i * m * n;
            if (transpose_b_) {
                mm_nt(m, k, n, ap, bp, cp);
            } else {
                mm_nn(m, k, n, ap, bp, cp);
            }
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = out.dim(2);
        for (std::size_t i = 0; i < batch; ++i) {
            const double* ap = a.data() + i * m * k;
            const double* bp = b.data() + i * k * n;
            const double* gp = g.data() + i * m * n;
            if (transpose_b_) {
                if (gin[0]) mm_nn(m, n, k, gp, bp, gin[0]->data() + i * m * k);
                if (gin[1]) mm_tn(m, n, k, gp, ap, gin[1]->data() + i * k * n);
            } else {
                if (gin[0]) mm_nt(m, n, k, gp, bp, gin[0]->data() + i * m * k);
                if (gin[1]) mm_tn(m, k, n, ap, gp, gin[1]->data() + i * k * n);
            }
        }
    }

private:
    bool transpose_b_;
};

class Transpose final : public Op {
public:
    std::string_view name() const override { return "transpose"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() == 2, "transpose needs rank 2, got " + shape_string(a.shape()));
        Tensor out({a.dim(1), a.dim(0)});
        for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j) gin[0]->at(i, j) += g.at(j, i);
    }
};

class SwapLeading final : public Op {
public:
    std::string_view name() const override { return "swap_leading"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() == 3, "swap_leading needs rank 3, got " + shape_string(a.shape()));
        Tensor out({a.dim(1), a.dim(0), a.dim(2)});
        const std::size_t inner = a.dim(2);
        for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j)
                std::copy_n(a.data() + (i * a.dim(1) + j) * inner, inner, out.data() + (j * a.dim(0) + i) * inner);
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const std::size_t inner = a.dim(2);
        for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j)
                for (std::size_t k = 0; k < inner; ++k) gin[0]->at(i, j, k) += g.at(j, i, k);
    }
};

class Reshape final : public Op {
public:
    explicit Reshape(Shape shape) : shape_(std::move(shape)) {}
    std::string_view name() const override { return "reshape"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        require(shape_size(shape_) == in[0]->size(),
                "cannot reshape " + shape_string(in[0]->shape()) + " to " + shape_string(shape_));
        return in[0]->reshaped(shape_);
    }
    void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
    }

private:
    Shape shape_;
};

class SliceRows final : public Op {
public:
    SliceRows(std::size_t start, std::size_t count) : start_(start), count_(count) {}
    std::string_view name() const override { return "slice_rows"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() == 2 && start_ + count_ <= a.dim(0),
                "rows [" + std::to_string(start_) + "," + std::to_string(start_ + count_) + ") outside " +
                    shape_string(a.shape()));
        const std::size_t cols = a.dim(1);
        Tensor out({count_, cols});
        std::copy_n(a.data() + start_ * cols, count_ * cols, out.data());
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        double* dst = gin[0]->data() + start_ * in[0]->dim(1);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

private:
    std::size_t start_;
    std::size_t count_;
};

class RepeatBatch final : public Op {
public:
    explicit RepeatBatch(std::size_t batch) : batch_(batch) {}
    std::string_view name() const override { return "repeat_batch"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        Shape shape{batch_};
        shape.insert(shape.end(), a.shape().begin(), a.shape().end());
        Tensor out(shape);
        for (std::size_t b = 0; b < batch_; ++b) std::copy_n(a.data(), a.size(), out.data() + b * a.size());
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const std::size_t n = in[0]->size();
        for (std::size_t b = 0; b < batch_; ++b)
            for (std::size_t i = 0; i < n; ++i) (*gin[0])[i] += g[b * n + i];
    }

private:
    std::size_t batch_;
};

class BroadcastScalar final : public Op {
public:
    explicit BroadcastScalar(Shape shape) : shape_(std::move(shape)) {}
    std::string_view name() const override { return "broadcast_scalar"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        require(in[0]->size() == 1, "broadcast_scalar needs one element, got " + shape_string(in[0]->shape()));
        return Tensor(shape_, (*in[0])[0]);
    }
    void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        double acc = 0.0;
        for (double v : g.values()) acc += v;
        (*gin[0])[0] += acc;
    }

private:
    Shape shape_;
};

enum class Binary { add, sub, mul };

class Elementwise final : public Op {
public:
    explicit Elementwise(Binary kind) : kind_(kind) {}
    std::string_view name() const override {
        switch (kind_) {
            case Binary::add: return "add";
            case Binary::sub: return "sub";
            case Binary::mul: return "mul";
        }
        return "binary";
    }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        require(a.shape() == b.shape(), "operand shapes " + shape_string(a.shape()) + " and " +
                                            shape_string(b.shape()) + " differ");
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) {
            switch (kind_) {
                case Binary::add: out[i] = a[i] + b[i]; break;
                case Binary::sub: out[i] = a[i] - b[i]; break;
                case Binary::mul: out[i] = a[i] * b[i]; break;
            }
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (kind_) {
                case Binary::add:
                    if (gin[0]) (*gin[0])[i] += g[i];
                    if (gin[1]) (*gin[1])[i] += g[i];
                    break;
                case Binary::sub:
                    if (gin[0]) (*gin[0])[i] += g[i];
                    if (gin[1]) (*gin[1])[i] -= g[i];
                    break;
                case Binary::mul:
                    if (gin[0]) (*gin[0])[i] += g[i] * b[i];
                    if (gin[1]) (*gin[1])[i] += g[i] * a[i];
                    break;
            }
        }
    }

private:
    Binary kind_;
};

class AddBias final : public Op {
public:
    std::string_view name() const override { return "add_bias"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        const Tensor& bias = *in[1];
        require(a.rank() >= 1 && bias.size() == last_dim(a),
                "bias " + shape_string(bias.shape()) + " does not match last axis of " + shape_string(a.shape()));
        Tensor out = a;
        const std::size_t n = bias.size();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias[i % n];
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const std::size_t n = in[1]->size();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (gin[0]) (*gin[0])[i] += g[i];
            if (gin[1]) (*gin[1])[i % n] += g[i];
        }
    }
};

class Affine final : public Op {
public:
    Affine(double factor, double offset) : factor_(factor), offset_(offset) {}
    std::string_view name() const override { return offset_ == 0.0 ? "scale" : "add_constant"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        Tensor out = *in[0];
        for (double& v : out.values()) v = v * factor_ + offset_;
        return out;
    }
    void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * factor_;
    }

private:
    double factor_;
    double offset_;
};

enum class Unary { relu, sigmoid, log };

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

class Pointwise final : public Op {
public:
    explicit Pointwise(Unary kind) : kind_(kind) {}
    std::string_view name() const override {
        switch (kind_) {
            case Unary::relu: return "relu";
            case Unary::sigmoid: return "sigmoid";
            case Unary::log: return "log";
        }
        return "unary";
    }
    Tensor forward(std::span<const Tensor* const> in) const override {
        Tensor out = *in[0];
        for (double& v : out.values()) {
            switch (kind_) {
                case Unary::relu: v = v > 0.0 ? v : 0.0; break;
                case Unary::sigmoid: v = stable_sigmoid(v); break;
                case Unary::log: v = std::log(v); break;
            }
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& x = *in[0];
        for (std::size_t i = 0; i < g.size(); ++i) {
            switch (kind_) {
                case Unary::relu: (*gin[0])[i] += x[i] > 0.0 ? g[i] : 0.0; break;
                case Unary::sigmoid: (*gin[0])[i] += g[i] * out[i] * (1.0 - out[i]); break;
                case Unary::log: (*gin[0])[i] += g[i] / x[i]; break;
            }
        }
    }

private:
    Unary kind_;
};

class Softmax final : public Op {
public:
    std::string_view name() const override { return "softmax"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() >= 1 && last_dim(a) > 0, "softmax needs a nonempty last axis");
        Tensor out(a.shape());
        const std::size_t n = last_dim(a);
        for (std::size_t row = 0; row < a.size() / n; ++row) {
            const double* x = a.data() + row * n;
            double* y = out.data() + row * n;
            const double peak = *std::max_element(x, x + n);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                y[j] = std::exp(x[j] - peak);
                total += y[j];
            }
            for (std::size_t j = 0; j < n; ++j) y[j] /= total;
        }
        return out;
    }
    void backward(std::span<const Tensor* const>, const Tensor& out, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const std::size_t n = last_dim(out);
        for (std::size_t row = 0; row < out.size() / n; ++row) {
            const double* y = out.data() + row * n;
            const double* gy = g.data() + row * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
            double* gx = gin[0]->data() + row * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    }
};

class Sum final : public Op {
public:
    explicit Sum(bool average) : average_(average) {}
    std::string_view name() const override { return average_ ? "mean" : "sum"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        double acc = 0.0;
        for (double v : in[0]->values()) acc += v;
        if (average_) {
            require(in[0]->size() > 0, "mean of an empty tensor");
            acc /= static_cast<double>(in[0]->size());
        }
        return Tensor::scalar(acc);
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const double scale = average_ ? g[0] / static_cast<double>(in[0]->size()) : g[0];
        for (double& v : gin[0]->values()) v += scale;
    }

private:
    bool average_;
};

class SumLast final : public Op {
public:
    std::string_view name() const override { return "sum_last"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() >= 1, "sum_last needs rank >= 1");
        const std::size_t n = last_dim(a);
        Tensor out(drop_last(a.shape()));
        for (std::size_t row = 0; row < out.size(); ++row) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a[row * n + j];
            out[row] = acc;
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const std::size_t n = last_dim(*in[0]);
        for (std::size_t i = 0; i < in[0]->size(); ++i) (*gin[0])[i] += g[i / n];
    }
};

class WeightedSum final : public Op {
public:
    explicit WeightedSum(Tensor weights) : weights_(std::move(weights)) {}
    std::string_view name() const override { return "weighted_sum"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        require(in[0]->size() == weights_.size(), "weights " + shape_string(weights_.shape()) +
                                                      " do not match " + shape_string(in[0]->shape()));
        double acc = 0.0;
        for (std::size_t i = 0; i < weights_.size(); ++i) acc += weights_[i] * (*in[0])[i];
        return Tensor::scalar(acc);
    }
    void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        for (std::size_t i = 0; i < weights_.size(); ++i) (*gin[0])[i] += g[0] * weights_[i];
    }

private:
    Tensor weights_;
};

class NormalizeRows final : public Op {
public:
    std::string_view name() const override { return "normalize_rows"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        require(a.rank() >= 1, "normalize_rows needs rank >= 1");
        Tensor out(a.shape());
        const std::size_t n = last_dim(a);
        for (std::size_t row = 0; row < a.size() / n; ++row) {
            const double* x = a.data() + row * n;
            double norm = 0.0;
            for (std::size_t j = 0; j < n; ++j) norm += x[j] * x[j];
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[row * n + j] = x[j] / norm;
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const std::size_t n = last_dim(a);
        for (std::size_t row = 0; row < a.size() / n; ++row) {
            const double* x = a.data() + row * n;
            const double* y = out.data() + row * n;
            const double* gy = g.data() + row * n;
            double norm = 0.0;
            for (std::size_t j = 0; j < n; ++j) norm += x[j] * x[j];
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
            double* gx = gin[0]->data() + row * n;
            for (std::size_t j = 0; j < n; ++j) gx[j] += (gy[j] - y[j] * dot) / norm;
        }
    }
};

class Cosine final : public Op {
public:
    std::string_view name() const override { return "cosine"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        require(a.rank() >= 1 && a.shape() == b.shape(),
                "cosine operands " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
        const std::size_t n = last_dim(a);
        Tensor out(drop_last(a.shape()));
        for (std::size_t row = 0; row < out.size(); ++row) {
            out[row] = stats(a.data() + row * n, b.data() + row * n, n).cos;
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const Tensor& a = *in[0];
        const Tensor& b = *in[1];
        const std::size_t n = last_dim(a);
        for (std::size_t row = 0; row < g.size(); ++row) {
            const double* x = a.data() + row * n;
            const double* y = b.data() + row * n;
            const Stats s = stats(x, y, n);
            if (s.na == 0.0 || s.nb == 0.0) continue;
            const double inv = 1.0 / (s.na * s.nb);
            for (std::size_t j = 0; j < n; ++j) {
                if (gin[0]) (*gin[0])[row * n + j] += g[row] * (y[j] * inv - s.raw * x[j] / (s.na * s.na));
                if (gin[1]) (*gin[1])[row * n + j] += g[row] * (x[j] * inv - s.raw * y[j] / (s.nb * s.nb));
            }
        }
    }

private:
    struct Stats {
        double na, nb, raw, cos;
    };
    static Stats stats(const double* x, const double* y, std::size_t n) {
        double dot = 0.0, xx = 0.0, yy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dot += x[j] * y[j];
            xx += x[j] * x[j];
            yy += y[j] * y[j];
        }
        Stats s{std::sqrt(xx), std::sqrt(yy), 0.0, 0.0};
        if (s.na == 0.0 || s.nb == 0.0) return s;
        s.raw = dot / (s.na * s.nb);
        s.cos = std::clamp(s.raw, -1.0, 1.0);
        return s;
    }
};

class PairSum final : public Op {
public:
    explicit PairSum(std::vector<std::pair<std::size_t, std::size_t>> pairs) : pairs_(std::move(pairs)) {}
    std::string_view name() const override { return "pair_sum"; }
    Tensor forward(std::span<const Tensor* const> in) const override {
        const Tensor& u = *in[0];
        const Tensor& v = *in[1];
        require(u.rank() == 2 && v.rank() == 2 && u.dim(1) == v.dim(1),
                "pair_sum operands " + shape_string(u.shape()) + " and " + shape_string(v.shape()) + " differ");
        const std::size_t h = u.dim(1);
        Tensor out({pairs_.size(), h});
        for (std::size_t p = 0; p < pairs_.size(); ++p) {
            const auto [i, j] = pairs_[p];
            require(i < u.dim(0) && j < v.dim(0), "pair index out of range");
            const double* ur = u.data() + i * h;
            const double* vr = v.data() + j * h;
            double* o = out.data() + p * h;
            for (std::size_t k = 0; k < h; ++k) o[k] = ur[k] + vr[k];
        }
        return out;
    }
    void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                  std::span<Tensor* const> gin) const override {
        const std::size_t h = in[0]->dim(1);
        for (std::size_t p = 0; p < pairs_.size(); ++p) {
            const auto [i, j] = pairs_[p];
            const double* gr = g.data() + p * h;
            if (gin[0]) {
                double* dst = gin[0]->data() + i * h;
                for (std::size_t k = 0; k < h; ++k) dst[k] += gr[k];
            }
            if (gin[1]) {
                double* dst = gin[1]->data() + j * h;
                for (std::size_t k = 0; k < h; ++k) dst[k] += gr[k];
            }
        }
    }

private:
    std::vector<std::pair<std::size_t, std::size_t>> pairs_;
};

}  // namespace

namespace ops {

NodeId matmul(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<MatMul>(), {a, b}); }
NodeId batch_matmul(Graph& g, NodeId a, NodeId b, bool transpose_b) {
    return g.apply(std::make_unique<BatchMatMul>(transpose_b), {a, b});
}
NodeId transpose(Graph& g, NodeId a) { return g.apply(std::make_unique<Transpose>(), {a}); }
NodeId swap_leading(Graph& g, NodeId a) { return g.apply(std::make_unique<SwapLeading>(), {a}); }
NodeId reshape(Graph& g, NodeId a, Shape shape) { return g.apply(std::make_unique<Reshape>(std::move(shape)), {a}); }
NodeId slice_rows(Graph& g, NodeId a, std::size_t start, std::size_t count) {
    return g.apply(std::make_unique<SliceRows>(start, count), {a});
}
NodeId repeat_batch(Graph& g, NodeId a, std::size_t batch) {
    return g.apply(std::make_unique<RepeatBatch>(batch), {a});
}
NodeId broadcast_scalar(Graph& g, NodeId scalar, Shape shape) {
    return g.apply(std::make_unique<BroadcastScalar>(std::move(shape)), {scalar});
}
NodeId add(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<Elementwise>(Binary::add), {a, b}); }
NodeId sub(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<Elementwise>(Binary::sub), {a, b}); }
NodeId mul(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<Elementwise>(Binary::mul), {a, b}); }
NodeId add_bias(Graph& g, NodeId a, NodeId bias) { return g.apply(std::make_unique<AddBias>(), {a, bias}); }
NodeId scale(Graph& g, NodeId a, double factor) { return g.apply(std::make_unique<Affine>(factor, 0.0), {a}); }
NodeId add_constant(Graph& g, NodeId a, double offset) {
    return g.apply(std::make_unique<Affine>(1.0, offset), {a});
}
NodeId relu(Graph& g, NodeId a) { return g.apply(std::make_unique<Pointwise>(Unary::relu), {a}); }
NodeId sigmoid(Graph& g, NodeId a) { return g.apply(std::make_unique<Pointwise>(Unary::sigmoid), {a}); }
NodeId log(Graph& g, NodeId a) { return g.apply(std::make_unique<Pointwise>(Unary::log), {a}); }
NodeId softmax(Graph& g, NodeId a) { return g.apply(std::make_unique<Softmax>(), {a}); }
NodeId sum(Graph& g, NodeId a) { return g.apply(std::make_unique<Sum>(false), {a}); }
NodeId mean(Graph& g, NodeId a) { return g.apply(std::make_unique<Sum>(true), {a}); }
NodeId sum_last(Graph& g, NodeId a) { return g.apply(std::make_unique<SumLast>(), {a}); }
NodeId weighted_sum(Graph& g, NodeId a, Tensor weights) {
    return g.apply(std::make_unique<WeightedSum>(std::move(weights)), {a});
}
NodeId normalize_rows(Graph& g, NodeId a) { return g.apply(std::make_unique<NormalizeRows>(), {a}); }
NodeId cosine(Graph& g, NodeId a, NodeId b) { return g.apply(std::make_unique<Cosine>(), {a, b}); }
NodeId pair_sum(Graph& g, NodeId u, NodeId v, std::vector<std::pair<std::size_t, std::size_t>> pairs) {
    return g.apply(std::make_unique<PairSum>(std::move(pairs)), {u, v});
}

}  // namespace ops

}  // namespace hst
