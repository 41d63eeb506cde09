#include "flash/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace flash {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

void detail::Node::accumulate(std::vector<double>&& g) {
    if (grad.size() != data.size()) {
        grad = std::move(g);
        return;
    }
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i];
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::Node>()) {
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<detail::Node>()) {
    if (values.size() != shape_numel(shape))
        throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                    " values do not fill shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
}

const Shape& Tensor::shape() const {
    if (!node_) throw std::logic_error("tensor: use of undefined tensor");
    return node_->shape;
}

std::size_t Tensor::size(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size())
        throw std::out_of_range("tensor: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
    shape();
    return node_->data;
}

std::span<double> Tensor::mutable_data() {
    shape();
    return node_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw std::logic_error("tensor: item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    shape();
    node_->requires_grad = on;
    return *this;
}

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->data.size() && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) return {};
    return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
    shape();
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
    if (numel() != 1)
        throw std::logic_error("backward: loss must be scalar, got shape " + shape_str(shape()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; reversed order visits consumers before producers.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            detail::Node* child = n->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (auto* n : order)
        if (!n->is_leaf()) n->grad.clear();
    node_->grad_buffer()[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
        if (!n->is_leaf()) std::vector<double>().swap(n->grad);
    }
}

Tensor Tensor::detach() const {
    Tensor t(shape(), node_->data);
    return t;
}

Tensor Tensor::clone() const {
    Tensor t(shape(), node_->data);
    t.node_->requires_grad = node_->requires_grad && node_->is_leaf();
    return t;
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                           std::function<void(detail::Node&)> backward) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    if (g_grad_enabled) {
        bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& t : inputs) node->inputs.push_back(t.node_);
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    engine_.seed(seq);
}

Rng Rng::split(std::uint64_t stream) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    std::uint64_t child = 0;
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    child = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    return Rng(child);
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::uint64_t Rng::next_u64() { return engine_(); }

}  // namespace flash
