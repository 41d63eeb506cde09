#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace flash {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the autodiff graph. `backward` reads this node's grad and
// accumulates into the grads of `inputs`.
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;

    bool is_leaf() const { return inputs.empty(); }
    std::vector<double>& grad_buffer();
    // Adds g into grad, taking ownership when grad is not yet allocated.
    void accumulate(std::vector<double>&& g);
};

}  // namespace detail

// Dense double-precision tensor with reverse-mode differentiation.
//
// A Tensor is a handle: copies share storage and graph position, as in most
// define-by-run frameworks. Use clone() for an independent copy.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double value);
    // Leaf tensor that participates in gradients.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t flat_index) const { return data()[flat_index]; }

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    bool has_grad() const;
    // Empty span when no gradient has been accumulated.
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    // Reverse-mode sweep from this scalar. Leaf grads accumulate across
    // calls; interior grads are released once propagated.
    void backward() const;

    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    // Builds an op result. The backward closure is only attached when grad
    // mode is on and at least one input requires a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values,
                              std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward);

   private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

// Thread-local switch; while a guard lives, ops build no graph.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

bool grad_mode_enabled();

// Seeded 64-bit generator. split() derives an independent child stream so
// each layer or sample gets its own reproducible sequence.
class Rng {
   public:
    explicit Rng(std::uint64_t seed = 0);

    Rng split(std::uint64_t stream) const;
    std::uint64_t seed() const { return seed_; }

    double uniform();
    double normal(double mean = 0.0, double stddev = 1.0);
    std::uint64_t next_u64();
    std::mt19937_64& engine() { return engine_; }

   private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace flash
