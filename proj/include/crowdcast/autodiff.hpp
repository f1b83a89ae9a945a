#pragma once

#include <functional>
#include <vector>

namespace crowdcast::ad {

using Shape = std::vector<int>;

// Shaped 64-bit float value. `node >= 0` links it into the tape it was
// produced on; `node == -1` marks an untracked constant.
struct Tensor {
    Shape shape;
    std::vector<double> v;
    int node = -1;

    int size() const { return static_cast<int>(v.size()); }
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    bool tracked() const { return node >= 0; }
    double item() const;

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double value);
    static Tensor scalar(double value);
    static Tensor matrix(int r, int c, std::vector<double> values);
    static Tensor row(std::vector<double> values);
};

// Gradients of a backward pass, indexed by node id. Nodes that do not
// influence the output keep an empty slot.
using GradientMap = std::vector<std::vector<double>>;

// Records primitive applications in topological order. One tape per
// forward/backward pass; confined to a single thread.
class Tape {
public:
    // Registers a copy of `t` as a tracked input.
    Tensor leaf(const Tensor& t);

    Tensor add(const Tensor& a, const Tensor& b);
    Tensor sub(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
    Tensor matmul(const Tensor& a, const Tensor& b);
    // Adds a row vector [C] to every row of [R,C].
    Tensor add_rows(const Tensor& m, const Tensor& row);
    Tensor concat_cols(const std::vector<Tensor>& parts);
    Tensor concat_rows(const std::vector<Tensor>& parts);
    Tensor slice_rows(const Tensor& m, int begin, int end);
    Tensor reshape(const Tensor& t, Shape shape);
    Tensor sum(const Tensor& t);
    Tensor mean(const Tensor& t);
    Tensor scale(const Tensor& t, double factor);
    Tensor add_scalar(const Tensor& t, double value);
    Tensor square(const Tensor& t);
    // sqrt(x + eps); finite gradient at x = 0.
    Tensor sqrt_eps(const Tensor& t, double eps = 1e-12);
    Tensor tanh(const Tensor& t);
    Tensor sigmoid(const Tensor& t);
    Tensor relu(const Tensor& t);
    Tensor clamp_min(const Tensor& t, double floor);

    // Gradients of a scalar output w.r.t. every tracked node, accumulated in
    // reverse topological order. Throws NotScalarOutput otherwise.
    GradientMap backward(const Tensor& output);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

private:
    using BackFn = std::function<void(const std::vector<double>& g, GradientMap& grads)>;
    struct Node {
        int size;
        BackFn back;
    };
    std::vector<Node> nodes_;

    Tensor record(Shape shape, std::vector<double> values, BackFn back);
    static void accumulate(GradientMap& grads, int node, int size, int index, double value);
};

// Compares backward() against central finite differences of `f` at `x`.
// Returns the max over coordinates of |analytic - numeric| / max(1, |numeric|).
double finite_difference_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                               const Tensor& x, double h = 1e-5);

}  // namespace crowdcast::ad
