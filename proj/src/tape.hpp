#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vec.hpp"

namespace dht {

// Dynamic reverse-mode tape over vector-valued nodes (a scalar is a
// size-1 vector). Fixed primitive set; enough to differentiate unrolled
// learner updates through small MLP policies.
class Tape {
public:
    enum class Op : std::uint8_t {
        Leaf,          // differentiable input
        Constant,      // value only, no gradient flow
        Add,           // a + b elementwise
        Sub,           // a - b elementwise
        Mul,           // a * b elementwise
        Scale,         // c * a, constant c
        SMul,          // scalar node s times vector a
        SubS,          // a - s broadcast, scalar node s
        Dot,           // <a, b> -> scalar
        MatVec,        // matrix node a (rows x cols) times vector b
        Sigmoid,
        Tanh,
        Relu,
        LeakyRelu,     // slope c on the negative side
        Softplus,      // log(1 + exp(a)), stable
        Log,
        Exp,
        Sum,           // sum of entries -> scalar
        SqNorm,        // sum of squares -> scalar
        ClampThrough,  // clamp to [lo, hi]; gradient passes through
        Concat,        // [a, b]
        Slice,         // a[off .. off+len)
    };

    int size() const { return static_cast<int>(nodes_.size()); }
    void clear() { nodes_.clear(); }

    std::span<const double> value(int id) const { return nodes_[id].val; }
    std::span<const double> adjoint(int id) const { return nodes_[id].adj; }
    double scalar(int id) const { return nodes_[id].val[0]; }
    bool is_leaf(int id) const { return nodes_[id].op == Op::Leaf; }

    int leaf(std::span<const double> v);
    int leaf_matrix(const Matrix& m);
    int constant(std::span<const double> v);
    int constant_scalar(double v);
    int constant_matrix(const Matrix& m);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double c);
    int smul(int s, int a);
    int sub_scalar(int a, int s);
    int dot(int a, int b);
    int matvec(int m, int x);
    int sigmoid(int a);
    int tanh_(int a);
    int relu(int a);
    int leaky_relu(int a, double slope);
    int softplus(int a);
    int log_(int a);
    int exp_(int a);
    int sum(int a);
    int sqnorm_(int a);
    int clamp_through(int a, std::span<const double> lo, std::span<const double> hi);
    int concat(int a, int b);
    int slice(int a, int off, int len);

    // Reverse pass from a scalar root: seeds the root adjoint with 1 and
    // visits every node exactly once in reverse topological order. Values
    // are left untouched; adjoints of all nodes become readable.
    void backward(int root);

private:
    struct Node {
        Op op;
        std::int32_t a = -1;
        std::int32_t b = -1;
        std::int32_t rows = 0;  // MatVec: matrix shape; Slice: offset/len
        std::int32_t cols = 0;
        double c = 0.0;  // Scale/LeakyRelu payload
        Vector payload;  // ClampThrough bounds (lo then hi)
        Vector val;
        Vector adj;
    };

    int push(Node n) {
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }
    Node& at(int id) { return nodes_[id]; }

    std::vector<Node> nodes_;
};

// Convenience: gradient of a scalar root with respect to one leaf, as a
// fresh vector.
Vector tape_gradient(Tape& tape, int root, int leaf);

}  // namespace dht
