#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dht {

namespace {

double sigmoid_stable(double z) {
    if (z >= 0.0)
        return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus_stable(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

int Tape::leaf(std::span<const double> v) {
    Node n;
    n.op = Op::Leaf;
    n.val.assign(v.begin(), v.end());
    return push(std::move(n));
}

int Tape::leaf_matrix(const Matrix& m) {
    Node n;
    n.op = Op::Leaf;
    n.rows = m.rows;
    n.cols = m.cols;
    n.val = m.data;
    return push(std::move(n));
}

int Tape::constant(std::span<const double> v) {
    Node n;
    n.op = Op::Constant;
    n.val.assign(v.begin(), v.end());
    return push(std::move(n));
}

int Tape::constant_scalar(double v) {
    Node n;
    n.op = Op::Constant;
    n.val.assign(1, v);
    return push(std::move(n));
}

int Tape::constant_matrix(const Matrix& m) {
    Node n;
    n.op = Op::Constant;
    n.rows = m.rows;
    n.cols = m.cols;
    n.val = m.data;
    return push(std::move(n));
}

int Tape::add(int a, int b) {
    if (at(a).val.size() != at(b).val.size())
        throw std::invalid_argument("tape add: size mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = at(a).val[i] + at(b).val[i];
    return push(std::move(n));
}

int Tape::sub(int a, int b) {
    if (at(a).val.size() != at(b).val.size())
        throw std::invalid_argument("tape sub: size mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = at(a).val[i] - at(b).val[i];
    return push(std::move(n));
}

int Tape::mul(int a, int b) {
    if (at(a).val.size() != at(b).val.size())
        throw std::invalid_argument("tape mul: size mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = at(a).val[i] * at(b).val[i];
    return push(std::move(n));
}

int Tape::scale(int a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.c = c;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = c * at(a).val[i];
    return push(std::move(n));
}

int Tape::smul(int s, int a) {
    if (at(s).val.size() != 1)
        throw std::invalid_argument("tape smul: s must be scalar");
    Node n;
    n.op = Op::SMul;
    n.a = s;
    n.b = a;
    const double sv = at(s).val[0];
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = sv * at(a).val[i];
    return push(std::move(n));
}

int Tape::sub_scalar(int a, int s) {
    if (at(s).val.size() != 1)
        throw std::invalid_argument("tape sub_scalar: s must be scalar");
    Node n;
    n.op = Op::SubS;
    n.a = a;
    n.b = s;
    const double sv = at(s).val[0];
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = at(a).val[i] - sv;
    return push(std::move(n));
}

int Tape::dot(int a, int b) {
    if (at(a).val.size() != at(b).val.size())
        throw std::invalid_argument("tape dot: size mismatch");
    Node n;
    n.op = Op::Dot;
    n.a = a;
    n.b = b;
    double s = 0.0;
    for (std::size_t i = 0; i < at(a).val.size(); ++i)
        s += at(a).val[i] * at(b).val[i];
    n.val.assign(1, s);
    return push(std::move(n));
}

int Tape::matvec(int m, int x) {
    const Node& mn = at(m);
    if (mn.rows <= 0 || mn.cols <= 0)
        throw std::invalid_argument("tape matvec: node has no matrix shape");
    if (static_cast<std::size_t>(mn.cols) != at(x).val.size())
        throw std::invalid_argument("tape matvec: size mismatch");
    Node n;
    n.op = Op::MatVec;
    n.a = m;
    n.b = x;
    n.rows = mn.rows;
    n.cols = mn.cols;
    n.val.resize(mn.rows);
    for (int r = 0; r < mn.rows; ++r) {
        double s = 0.0;
        const double* row = mn.val.data() + static_cast<std::size_t>(r) * mn.cols;
        for (int c = 0; c < mn.cols; ++c)
            s += row[c] * at(x).val[c];
        n.val[r] = s;
    }
    return push(std::move(n));
}

int Tape::sigmoid(int a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = sigmoid_stable(at(a).val[i]);
    return push(std::move(n));
}

int Tape::tanh_(int a) {
    Node n;
    n.op = Op::Tanh;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = std::tanh(at(a).val[i]);
    return push(std::move(n));
}

int Tape::relu(int a) {
    Node n;
    n.op = Op::Relu;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = std::max(at(a).val[i], 0.0);
    return push(std::move(n));
}

int Tape::leaky_relu(int a, double slope) {
    Node n;
    n.op = Op::LeakyRelu;
    n.a = a;
    n.c = slope;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i) {
        const double v = at(a).val[i];
        n.val[i] = v > 0.0 ? v : slope * v;
    }
    return push(std::move(n));
}

int Tape::softplus(int a) {
    Node n;
    n.op = Op::Softplus;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = softplus_stable(at(a).val[i]);
    return push(std::move(n));
}

int Tape::log_(int a) {
    Node n;
    n.op = Op::Log;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = std::log(at(a).val[i]);
    return push(std::move(n));
}

int Tape::exp_(int a) {
    Node n;
    n.op = Op::Exp;
    n.a = a;
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = std::exp(at(a).val[i]);
    return push(std::move(n));
}

int Tape::sum(int a) {
    Node n;
    n.op = Op::Sum;
    n.a = a;
    double s = 0.0;
    for (double v : at(a).val)
        s += v;
    n.val.assign(1, s);
    return push(std::move(n));
}

int Tape::sqnorm_(int a) {
    Node n;
    n.op = Op::SqNorm;
    n.a = a;
    double s = 0.0;
    for (double v : at(a).val)
        s += v * v;
    n.val.assign(1, s);
    return push(std::move(n));
}

int Tape::clamp_through(int a, std::span<const double> lo, std::span<const double> hi) {
    if (lo.size() != at(a).val.size() || hi.size() != at(a).val.size())
        throw std::invalid_argument("tape clamp_through: bound size mismatch");
    Node n;
    n.op = Op::ClampThrough;
    n.a = a;
    n.payload.assign(lo.begin(), lo.end());
    n.payload.insert(n.payload.end(), hi.begin(), hi.end());
    n.val.resize(at(a).val.size());
    for (std::size_t i = 0; i < n.val.size(); ++i)
        n.val[i] = std::clamp(at(a).val[i], lo[i], hi[i]);
    return push(std::move(n));
}

int Tape::concat(int a, int b) {
    Node n;
    n.op = Op::Concat;
    n.a = a;
    n.b = b;
    n.val = at(a).val;
    n.val.insert(n.val.end(), at(b).val.begin(), at(b).val.end());
    return push(std::move(n));
}

int Tape::slice(int a, int off, int len) {
    if (off < 0 || len <= 0 || static_cast<std::size_t>(off + len) > at(a).val.size())
        throw std::invalid_argument("tape slice: out of range");
    Node n;
    n.op = Op::Slice;
    n.a = a;
    n.rows = off;
    n.cols = len;
    n.val.assign(at(a).val.begin() + off, at(a).val.begin() + off + len);
    return push(std::move(n));
}

void Tape::backward(int root) {
    if (root < 0 || root >= size())
        throw std::invalid_argument("tape backward: bad root");
    if (at(root).val.size() != 1)
        throw std::invalid_argument("tape backward: root is not scalar");

    for (Node& n : nodes_)
        n.adj.assign(n.val.size(), 0.0);
    at(root).adj[0] = 1.0;

    for (int id = root; id >= 0; --id) {
        Node& n = at(id);
        const Vector& g = n.adj;
        bool any = false;
        for (double v : g)
            if (v != 0.0) {
                any = true;
                break;
            }
        if (!any)
            continue;
        switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;
        case Op::Add: {
            Vector& da = at(n.a).adj;
            Vector& db = at(n.b).adj;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] += g[i];
            }
            break;
        }
        case Op::Sub: {
            Vector& da = at(n.a).adj;
            Vector& db = at(n.b).adj;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                db[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            Vector& da = at(n.a).adj;
            Vector& db = at(n.b).adj;
            const Vector& av = at(n.a).val;
            const Vector& bv = at(n.b).val;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i] * bv[i];
                db[i] += g[i] * av[i];
            }
            break;
        }
        case Op::Scale: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += n.c * g[i];
            break;
        }
        case Op::SMul: {
            Vector& ds = at(n.a).adj;
            Vector& da = at(n.b).adj;
            const double sv = at(n.a).val[0];
            const Vector& av = at(n.b).val;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ds[0] += g[i] * av[i];
                da[i] += sv * g[i];
            }
            break;
        }
        case Op::SubS: {
            Vector& da = at(n.a).adj;
            Vector& ds = at(n.b).adj;
            for (std::size_t i = 0; i < g.size(); ++i) {
                da[i] += g[i];
                ds[0] -= g[i];
            }
            break;
        }
        case Op::Dot: {
            Vector& da = at(n.a).adj;
            Vector& db = at(n.b).adj;
            const Vector& av = at(n.a).val;
            const Vector& bv = at(n.b).val;
            for (std::size_t i = 0; i < av.size(); ++i) {
                da[i] += g[0] * bv[i];
                db[i] += g[0] * av[i];
            }
            break;
        }
        case Op::MatVec: {
            Vector& dm = at(n.a).adj;
            Vector& dx = at(n.b).adj;
            const Vector& mv = at(n.a).val;
            const Vector& xv = at(n.b).val;
            for (int r = 0; r < n.rows; ++r) {
                const double gr = g[r];
                if (gr == 0.0)
                    continue;
                double* dmrow = dm.data() + static_cast<std::size_t>(r) * n.cols;
                const double* mrow = mv.data() + static_cast<std::size_t>(r) * n.cols;
                for (int c = 0; c < n.cols; ++c) {
                    dmrow[c] += gr * xv[c];
                    dx[c] += gr * mrow[c];
                }
            }
            break;
        }
        case Op::Sigmoid: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
            break;
        }
        case Op::Tanh: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
            break;
        }
        case Op::Relu: {
            Vector& da = at(n.a).adj;
            const Vector& av = at(n.a).val;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += av[i] > 0.0 ? g[i] : 0.0;
            break;
        }
        case Op::LeakyRelu: {
            Vector& da = at(n.a).adj;
            const Vector& av = at(n.a).val;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += av[i] > 0.0 ? g[i] : n.c * g[i];
            break;
        }
        case Op::Softplus: {
            Vector& da = at(n.a).adj;
            const Vector& av = at(n.a).val;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] * sigmoid_stable(av[i]);
            break;
        }
        case Op::Log: {
            Vector& da = at(n.a).adj;
            const Vector& av = at(n.a).val;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] / av[i];
            break;
        }
        case Op::Exp: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i] * n.val[i];
            break;
        }
        case Op::Sum: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] += g[0];
            break;
        }
        case Op::SqNorm: {
            Vector& da = at(n.a).adj;
            const Vector& av = at(n.a).val;
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] += 2.0 * g[0] * av[i];
            break;
        }
        case Op::ClampThrough: {
            Vector& da = at(n.a).adj;
            for (std::size_t i = 0; i < g.size(); ++i)
                da[i] += g[i];
            break;
        }
        case Op::Concat: {
            Vector& da = at(n.a).adj;
            Vector& db = at(n.b).adj;
            for (std::size_t i = 0; i < da.size(); ++i)
                da[i] += g[i];
            for (std::size_t i = 0; i < db.size(); ++i)
                db[i] += g[da.size() + i];
            break;
        }
        case Op::Slice: {
            Vector& da = at(n.a).adj;
            for (int i = 0; i < n.cols; ++i)
                da[n.rows + i] += g[i];
            break;
        }
        }
    }
}

Vector tape_gradient(Tape& tape, int root, int leaf) {
    tape.backward(root);
    auto adj = tape.adjoint(leaf);
    return Vector(adj.begin(), adj.end());
}

}  // namespace dht
