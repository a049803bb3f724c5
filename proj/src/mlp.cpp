#include "mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace dht {

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::Relu:
        return "relu";
    case Activation::Tanh:
        return "tanh";
    case Activation::LeakyRelu:
        return "leaky_relu";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu")
        return Activation::Relu;
    if (name == "tanh")
        return Activation::Tanh;
    if (name == "leaky_relu")
        return Activation::LeakyRelu;
    throw std::invalid_argument("unknown activation: " + name);
}

TinyMlp::TinyMlp(std::vector<int> layer_dims, Activation act, double dropout_rate, Rng& rng)
    : layer_dims_(std::move(layer_dims)), act_(act), dropout_(dropout_rate) {
    if (layer_dims_.size() < 2)
        throw std::invalid_argument("TinyMlp needs at least input and output dims");
    if (dropout_ < 0.0 || dropout_ >= 1.0)
        throw std::invalid_argument("dropout rate must be in [0, 1)");
    for (std::size_t l = 0; l + 1 < layer_dims_.size(); ++l) {
        const int fan_in = layer_dims_[l];
        const int fan_out = layer_dims_[l + 1];
        // He init for relu-family, Xavier for tanh.
        const double stddev = act_ == Activation::Tanh
                                  ? std::sqrt(2.0 / (fan_in + fan_out))
                                  : std::sqrt(2.0 / fan_in);
        Matrix w(fan_out, fan_in);
        for (double& x : w.data)
            x = rng.normal(0.0, stddev);
        weights_.push_back(std::move(w));
        biases_.emplace_back(fan_out, 0.0);
    }
}

Vector TinyMlp::forward(std::span<const double> input, bool train_mode, Rng* rng) const {
    if (static_cast<int>(input.size()) != input_dim())
        throw std::invalid_argument("TinyMlp forward: input dim mismatch");
    Vector h(input.begin(), input.end());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Vector z = matvec(weights_[l], h);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] += biases_[l][i];
        const bool last = l + 1 == weights_.size();
        if (!last) {
            for (double& v : z) {
                switch (act_) {
                case Activation::Relu:
                    v = std::max(v, 0.0);
                    break;
                case Activation::Tanh:
                    v = std::tanh(v);
                    break;
                case Activation::LeakyRelu:
                    v = v > 0.0 ? v : 0.2 * v;
                    break;
                }
            }
            if (train_mode && dropout_ > 0.0) {
                if (!rng)
                    throw std::invalid_argument("train-mode dropout needs an RNG");
                const double keep = 1.0 - dropout_;
                for (double& v : z)
                    v = rng->bernoulli(keep) ? v / keep : 0.0;
            }
        }
        h = std::move(z);
    }
    return h;
}

TinyMlp::TapeParams TinyMlp::register_params(Tape& tape) const {
    TapeParams p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        p.weights.push_back(tape.leaf_matrix(weights_[l]));
        p.biases.push_back(tape.leaf(biases_[l]));
    }
    return p;
}

TinyMlp::TapeParams TinyMlp::register_constants(Tape& tape) const {
    TapeParams p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        p.weights.push_back(tape.constant_matrix(weights_[l]));
        p.biases.push_back(tape.constant(biases_[l]));
    }
    return p;
}

int TinyMlp::forward_tape(Tape& tape, const TapeParams& params, int input, bool train_mode,
                          Rng* rng) const {
    int h = input;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        int z = tape.add(tape.matvec(params.weights[l], h), params.biases[l]);
        const bool last = l + 1 == weights_.size();
        if (!last) {
            switch (act_) {
            case Activation::Relu:
                z = tape.relu(z);
                break;
            case Activation::Tanh:
                z = tape.tanh_(z);
                break;
            case Activation::LeakyRelu:
                z = tape.leaky_relu(z, 0.2);
                break;
            }
            if (train_mode && dropout_ > 0.0) {
                if (!rng)
                    throw std::invalid_argument("train-mode dropout needs an RNG");
                const double keep = 1.0 - dropout_;
                Vector mask(tape.value(z).size());
                for (double& m : mask)
                    m = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
                z = tape.mul(z, tape.constant(mask));
            }
        }
        h = z;
    }
    return h;
}

int TinyMlp::param_count() const {
    int n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l)
        n += static_cast<int>(weights_[l].data.size() + biases_[l].size());
    return n;
}

Vector TinyMlp::flatten_params() const {
    Vector flat;
    flat.reserve(param_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), weights_[l].data.begin(), weights_[l].data.end());
        flat.insert(flat.end(), biases_[l].begin(), biases_[l].end());
    }
    return flat;
}

void TinyMlp::set_params(std::span<const double> flat) {
    std::size_t off = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (double& x : weights_[l].data)
            x = flat[off++];
        for (double& x : biases_[l])
            x = flat[off++];
    }
    if (off != flat.size())
        throw std::invalid_argument("set_params: size mismatch");
}

Vector TinyMlp::collect_grad(const Tape& tape, const TapeParams& params) const {
    Vector grad;
    grad.reserve(param_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        auto gw = tape.adjoint(params.weights[l]);
        grad.insert(grad.end(), gw.begin(), gw.end());
        auto gb = tape.adjoint(params.biases[l]);
        grad.insert(grad.end(), gb.begin(), gb.end());
    }
    return grad;
}

void TinyMlp::save(std::ostream& os, const std::string& layout) const {
    os << "tinymlp " << (layout.empty() ? "-" : layout) << " " << activation_name(act_) << " "
       << dropout_ << " " << layer_dims_.size();
    for (int d : layer_dims_)
        os << " " << d;
    os << "\n";
    os.precision(17);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        for (double v : weights_[l].data)
            os << v << " ";
        os << "\n";
        for (double v : biases_[l])
            os << v << " ";
        os << "\n";
    }
}

TinyMlp TinyMlp::load(std::istream& is, std::string* layout) {
    std::string tag, lay, act;
    double dropout = 0.0;
    std::size_t n_dims = 0;
    is >> tag >> lay >> act >> dropout >> n_dims;
    if (tag != "tinymlp" || !is)
        throw std::runtime_error("TinyMlp load: bad header");
    TinyMlp net;
    net.layer_dims_.resize(n_dims);
    for (std::size_t i = 0; i < n_dims; ++i)
        is >> net.layer_dims_[i];
    net.act_ = activation_from_name(act);
    net.dropout_ = dropout;
    for (std::size_t l = 0; l + 1 < n_dims; ++l) {
        Matrix w(net.layer_dims_[l + 1], net.layer_dims_[l]);
        for (double& v : w.data)
            is >> v;
        net.weights_.push_back(std::move(w));
        Vector b(net.layer_dims_[l + 1]);
        for (double& v : b)
            is >> v;
        net.biases_.push_back(std::move(b));
    }
    if (!is)
        throw std::runtime_error("TinyMlp load: truncated weights");
    if (layout)
        *layout = lay == "-" ? "" : lay;
    return net;
}

void AdamState::step(Vector& params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size())
        throw std::invalid_argument("adam step: shape mismatch");
    for (double g : grads)
        if (std::isnan(g))
            throw std::runtime_error("adam step: NaN gradient at t=" + std::to_string(t_ + 1));
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        params[i] -= cfg_.step_size * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
}

}  // namespace dht
