#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tape.hpp"
#include "vec.hpp"

namespace dht {

enum class Activation { Relu, Tanh, LeakyRelu };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Small fully connected network. Hidden layers use the configured
// activation; the output layer is linear. Dropout (inverted scaling) is
// applied to hidden activations in train mode only, masks drawn from the
// caller's RNG.
class TinyMlp {
public:
    TinyMlp() = default;
    TinyMlp(std::vector<int> layer_dims, Activation act, double dropout_rate, Rng& rng);

    int input_dim() const { return layer_dims_.front(); }
    int output_dim() const { return layer_dims_.back(); }
    const std::vector<int>& layer_dims() const { return layer_dims_; }
    Activation activation() const { return act_; }
    double dropout_rate() const { return dropout_; }

    Vector forward(std::span<const double> input, bool train_mode = false, Rng* rng = nullptr) const;

    // Tape leaf ids for every parameter tensor, in flattening order.
    struct TapeParams {
        std::vector<int> weights;
        std::vector<int> biases;
    };
    TapeParams register_params(Tape& tape) const;
    // Records the forward pass; params either live leaves (from
    // register_params) or detached constants (register_constants).
    TapeParams register_constants(Tape& tape) const;
    int forward_tape(Tape& tape, const TapeParams& params, int input, bool train_mode = false,
                     Rng* rng = nullptr) const;

    // Flat parameter view used by the optimizers.
    int param_count() const;
    Vector flatten_params() const;
    void set_params(std::span<const double> flat);
    Vector collect_grad(const Tape& tape, const TapeParams& params) const;

    void save(std::ostream& os, const std::string& layout = "") const;
    static TinyMlp load(std::istream& is, std::string* layout = nullptr);

    const std::vector<Matrix>& weights() const { return weights_; }
    const std::vector<Vector>& biases() const { return biases_; }
    Matrix& weight(int i) { return weights_[i]; }
    Vector& bias(int i) { return biases_[i]; }

private:
    std::vector<int> layer_dims_;
    Activation act_ = Activation::Relu;
    double dropout_ = 0.0;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;
};

// Adam with bias correction over a flat parameter vector.
struct AdamConfig {
    double step_size = 0.02;
    double beta1 = 0.8;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState() = default;
    AdamState(int dim, AdamConfig cfg) : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

    // In-place update; throws on NaN gradients.
    void step(Vector& params, std::span<const double> grads);
    long t() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    Vector m_, v_;
    long t_ = 0;
};

}  // namespace dht
