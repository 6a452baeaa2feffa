#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

// Dense feedforward rectifier network with manual backpropagation. The output
// layer is a single ReLU unit, so f(x) >= 0 always. Dropout uses inverted
// scaling (activations divided by keep_prob at train time) so inference runs
// the plain forward pass. L2 weight decay is added to weight gradients in the
// backward pass; biases are not regularized.

namespace drcpd {

struct MlpModel {
    std::vector<int> layer_sizes;        // [d, h1, ..., 1]
    std::vector<Eigen::MatrixXd> weights; // weights[l]: layer_sizes[l] x layer_sizes[l+1]
    std::vector<Eigen::VectorXd> biases;  // biases[l]: layer_sizes[l+1]
    double l2 = 0.0;
    double keep_prob = 1.0;

    int input_dim() const { return layer_sizes.front(); }
    std::size_t num_layers() const { return weights.size(); }
};

// Per-batch bookkeeping needed by the backward pass.
struct ForwardTrace {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // z_l = a_{l-1} W_l + b_l
    std::vector<Eigen::MatrixXd> post;  // a_l after ReLU (and dropout if training)
    std::vector<Eigen::MatrixXd> masks; // inverted-dropout masks, hidden layers only
    bool training = false;
};

struct ParamGrads {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

struct AdamState {
    std::int64_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<Eigen::MatrixXd> m_weights, v_weights;
    std::vector<Eigen::VectorXd> m_biases, v_biases;
};

// He-style init: weights uniform on +/- sqrt(6/fan_in), hidden biases 0.01.
// The output bias starts at 1.0 so the ratio approximator begins near the
// no-change answer f = 1 instead of collapsing into the log clamp.
MlpModel mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed,
                  double l2, double keep_prob);

// Outputs are elementwise >= 0. Dropout masks are drawn from `seed` and only
// applied when training; inference is deterministic.
std::pair<Eigen::VectorXd, ForwardTrace> mlp_forward(const MlpModel& model,
                                                     const Eigen::MatrixXd& batch,
                                                     bool training,
                                                     std::uint64_t seed = 0);

// Gradients of (loss + l2/2 * sum ||W||^2) given dLoss/doutput per sample.
// ReLU subgradient at exactly 0 is 0.
ParamGrads mlp_backward(const MlpModel& model, const ForwardTrace& trace,
                        const Eigen::VectorXd& output_grads);

AdamState adam_init(const MlpModel& model, double learning_rate);

// One bias-corrected adaptive-moment update in place. Returns false (and
// leaves parameters untouched) when any gradient entry is non-finite.
bool adam_step(MlpModel& model, AdamState& state, const ParamGrads& grads);

// Loss callback: maps the output vector to (loss value, dLoss/doutput).
using OutputLoss = std::function<std::pair<double, Eigen::VectorXd>(const Eigen::VectorXd&)>;

// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-12), numeric by central differences of loss + the L2 penalty. Dropout is
// disabled during the check.
double gradient_check(const MlpModel& model, const OutputLoss& loss,
                      const Eigen::MatrixXd& batch, double eps);

// Versioned text checkpoint; hexfloat fields round-trip bitwise.
void save_mlp(const MlpModel& model, const std::string& path);
MlpModel load_mlp(const std::string& path);

} // namespace drcpd
