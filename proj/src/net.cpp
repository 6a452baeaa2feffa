#include "drcpd/net.hpp"
#include "drcpd/rng.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drcpd {

namespace {

bool layer_count_consistent(const MlpModel& m) {
    return m.weights.size() == m.biases.size() &&
           m.weights.size() + 1 == m.layer_sizes.size();
}

} // namespace

MlpModel mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed,
                  double l2, double keep_prob) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("mlp_init: need at least input and output layers");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("mlp_init: layer sizes must be positive");
    if (layer_sizes.back() != 1)
        throw std::invalid_argument("mlp_init: output layer must have width 1");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        throw std::invalid_argument("mlp_init: keep_prob must be in (0, 1]");
    if (l2 < 0.0)
        throw std::invalid_argument("mlp_init: l2 must be non-negative");

    MlpModel model;
    model.layer_sizes = layer_sizes;
    model.l2 = l2;
    model.keep_prob = keep_prob;

    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        Eigen::MatrixXd w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i)
            for (int j = 0; j < fan_out; ++j)
                w(i, j) = rng.uniform(-bound, bound);
        const bool output_layer = (l + 2 == layer_sizes.size());
        Eigen::VectorXd b = Eigen::VectorXd::Constant(fan_out, output_layer ? 1.0 : 0.01);
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    return model;
}

std::pair<Eigen::VectorXd, ForwardTrace> mlp_forward(const MlpModel& model,
                                                     const Eigen::MatrixXd& batch,
                                                     bool training,
                                                     std::uint64_t seed) {
    if (!layer_count_consistent(model))
        throw std::invalid_argument("mlp_forward: malformed model");
    if (batch.cols() != model.input_dim())
        throw std::invalid_argument("mlp_forward: batch has " + std::to_string(batch.cols()) +
                                    " columns, model expects " + std::to_string(model.input_dim()));

    ForwardTrace trace;
    trace.input = batch;
    trace.training = training;

    const bool dropout = training && model.keep_prob < 1.0;
    Rng rng(seed);

    Eigen::MatrixXd a = batch;
    const std::size_t L = model.num_layers();
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = (a * model.weights[l]).rowwise() + model.biases[l].transpose();
        Eigen::MatrixXd act = z.cwiseMax(0.0);
        const bool hidden = (l + 1 < L);
        if (hidden && dropout) {
            Eigen::MatrixXd mask(act.rows(), act.cols());
            const double inv_keep = 1.0 / model.keep_prob;
            for (Eigen::Index i = 0; i < mask.rows(); ++i)
                for (Eigen::Index j = 0; j < mask.cols(); ++j)
                    mask(i, j) = rng.uniform01() < model.keep_prob ? inv_keep : 0.0;
            act = act.cwiseProduct(mask);
            trace.masks.push_back(std::move(mask));
        } else if (hidden) {
            trace.masks.emplace_back(); // placeholder keeps indices aligned
        }
        trace.pre.push_back(std::move(z));
        trace.post.push_back(act);
        a = std::move(act);
    }
    return {Eigen::VectorXd(a.col(0)), std::move(trace)};
}

ParamGrads mlp_backward(const MlpModel& model, const ForwardTrace& trace,
                        const Eigen::VectorXd& output_grads) {
    const std::size_t L = model.num_layers();
    if (trace.pre.size() != L)
        throw std::invalid_argument("mlp_backward: trace does not match model");
    if (output_grads.size() != trace.input.rows())
        throw std::invalid_argument("mlp_backward: gradient length mismatch");

    ParamGrads grads;
    grads.weights.resize(L);
    grads.biases.resize(L);

    // delta_l = dLoss/dz_l, batch x width.
    Eigen::MatrixXd delta = output_grads;
    for (std::size_t li = L; li-- > 0;) {
        // ReLU': 1 where pre-activation is strictly positive.
        Eigen::MatrixXd relu_grad =
            (trace.pre[li].array() > 0.0).cast<double>().matrix();
        if (li + 1 < L && trace.masks[li].size() > 0)
            relu_grad = relu_grad.cwiseProduct(trace.masks[li]);
        delta = delta.cwiseProduct(relu_grad);

        const Eigen::MatrixXd& a_prev = (li == 0) ? trace.input : trace.post[li - 1];
        grads.weights[li] = a_prev.transpose() * delta;
        if (model.l2 > 0.0)
            grads.weights[li] += model.l2 * model.weights[li];
        grads.biases[li] = delta.colwise().sum().transpose();

        if (li > 0)
            delta = delta * model.weights[li].transpose();
    }
    return grads;
}

AdamState adam_init(const MlpModel& model, double learning_rate) {
    AdamState st;
    st.learning_rate = learning_rate;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        st.m_weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        st.v_weights.push_back(Eigen::MatrixXd::Zero(model.weights[l].rows(), model.weights[l].cols()));
        st.m_biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
        st.v_biases.push_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
    return st;
}

bool adam_step(MlpModel& model, AdamState& state, const ParamGrads& grads) {
    if (grads.weights.size() != model.num_layers() || grads.biases.size() != model.num_layers())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    for (std::size_t l = 0; l < model.num_layers(); ++l)
        if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite())
            return false;

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
            auto m_hat = m / bc1;
            auto v_hat = v / bc2;
            param.array() -= state.learning_rate * m_hat.array() /
                             (v_hat.array().sqrt() + state.epsilon);
        };
        update(model.weights[l], state.m_weights[l], state.v_weights[l], grads.weights[l]);
        update(model.biases[l], state.m_biases[l], state.v_biases[l], grads.biases[l]);
    }
    return true;
}

double gradient_check(const MlpModel& model, const OutputLoss& loss,
                      const Eigen::MatrixXd& batch, double eps) {
    MlpModel work = model;
    work.keep_prob = 1.0; // dropout noise would invalidate the comparison

    auto objective = [&](const MlpModel& m) {
        auto [out, trace] = mlp_forward(m, batch, false);
        double value = loss(out).first;
        if (m.l2 > 0.0)
            for (const auto& w : m.weights)
                value += 0.5 * m.l2 * w.squaredNorm();
        return value;
    };

    auto [out, trace] = mlp_forward(work, batch, false);
    ParamGrads analytic = mlp_backward(work, trace, loss(out).second);

    double worst = 0.0;
    auto probe = [&](double& param, double analytic_grad) {
        const double saved = param;
        param = saved + eps;
        const double plus = objective(work);
        param = saved - eps;
        const double minus = objective(work);
        param = saved;
        const double numeric = (plus - minus) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic_grad), std::abs(numeric), 1e-12});
        worst = std::max(worst, std::abs(analytic_grad - numeric) / denom);
    };

    for (std::size_t l = 0; l < work.num_layers(); ++l) {
        for (Eigen::Index i = 0; i < work.weights[l].rows(); ++i)
            for (Eigen::Index j = 0; j < work.weights[l].cols(); ++j)
                probe(work.weights[l](i, j), analytic.weights[l](i, j));
        for (Eigen::Index i = 0; i < work.biases[l].size(); ++i)
            probe(work.biases[l](i), analytic.biases[l](i));
    }
    return worst;
}

void save_mlp(const MlpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
    out << "drcpd-mlp 1\n";
    out << "layers " << model.layer_sizes.size();
    for (int s : model.layer_sizes) out << ' ' << s;
    out << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a %a", model.l2, model.keep_prob);
    out << "reg " << buf << '\n';
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        out << "layer " << l << '\n';
        for (Eigen::Index i = 0; i < model.weights[l].rows(); ++i) {
            for (Eigen::Index j = 0; j < model.weights[l].cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%a", model.weights[l](i, j));
                out << buf << (j + 1 == model.weights[l].cols() ? '\n' : ' ');
            }
        }
        for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) {
            std::snprintf(buf, sizeof buf, "%a", model.biases[l](i));
            out << buf << (i + 1 == model.biases[l].size() ? '\n' : ' ');
        }
    }
    if (!out) throw std::runtime_error("save_mlp: write failed for " + path);
}

MlpModel load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "drcpd-mlp" || version != 1)
        throw std::runtime_error("load_mlp: unrecognized checkpoint header in " + path);

    std::string tag;
    std::size_t n_layers = 0;
    in >> tag >> n_layers;
    if (tag != "layers" || n_layers < 2)
        throw std::runtime_error("load_mlp: bad layer record in " + path);

    MlpModel model;
    model.layer_sizes.resize(n_layers);
    for (auto& s : model.layer_sizes) in >> s;

    std::string l2_hex, keep_hex;
    in >> tag >> l2_hex >> keep_hex;
    if (tag != "reg") throw std::runtime_error("load_mlp: bad reg record in " + path);
    model.l2 = std::strtod(l2_hex.c_str(), nullptr);
    model.keep_prob = std::strtod(keep_hex.c_str(), nullptr);

    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
        std::size_t idx = 0;
        in >> tag >> idx;
        if (tag != "layer" || idx != l)
            throw std::runtime_error("load_mlp: bad layer marker in " + path);
        Eigen::MatrixXd w(model.layer_sizes[l], model.layer_sizes[l + 1]);
        std::string cell;
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                in >> cell;
                w(i, j) = std::strtod(cell.c_str(), nullptr);
            }
        Eigen::VectorXd b(model.layer_sizes[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) {
            in >> cell;
            b(i) = std::strtod(cell.c_str(), nullptr);
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    if (!in) throw std::runtime_error("load_mlp: truncated checkpoint " + path);
    return model;
}

} // namespace drcpd
