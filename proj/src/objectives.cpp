#include "drcpd/objectives.hpp"
#include "drcpd/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace drcpd {

ObjectiveTag objective_from_name(const std::string& name) {
    if (name == "LSIF") return ObjectiveTag::Lsif;
    if (name == "DSKL") return ObjectiveTag::Dskl;
    if (name == "BARR") return ObjectiveTag::Barr;
    throw std::invalid_argument("unknown objective: " + name);
}

std::string objective_name(ObjectiveTag tag) {
    switch (tag) {
        case ObjectiveTag::Lsif: return "LSIF";
        case ObjectiveTag::Dskl: return "DSKL";
        case ObjectiveTag::Barr: return "BARR";
    }
    throw std::logic_error("objective_name: bad tag");
}

namespace {

void require_nonempty(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref,
                      const char* who) {
    if (f_eval.size() == 0 || f_ref.size() == 0)
        throw std::invalid_argument(std::string(who) + ": empty output vector");
}

} // namespace

ObjectiveValue lsif_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref) {
    require_nonempty(f_eval, f_ref, "lsif_loss");
    const double n_e = static_cast<double>(f_eval.size());
    const double n_r = static_cast<double>(f_ref.size());
    ObjectiveValue out;
    out.loss = f_eval.squaredNorm() / n_e - 2.0 * f_ref.sum() / n_r;
    out.grad_eval = (2.0 / n_e) * f_eval;
    out.grad_ref = Eigen::VectorXd::Constant(f_ref.size(), -2.0 / n_r);
    return out;
}

ObjectiveValue dskl_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref,
                         double clamp_epsilon) {
    require_nonempty(f_eval, f_ref, "dskl_loss");
    const double n_e = static_cast<double>(f_eval.size());
    const double n_r = static_cast<double>(f_ref.size());
    ObjectiveValue out;
    out.grad_eval.resize(f_eval.size());
    out.grad_ref.resize(f_ref.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < f_eval.size(); ++i) {
        const double f = std::max(f_eval(i), clamp_epsilon);
        loss -= std::log(f) / n_e;
        out.grad_eval(i) = -1.0 / (n_e * f);
    }
    for (Eigen::Index j = 0; j < f_ref.size(); ++j) {
        const double f = std::max(f_ref(j), clamp_epsilon);
        loss += std::log(f) / n_r;
        out.grad_ref(j) = 1.0 / (n_r * f);
    }
    out.loss = loss;
    return out;
}

ObjectiveValue barr_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref,
                         double lambda, double clamp_epsilon) {
    require_nonempty(f_eval, f_ref, "barr_loss");
    if (lambda < 0.0) throw std::invalid_argument("barr_loss: lambda must be >= 0");
    const double n_e = static_cast<double>(f_eval.size());
    const double n_r = static_cast<double>(f_ref.size());
    ObjectiveValue out;
    out.grad_eval.resize(f_eval.size());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < f_eval.size(); ++i) {
        const double f = std::max(f_eval(i), clamp_epsilon);
        loss -= std::log(f) / n_e;
        out.grad_eval(i) = -1.0 / (n_e * f);
    }
    const double gap = f_ref.mean() - 1.0;
    loss += lambda * std::abs(gap);
    const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
    out.grad_ref = Eigen::VectorXd::Constant(f_ref.size(), lambda * sign / n_r);
    out.loss = loss;
    return out;
}

ObjectiveValue objective_loss(const ObjectiveKind& kind, const Eigen::VectorXd& f_eval,
                              const Eigen::VectorXd& f_ref, double clamp_epsilon) {
    switch (kind.tag) {
        case ObjectiveTag::Lsif: return lsif_loss(f_eval, f_ref);
        case ObjectiveTag::Dskl: return dskl_loss(f_eval, f_ref, clamp_epsilon);
        case ObjectiveTag::Barr: return barr_loss(f_eval, f_ref, kind.lambda, clamp_epsilon);
    }
    throw std::logic_error("objective_loss: bad tag");
}

void save_training_log(const TrainingLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_training_log: cannot open " + path);
    out << "epoch,train_loss,validation_loss,wall_time\n";
    char buf[128];
    for (const auto& row : log.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", row.epoch,
                      row.train_loss, row.validation_loss, row.wall_time);
        out << buf;
    }
}

namespace {

// Epoch-scoped sample feeder: hands out pool rows without replacement until
// the pool runs dry, then falls back to resampling with replacement.
class BatchDrawer {
public:
    BatchDrawer(const std::vector<int>& pool, Rng& rng) : pool_(pool), rng_(rng) {}

    void start_epoch() {
        order_ = pool_;
        rng_.shuffle(order_);
        next_ = 0;
    }

    int draw() {
        if (next_ < order_.size()) return order_[next_++];
        return pool_[rng_.below(pool_.size())];
    }

private:
    const std::vector<int>& pool_;
    Rng& rng_;
    std::vector<int> order_;
    std::size_t next_ = 0;
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& data, const std::vector<int>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = data.row(rows[i]);
    return out;
}

} // namespace

TrainResult train_ddre(const MlpModel& model, const Eigen::MatrixXd& reference,
                       const Eigen::MatrixXd& evaluation, const ObjectiveKind& objective,
                       const TrainConfig& config) {
    if (reference.rows() == 0 || evaluation.rows() == 0)
        throw std::invalid_argument("train_ddre: empty sample set");
    if (reference.cols() != model.input_dim() || evaluation.cols() != model.input_dim())
        throw std::invalid_argument("train_ddre: sample dimension does not match model input");
    if (config.minibatch_size < 2)
        throw std::invalid_argument("train_ddre: minibatch_size must be >= 2");
    if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0))
        throw std::invalid_argument("train_ddre: validation_fraction must be in [0, 1)");
    if (config.max_epochs < 1 || config.patience < 1)
        throw std::invalid_argument("train_ddre: max_epochs and patience must be >= 1");

    Rng rng(derive_seed(config.seed, 0));

    // Hold out the validation tail of a seeded shuffle of each pool.
    auto split_pool = [&](Eigen::Index n, std::vector<int>& train, std::vector<int>& val) {
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        auto n_val = static_cast<std::size_t>(
            std::floor(config.validation_fraction * static_cast<double>(n)));
        if (n_val >= order.size()) n_val = order.size() - 1;
        train.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
        val.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
    };
    std::vector<int> ref_train, ref_val, eval_train, eval_val;
    split_pool(reference.rows(), ref_train, ref_val);
    split_pool(evaluation.rows(), eval_train, eval_val);

    // Fall back to validating on the training pools when the hold-out is empty.
    const Eigen::MatrixXd val_ref = gather_rows(reference, ref_val.empty() ? ref_train : ref_val);
    const Eigen::MatrixXd val_eval = gather_rows(evaluation, eval_val.empty() ? eval_train : eval_val);

    const int batch_ref = config.minibatch_size / 2;
    const int batch_eval = config.minibatch_size - batch_ref;
    const auto steps_per_epoch = static_cast<int>(std::max(
        (ref_train.size() + batch_ref - 1) / static_cast<std::size_t>(batch_ref),
        (eval_train.size() + batch_eval - 1) / static_cast<std::size_t>(batch_eval)));

    TrainResult result;
    result.model = model;
    MlpModel current = model;
    AdamState adam = adam_init(current, config.learning_rate);
    BatchDrawer ref_drawer(ref_train, rng);
    BatchDrawer eval_drawer(eval_train, rng);

    auto validation_loss = [&]() {
        const Eigen::VectorXd f_ref = mlp_forward(current, val_ref, false).first;
        const Eigen::VectorXd f_eval = mlp_forward(current, val_eval, false).first;
        return objective_loss(objective, f_eval, f_ref, config.clamp_epsilon).loss;
    };

    result.best_validation_loss = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        ref_drawer.start_epoch();
        eval_drawer.start_epoch();
        double train_loss_sum = 0.0;

        for (int step = 0; step < steps_per_epoch; ++step) {
            std::vector<int> ref_rows(batch_ref), eval_rows(batch_eval);
            for (auto& r : ref_rows) r = ref_drawer.draw();
            for (auto& r : eval_rows) r = eval_drawer.draw();

            Eigen::MatrixXd batch(batch_ref + batch_eval, reference.cols());
            batch.topRows(batch_ref) = gather_rows(reference, ref_rows);
            batch.bottomRows(batch_eval) = gather_rows(evaluation, eval_rows);

            const std::uint64_t dropout_seed =
                derive_seed(config.seed, 1 + static_cast<std::uint64_t>(epoch) * 1000003ULL +
                                             static_cast<std::uint64_t>(step));
            auto [outputs, trace] = mlp_forward(current, batch, true, dropout_seed);
            const Eigen::VectorXd f_ref = outputs.head(batch_ref);
            const Eigen::VectorXd f_eval = outputs.tail(batch_eval);
            ObjectiveValue value = objective_loss(objective, f_eval, f_ref, config.clamp_epsilon);

            if (!std::isfinite(value.loss)) {
                result.aborted = true;
                result.abort_reason = "non-finite training loss at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(step);
                return result;
            }
            train_loss_sum += value.loss;

            Eigen::VectorXd output_grads(batch_ref + batch_eval);
            output_grads.head(batch_ref) = value.grad_ref;
            output_grads.tail(batch_eval) = value.grad_eval;
            ParamGrads grads = mlp_backward(current, trace, output_grads);
            if (!adam_step(current, adam, grads)) {
                result.aborted = true;
                result.abort_reason = "non-finite gradient at epoch " +
                                      std::to_string(epoch) + " step " + std::to_string(step);
                return result;
            }
        }

        const double val_loss = validation_loss();
        const double wall = std::chrono::duration<double>(
            std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back({epoch, train_loss_sum / steps_per_epoch, val_loss, wall});

        if (!std::isfinite(val_loss)) {
            result.aborted = true;
            result.abort_reason = "non-finite validation loss at epoch " + std::to_string(epoch);
            return result;
        }
        if (val_loss < result.best_validation_loss) {
            result.best_validation_loss = val_loss;
            result.best_epoch = epoch;
            result.model = current;
            epochs_since_best = 0;
        } else if (++epochs_since_best >= config.patience) {
            break;
        }
    }
    return result;
}

} // namespace drcpd
