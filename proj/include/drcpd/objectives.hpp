#pragma once

#include "drcpd/net.hpp"

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

// Density ratio training objectives. Each loss takes the network outputs on
// the evaluation batch (numerator distribution) and the reference batch
// (denominator distribution) and returns the loss plus gradients with respect
// to those raw outputs. Log terms clamp outputs up to clamp_epsilon; the
// gradient is taken at the clamped value rather than zeroed, so outputs stuck
// at 0 still receive a push away from the clamp.

namespace drcpd {

enum class ObjectiveTag { Lsif, Dskl, Barr };

struct ObjectiveKind {
    ObjectiveTag tag = ObjectiveTag::Dskl;
    double lambda = 10.0; // BARR barrier weight, ignored otherwise
};

ObjectiveTag objective_from_name(const std::string& name);
std::string objective_name(ObjectiveTag tag);

struct ObjectiveValue {
    double loss = 0.0;
    Eigen::VectorXd grad_eval;
    Eigen::VectorXd grad_ref;
};

// loss = (1/n_e) sum f_eval^2 - (2/n_r) sum f_ref
ObjectiveValue lsif_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref);

// loss = -(1/n_e) sum log f_eval + (1/n_r) sum log f_ref
ObjectiveValue dskl_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref,
                         double clamp_epsilon = 1e-8);

// loss = -(1/n_e) sum log f_eval + lambda * |mean(f_ref) - 1|
// The barrier term uses raw reference outputs; sign(0) := 0.
ObjectiveValue barr_loss(const Eigen::VectorXd& f_eval, const Eigen::VectorXd& f_ref,
                         double lambda, double clamp_epsilon = 1e-8);

ObjectiveValue objective_loss(const ObjectiveKind& kind, const Eigen::VectorXd& f_eval,
                              const Eigen::VectorXd& f_ref, double clamp_epsilon);

struct TrainConfig {
    int minibatch_size = 200;      // >= 2 so each batch holds both sample roles
    double learning_rate = 1e-3;
    int max_epochs = 100;
    int patience = 10;             // epochs without validation improvement
    double validation_fraction = 0.1;
    std::uint64_t seed = 0;
    double clamp_epsilon = 1e-8;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double validation_loss = 0.0;
    double wall_time = 0.0; // seconds since training started
};

struct TrainingLog {
    std::vector<EpochRecord> epochs;
};

void save_training_log(const TrainingLog& log, const std::string& path);

struct TrainResult {
    MlpModel model;            // best validation checkpoint
    TrainingLog log;
    double best_validation_loss = 0.0;
    int best_epoch = 0;
    bool aborted = false;      // non-finite loss cut training short
    std::string abort_reason;
};

// Minibatch training: each batch holds floor(B/2) reference and ceil(B/2)
// evaluation samples drawn without replacement within an epoch; an exhausted
// pool is replenished by resampling with replacement. A fixed
// validation_fraction of each pool is held out before training and scored
// with the same objective after every epoch.
TrainResult train_ddre(const MlpModel& model, const Eigen::MatrixXd& reference,
                       const Eigen::MatrixXd& evaluation, const ObjectiveKind& objective,
                       const TrainConfig& config);

} // namespace drcpd
