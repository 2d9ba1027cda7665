#ifndef PBNN_TRAINER_HPP
#define PBNN_TRAINER_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbnn/mnist.hpp"
#include "pbnn/network.hpp"
#include "pbnn/rng.hpp"

namespace pbnn::train {

struct TrainConfig {
    int epochs = 20;
    int batch_size = 100;
    double learning_rate = 1e-3;
    double lr_decay = 0.1;       // multiplier applied from lr_decay_epoch on
    int lr_decay_epoch = 15;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 1e-4;  // decoupled L2 on the logits
    uint64_t seed = 1;
    // gradient estimator settings
    double ste_clip = 1.0;       // straight-through window on scaled pre-activations
    double theta_clip = 6.0;     // logit clamp, keeps logistic'(theta) alive
    double init_spread = 1.0;    // theta ~ U(-s, s)
    double sigma_div_floor = 1e-4;  // floor on sigma inside the 1/(2 sigma) factor
    double sigma_scale = 1.0;       // multiplier on the reparameterization noise
    int sigma_warmup_epochs = 8;    // linear noise ramp: epoch e uses
                                    // sigma_scale * min(1, (e-1)/warmup)
    bool variance_gradient = true;  // backprop through sigma as well as mu
    double logit_scale = 1.0;       // extra softmax temperature on the final layer
    bool quantize_export = true;    // also project onto the Q=4 grid at export
    int eval_train_subset = 10000;  // images used for the train-accuracy column
    int grad_chunks = 8;            // fixed work split, independent of --threads

    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 0 is the untrained network
    double train_acc = 0.0;
    double test_acc = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    net::Architecture model;  // Bernoulli probabilities (BNN: saturated 0/1)
    std::vector<EpochStats> trace;
};

struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class WeightMode { Stochastic, DeterministicSign };

// ---- training net internals (exposed for the finite-difference oracle) ----

// One weighted stage: Conv or FC, an optional 2x2 max-pool, and a sign
// activation unless the stage feeds the softmax head. Pre-activations are
// scaled by 1/sqrt(fan_in); the sampled sign probabilities are invariant to
// that common factor, it only conditions the gradients.
struct CltStage {
    bool is_conv = false;
    bool pooled = false;
    bool sign_output = true;
    int fan_in = 0, fan_out = 0;
    int in_c = 0, in_h = 0, in_w = 0, kernel = 0;
    int out_h = 1, out_w = 1;  // pre-pool spatial dims
    float alpha = 1.0f;
    Eigen::MatrixXf theta;  // fan_in x fan_out logits

    // Adam state
    Eigen::MatrixXf adam_m, adam_v;
};

class CltNet {
public:
    CltNet(const net::Architecture& arch, WeightMode mode, const TrainConfig& config);

    // loss over the batch plus parameter gradients; noise is drawn from
    // derived per-chunk streams so the result is thread-count invariant
    double forward_backward(const Eigen::MatrixXf& images,
                            const std::vector<uint8_t>& labels, uint64_t noise_seed,
                            std::vector<Eigen::MatrixXf>& grads);

    // loss only, same noise draws as forward_backward for a given seed
    double loss(const Eigen::MatrixXf& images, const std::vector<uint8_t>& labels,
                uint64_t noise_seed);

    void adam_step(const std::vector<Eigen::MatrixXf>& grads, double lr, int step);

    // effective noise multiplier for the current epoch (training schedule)
    void set_noise_scale(double scale) { noise_scale_ = scale; }
    double noise_scale() const { return noise_scale_; }

    net::Architecture export_probabilities() const;

    std::vector<CltStage>& stages() { return stages_; }
    WeightMode mode() const { return mode_; }

private:
    net::Architecture arch_;
    WeightMode mode_;
    TrainConfig config_;
    std::vector<CltStage> stages_;
    double noise_scale_;
};

TrainResult train_pbnn(const TrainConfig& config, const data::MnistData& data);
TrainResult train_bnn_baseline(const TrainConfig& config, const data::MnistData& data);

// deterministic expectation-mode accuracy over [first, first+count)
double evaluate_accuracy(const net::Architecture& model, const data::Dataset& ds,
                         int first = 0, int count = -1);

struct VariationSpec {
    double sigma_w = 0.0;  // std of the additive Gaussian on the probability
};

struct VariationResult {
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::vector<double> per_trial;
};

// flip rate experienced by a deterministic sign weight under the same axis
double bnn_flip_rate(double sigma_w);

// PBNN: p <- clip(p + N(0, sigma_w^2)); BNN (deterministic weights): each
// sign flips with bnn_flip_rate(sigma_w). Trials use seeds {1..trials}.
VariationResult evaluate_under_variation(const net::Architecture& model,
                                         bool deterministic_weights,
                                         const VariationSpec& spec, int trials,
                                         uint64_t seed, const data::Dataset& ds,
                                         int subset = -1);

}  // namespace pbnn::train

#endif
