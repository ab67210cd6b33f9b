#pragma once

#include "bmdal/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bmdal {

enum class Activation { relu, silu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

// Fully connected network in the neural tangent parametrization:
//   z^(l) = sigma_w / sqrt(d_{l-1}) * W^(l) x^(l-1) + sigma_b * b^(l)
struct ModelConfig {
    std::vector<int> widths;  // d_0, ..., d_L with d_L = 1
    Activation activation = Activation::relu;
    double sigma_w = 0.2;
    double sigma_b = 0.2;
    std::uint64_t init_seed = 0;

    int depth() const { return static_cast<int>(widths.size()) - 1; }
    void validate() const;

    // sigma_w = sigma_b = 0.2 for relu, (0.5, 1.0) for silu.
    static ModelConfig standard(int d_in, const std::vector<int>& hidden, Activation act,
                                std::uint64_t seed);
};

struct ModelParams {
    std::vector<Mat> W;  // W[l-1] is d_l x d_{l-1}
    std::vector<Vec> b;  // b[l-1] has d_l entries
};

struct TrainConfig {
    int epochs = 256;
    int minibatch_size = 256;
    double initial_lr = 0.375;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t train_seed = 0;

    void validate() const;
    static TrainConfig defaults(Activation act);
};

struct TrainedModel {
    ModelConfig config;
    ModelParams params;
    std::vector<double> train_history;  // validation RMSE after each epoch
    int best_epoch = -1;                // 0-based index into train_history
};

enum class Precision { f32, f64 };

// Rows of X are samples. z[l-1] and x[l-1] hold layer l pre-activations and
// activations (n x d_l); x0 is the input itself.
struct ForwardCache {
    std::vector<Mat> z;
    std::vector<Mat> x;
};

struct ForwardResult {
    Vec predictions;
    ForwardCache cache;
};

// Per-layer factors of dz^(L)/dW~^(l) = out_l^T in_l, where W~ = [W | b].
struct GradFactors {
    std::vector<Mat> in;   // n x (d_{l-1} + 1), last column sigma_b
    std::vector<Mat> out;  // n x d_l
};

ModelParams init_network(const ModelConfig& config);

ForwardResult forward(const ModelParams& params, const ModelConfig& config, const Mat& X,
                      Precision precision = Precision::f64);
Vec predict(const TrainedModel& model, const Mat& X, Precision precision = Precision::f32);

TrainedModel train(const ModelParams& params, const ModelConfig& config, const TrainConfig& tc,
                   const Mat& X_train, const Vec& y_train, const Mat& X_valid, const Vec& y_valid);

Mat extract_ll_features(const ModelParams& params, const ModelConfig& config, const Mat& X,
                        Precision precision = Precision::f32);
Mat extract_ll_features(const TrainedModel& model, const Mat& X,
                        Precision precision = Precision::f32);

GradFactors extract_grad_factors(const ModelParams& params, const ModelConfig& config,
                                 const Mat& X, Precision precision = Precision::f32);
GradFactors extract_grad_factors(const TrainedModel& model, const Mat& X,
                                 Precision precision = Precision::f32);

}  // namespace bmdal
