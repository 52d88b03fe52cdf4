// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#pragma once

#include "simhaps/ee_optimizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace simhaps
{
    /// Fully connected network: 2NK inputs, `hidden_layers` × (affine → batch norm → ReLU)
    /// of width J, then an affine layer with NL+1 logistic outputs.
    struct NetworkSpec
    {
        int elements_per_layer = 25; // N
        int num_layers = 3;          // L
        int num_users = 4;           // K
        int hidden_width = 256;      // J
        int hidden_layers = 5;

        int input_dim() const { return 2 * elements_per_layer * num_users; }
        int output_dim() const { return elements_per_layer * num_layers + 1; }
        void validate() const;
    };

    /// 8J² + 4NKJ + 2J(NL+1) + 25J + 4NL + 4
    long long flops_estimate(const NetworkSpec &spec);

    /// Per-feature standardization; std of a constant feature is stored as 1.
    struct FeatureScaler
    {
        RVector mean;
        RVector std;

        static FeatureScaler fit(const RMatrix &features); // features are columns
        RMatrix apply(const RMatrix &features) const;
    };

    /// [Re h_1; … ; Re h_K; Im h_1; … ; Im h_K]
    RVector channel_features(const std::vector<CVector> &channels);

    struct Decision
    {
        double power = 0.0;
        PhaseConfig phases;
    };

    /// Cached activations of one training-mode forward pass.
    struct ForwardCache
    {
        std::vector<RMatrix> inputs;    // activation entering each affine layer
        std::vector<RMatrix> normalized; // x̂ per hidden layer
        std::vector<RMatrix> shifted;   // γx̂ + β per hidden layer (pre-ReLU)
        std::vector<RVector> inv_std;   // 1/√(σ²+ε) per hidden layer
        std::vector<RVector> batch_mean;
        std::vector<RVector> batch_var;
        RMatrix output;                 // logistic outputs
    };

    class Network
    {
    public:
        static constexpr double kBatchNormEpsilon = 1e-5;
        static constexpr double kBatchNormMomentum = 0.9;

        Network() = default;

        /// Fan-in uniform init U(-1/√fan_in, 1/√fan_in) for weights and biases; γ = 1, β = 0.
        static Network initialize(const NetworkSpec &spec, Rng &rng);

        /// All weights and biases zero, γ = 1, β = 0, identity scaler.
        static Network zeros(const NetworkSpec &spec);

        const NetworkSpec &spec() const { return spec_; }
        std::size_t num_parameters() const { return static_cast<std::size_t>(params_.size()); }

        RVector &parameters() { return params_; }
        const RVector &parameters() const { return params_; }

        FeatureScaler &scaler() { return scaler_; }
        const FeatureScaler &scaler() const { return scaler_; }

        std::vector<RVector> &running_mean() { return running_mean_; }
        std::vector<RVector> &running_var() { return running_var_; }
        const std::vector<RVector> &running_mean() const { return running_mean_; }
        const std::vector<RVector> &running_var() const { return running_var_; }

        /// Inference with frozen running statistics. `features` are raw (unscaled) columns.
        RMatrix predict(const RMatrix &features) const;

        /// Training-mode pass on already scaled columns using batch statistics.
        RMatrix forward_train(const RMatrix &scaled, ForwardCache &cache) const;

        /// Gradient of the loss w.r.t. all parameters given ∂loss/∂outputs.
        RVector backward(const ForwardCache &cache, const RMatrix &output_grad) const;

        /// running ← momentum·running + (1-momentum)·batch (unbiased batch variance).
        void update_running_stats(const ForwardCache &cache);

        Decision decide(const std::vector<CVector> &channels, double max_power) const;

        /// Offsets into the flat parameter vector.
        struct Block
        {
            Eigen::Index weight = 0, bias = 0, gain = 0, shift = 0; // gain/shift unused on the output layer
            int rows = 0, cols = 0;
        };
        const std::vector<Block> &layout() const { return layout_; }

    private:
        NetworkSpec spec_;
        std::vector<Block> layout_; // hidden layers then the output layer
        RVector params_;
        std::vector<RVector> running_mean_;
        std::vector<RVector> running_var_;
        FeatureScaler scaler_;

        void build_layout();
    };

    /// Output column o ↦ (P = o_0·P_max, θ_n^l = o_{1+(l-1)N+n}·2π).
    Decision map_output(const Eigen::Ref<const RVector> &output, int num_layers, int elements_per_layer,
                        double max_power);

    struct SampleLoss
    {
        double ee = 0.0;        // bit/J
        double violation = 0.0; // ϱ_s
        double loss = 0.0;      // -(EE·scale - ρ·ϱ_s), before the 1/S factor
    };

    /// Loss of one sample and, when `output_grad` is non-null, ∂loss/∂o (before the 1/S factor).
    /// EE enters the loss in units of `ee_scale` bit/J (1e-6 gives Mbit/J).
    SampleLoss sample_loss(const EEScenario &scenario, const Eigen::Ref<const RVector> &output, double penalty,
                           double ee_scale, RVector *output_grad);

    struct TrainerConfig
    {
        double learning_rate = 0.2;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double adam_epsilon = 1e-8;
        int batch_size = 50;
        int max_epochs = 2000;
        int patience = 100;           // plateau window in epochs
        double plateau_tolerance = 1e-4; // minimum improvement of the best loss within the window
        double divergence_factor = 1e3;  // abort when loss exceeds this multiple of |initial loss|
        double penalty = 100.0;
        double ee_scale = 1e-6;
        std::uint64_t seed = 1;
    };

    struct TrainingReport
    {
        std::vector<double> loss_history; // mean loss per epoch
        int epochs = 0;
        bool early_stopped = false;
        double final_loss = 0.0;
    };

    /// Adam state kept alongside the parameters.
    struct AdamState
    {
        RVector first;
        RVector second;
        long step = 0;
    };

    /// Channel realizations h_1..h_K of one training or test sample.
    using ChannelSample = std::vector<CVector>;

    /// Mean loss over a minibatch and, when `gradient` is non-null, its parameter gradient.
    /// `base` supplies propagation, thresholds and P_max; its channels are replaced per sample.
    double batch_loss(const Network &network, const EEScenario &base, const std::vector<const ChannelSample *> &samples,
                      const RMatrix &scaled, const TrainerConfig &config, RVector *gradient, ForwardCache *cache);

    /// Minibatch Adam on the penalized negative EE. Fits the input scaler on the training set.
    /// Throws numerical error on a non-finite gradient or when the loss diverges.
    TrainingReport train(Network &network, const EEScenario &base, const std::vector<ChannelSample> &dataset,
                         const TrainerConfig &config);

    /// Trailing moving average; entry i averages values[max(0, i-window+1) .. i].
    std::vector<double> moving_average(const std::vector<double> &values, int window);

    struct ModelMetadata
    {
        std::uint64_t seed = 0;
        int epochs = 0;
        double final_loss = 0.0;
        double max_power = 0.0;
    };

    /// Versioned JSON; doubles are written with shortest round-trip precision.
    void save_model(const Network &network, const ModelMetadata &metadata, const std::string &path);
    Network load_model(const std::string &path, ModelMetadata *metadata = nullptr);

} // namespace simhaps
