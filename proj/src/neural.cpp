// SPDX-License-Identifier: Apache-2.0
//
// simhaps: SIM-assisted HAPS downlink simulation and energy-efficiency optimization
// ------------------------------------------------------------------------

#include "simhaps/neural.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace simhaps
{
    void NetworkSpec::validate() const
    {
        if (elements_per_layer < 1 || num_layers < 1 || num_users < 1)
            throw Error(ErrorKind::config, "network dimensions N, L, K must be positive");
        if (hidden_width < 1 || hidden_layers < 1)
            throw Error(ErrorKind::config, "network needs at least one hidden layer of positive width");
    }

    long long flops_estimate(const NetworkSpec &spec)
    {
        const long long j = spec.hidden_width;
        const long long n = spec.elements_per_layer;
        const long long k = spec.num_users;
        const long long l = spec.num_layers;
        return 8 * j * j + 4 * n * k * j + 2 * j * (n * l + 1) + 25 * j + 4 * n * l + 4;
    }

    FeatureScaler FeatureScaler::fit(const RMatrix &features)
    {
        if (features.cols() < 1)
            throw Error(ErrorKind::config, "cannot fit a scaler on an empty dataset");
        FeatureScaler s;
        s.mean = features.rowwise().mean();
        const RMatrix centered = features.colwise() - s.mean;
        s.std = (centered.array().square().rowwise().sum() / static_cast<double>(features.cols())).sqrt();
        for (Eigen::Index i = 0; i < s.std.size(); ++i)
            if (!(s.std(i) > 0.0))
                s.std(i) = 1.0;
        return s;
    }

    RMatrix FeatureScaler::apply(const RMatrix &features) const
    {
        return (features.colwise() - mean).array().colwise() / std.array();
    }

    RVector channel_features(const std::vector<CVector> &channels)
    {
        const auto k = static_cast<Eigen::Index>(channels.size());
        const Eigen::Index n = k > 0 ? channels.front().size() : 0;
        RVector f(2 * n * k);
        for (Eigen::Index i = 0; i < k; ++i)
        {
            const CVector &h = channels[static_cast<std::size_t>(i)];
            f.segment(i * n, n) = h.real();
            f.segment((k + i) * n, n) = h.imag();
        }
        return f;
    }

    namespace
    {
        RMatrix logistic(const RMatrix &z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }
    } // namespace

    void Network::build_layout()
    {
        layout_.clear();
        Eigen::Index offset = 0;
        int fan_in = spec_.input_dim();
        for (int h = 0; h <= spec_.hidden_layers; ++h)
        {
            const bool output = h == spec_.hidden_layers;
            Block b;
            b.rows = output ? spec_.output_dim() : spec_.hidden_width;
            b.cols = fan_in;
            b.weight = offset;
            offset += static_cast<Eigen::Index>(b.rows) * b.cols;
            b.bias = offset;
            offset += b.rows;
            if (!output)
            {
                b.gain = offset;
                offset += b.rows;
                b.shift = offset;
                offset += b.rows;
            }
            layout_.push_back(b);
            fan_in = b.rows;
        }
        params_ = RVector::Zero(offset);
        running_mean_.assign(static_cast<std::size_t>(spec_.hidden_layers), RVector::Zero(spec_.hidden_width));
        running_var_.assign(static_cast<std::size_t>(spec_.hidden_layers), RVector::Ones(spec_.hidden_width));
        for (int h = 0; h < spec_.hidden_layers; ++h)
            params_.segment(layout_[static_cast<std::size_t>(h)].gain, spec_.hidden_width).setOnes();
        scaler_.mean = RVector::Zero(spec_.input_dim());
        scaler_.std = RVector::Ones(spec_.input_dim());
    }

    Network Network::zeros(const NetworkSpec &spec)
    {
        spec.validate();
        Network net;
        net.spec_ = spec;
        net.build_layout();
        return net;
    }

    Network Network::initialize(const NetworkSpec &spec, Rng &rng)
    {
        Network net = zeros(spec);
        for (const Block &b : net.layout_)
        {
            std::uniform_real_distribution<double> u(-1.0 / std::sqrt(b.cols), 1.0 / std::sqrt(b.cols));
            const Eigen::Index count = static_cast<Eigen::Index>(b.rows) * b.cols + b.rows; // weight then bias
            for (Eigen::Index i = 0; i < count; ++i)
                net.params_(b.weight + i) = u(rng);
        }
        return net;
    }

    namespace
    {
        using ConstMatMap = Eigen::Map<const RMatrix>;
        using MatMap = Eigen::Map<RMatrix>;
    } // namespace

    RMatrix Network::predict(const RMatrix &features) const
    {
        RMatrix a = scaler_.apply(features);
        for (int h = 0; h <= spec_.hidden_layers; ++h)
        {
            const Block &b = layout_[static_cast<std::size_t>(h)];
            const ConstMatMap w(params_.data() + b.weight, b.rows, b.cols);
            RMatrix z = (w * a).colwise() + params_.segment(b.bias, b.rows);
            if (h == spec_.hidden_layers)
                return logistic(z);
            const auto hs = static_cast<std::size_t>(h);
            const RVector scale = params_.segment(b.gain, b.rows).array() /
                                  (running_var_[hs].array() + kBatchNormEpsilon).sqrt();
            const RVector offset = params_.segment(b.shift, b.rows).array() - running_mean_[hs].array() * scale.array();
            a = ((z.array().colwise() * scale.array()).colwise() + offset.array()).cwiseMax(0.0).matrix();
        }
        return a; // unreachable
    }

    RMatrix Network::forward_train(const RMatrix &scaled, ForwardCache &cache) const
    {
        const auto hl = static_cast<std::size_t>(spec_.hidden_layers);
        cache.inputs.assign(hl + 1, RMatrix());
        cache.normalized.assign(hl, RMatrix());
        cache.shifted.assign(hl, RMatrix());
        cache.inv_std.assign(hl, RVector());
        cache.batch_mean.assign(hl, RVector());
        cache.batch_var.assign(hl, RVector());

        const double s = static_cast<double>(scaled.cols());
        RMatrix a = scaled;
        for (std::size_t h = 0; h <= hl; ++h)
        {
            const Block &b = layout_[h];
            const ConstMatMap w(params_.data() + b.weight, b.rows, b.cols);
            cache.inputs[h] = a;
            RMatrix z = (w * a).colwise() + params_.segment(b.bias, b.rows);
            if (h == hl)
            {
                cache.output = logistic(z);
                return cache.output;
            }
            const RVector mu = z.rowwise().mean();
            z.colwise() -= mu;
            const RVector var = z.array().square().rowwise().sum() / s;
            const RVector inv = (var.array() + kBatchNormEpsilon).rsqrt();
            RMatrix xhat = z.array().colwise() * inv.array();
            RMatrix y = (xhat.array().colwise() * params_.segment(b.gain, b.rows).array()).colwise() +
                        params_.segment(b.shift, b.rows).array();
            a = y.cwiseMax(0.0);
            cache.batch_mean[h] = mu;
            cache.batch_var[h] = var;
            cache.inv_std[h] = inv;
            cache.normalized[h] = std::move(xhat);
            cache.shifted[h] = std::move(y);
        }
        return cache.output; // unreachable
    }

    RVector Network::backward(const ForwardCache &cache, const RMatrix &output_grad) const
    {
        RVector grad = RVector::Zero(params_.size());
        const auto hl = static_cast<std::size_t>(spec_.hidden_layers);
        const double s = static_cast<double>(output_grad.cols());

        // logistic'(z) = o(1-o)
        RMatrix dz = output_grad.array() * cache.output.array() * (1.0 - cache.output.array());
        for (std::size_t h = hl + 1; h-- > 0;)
        {
            const Block &b = layout_[h];
            if (h < hl)
            {
                // dz currently holds ∂/∂(post-ReLU activation) of layer h
                RMatrix dy = (cache.shifted[h].array() > 0.0).select(dz, 0.0);
                const RMatrix &xhat = cache.normalized[h];
                grad.segment(b.gain, b.rows) = (dy.array() * xhat.array()).rowwise().sum();
                grad.segment(b.shift, b.rows) = dy.rowwise().sum();
                const RMatrix dxhat = dy.array().colwise() * params_.segment(b.gain, b.rows).array();
                const RVector sum_dxhat = dxhat.rowwise().sum();
                const RVector sum_dxhat_xhat = (dxhat.array() * xhat.array()).rowwise().sum();
                dz = ((s * dxhat.array()).colwise() - sum_dxhat.array() -
                      xhat.array().colwise() * sum_dxhat_xhat.array())
                         .colwise() *
                     (cache.inv_std[h].array() / s);
            }
            MatMap(grad.data() + b.weight, b.rows, b.cols) = dz * cache.inputs[h].transpose();
            grad.segment(b.bias, b.rows) = dz.rowwise().sum();
            if (h > 0)
            {
                const ConstMatMap w(params_.data() + b.weight, b.rows, b.cols);
                dz = w.transpose() * dz;
            }
        }
        return grad;
    }

    void Network::update_running_stats(const ForwardCache &cache)
    {
        const double m = kBatchNormMomentum;
        for (std::size_t h = 0; h < running_mean_.size(); ++h)
        {
            const double s = static_cast<double>(cache.normalized[h].cols());
            const double unbias = s > 1.0 ? s / (s - 1.0) : 1.0;
            running_mean_[h] = m * running_mean_[h] + (1.0 - m) * cache.batch_mean[h];
            running_var_[h] = m * running_var_[h] + (1.0 - m) * unbias * cache.batch_var[h];
        }
    }

    Decision map_output(const Eigen::Ref<const RVector> &output, int num_layers, int elements_per_layer,
                        double max_power)
    {
        Decision d;
        d.power = output(0) * max_power;
        RMatrix theta(num_layers, elements_per_layer);
        for (int l = 0; l < num_layers; ++l)
            for (int n = 0; n < elements_per_layer; ++n)
                theta(l, n) = output(1 + l * elements_per_layer + n) * kTwoPi;
        d.phases = PhaseConfig(theta);
        return d;
    }

    Decision Network::decide(const std::vector<CVector> &channels, double max_power) const
    {
        const RMatrix out = predict(channel_features(channels));
        return map_output(out.col(0), spec_.num_layers, spec_.elements_per_layer, max_power);
    }

    SampleLoss sample_loss(const EEScenario &scenario, const Eigen::Ref<const RVector> &output, double penalty,
                           double ee_scale, RVector *output_grad)
    {
        const auto &prob = scenario.problem;
        const Decision d = map_output(output, scenario.num_layers(), scenario.elements_per_layer(), prob.max_power);
        const LinkSnapshot snap = link_snapshot(scenario, d.phases);
        const double denom = d.power / prob.power.pa_efficiency + scenario.circuit_power();

        SampleLoss out;
        if (!output_grad)
        {
            const LinkRates r = rates_at(scenario, snap, d.power);
            out.ee = prob.power.bandwidth * r.sum_rate() / denom;
            out.violation = std::max(0.0, d.power - prob.max_power) +
                            std::max(0.0, prob.multicast_rate_threshold - r.multicast_rate);
            for (Eigen::Index i = 0; i < r.unicast_rates.size(); ++i)
                out.violation += std::max(0.0, prob.unicast_rate_threshold(i) - r.unicast_rates(i));
            out.loss = -(out.ee * ee_scale - penalty * out.violation);
            return out;
        }

        const RateSensitivity s = rate_sensitivity(scenario, d.phases, snap, d.power);
        const LinkRates &r = s.rates;
        const double sum_rate = r.sum_rate();
        out.ee = prob.power.bandwidth * sum_rate / denom;

        double dsum_dp = s.multicast_dpower + s.unicast_dpower.sum();
        RMatrix dsum_dtheta = s.multicast_dphase;
        double dviol_dp = d.power > prob.max_power ? 1.0 : 0.0;
        RMatrix dviol_dtheta = RMatrix::Zero(s.multicast_dphase.rows(), s.multicast_dphase.cols());

        out.violation = std::max(0.0, d.power - prob.max_power);
        if (r.multicast_rate < prob.multicast_rate_threshold)
        {
            out.violation += prob.multicast_rate_threshold - r.multicast_rate;
            dviol_dp -= s.multicast_dpower;
            dviol_dtheta -= s.multicast_dphase;
        }
        for (Eigen::Index i = 0; i < r.unicast_rates.size(); ++i)
        {
            const auto idx = static_cast<std::size_t>(i);
            dsum_dtheta += s.unicast_dphase[idx];
            if (r.unicast_rates(i) < prob.unicast_rate_threshold(i))
            {
                out.violation += prob.unicast_rate_threshold(i) - r.unicast_rates(i);
                dviol_dp -= s.unicast_dpower(i);
                dviol_dtheta -= s.unicast_dphase[idx];
            }
        }
        out.loss = -(out.ee * ee_scale - penalty * out.violation);

        const double wb = prob.power.bandwidth;
        const double dee_dp = wb * (dsum_dp * denom - sum_rate / prob.power.pa_efficiency) / (denom * denom);
        const double dloss_dp = -(ee_scale * dee_dp - penalty * dviol_dp);
        const RMatrix dloss_dtheta = -(ee_scale * wb / denom) * dsum_dtheta + penalty * dviol_dtheta;

        RVector &g = *output_grad;
        g.resize(output.size());
        g(0) = dloss_dp * prob.max_power;
        const int n = scenario.elements_per_layer();
        for (int l = 0; l < scenario.num_layers(); ++l)
            for (int e = 0; e < n; ++e)
                g(1 + l * n + e) = dloss_dtheta(l, e) * kTwoPi;
        return out;
    }

    double batch_loss(const Network &network, const EEScenario &base, const std::vector<const ChannelSample *> &samples,
                      const RMatrix &scaled, const TrainerConfig &config, RVector *gradient, ForwardCache *cache)
    {
        ForwardCache local;
        ForwardCache &c = cache ? *cache : local;
        const RMatrix out = network.forward_train(scaled, c);
        const double s = static_cast<double>(samples.size());

        EEScenario work = base;
        RMatrix out_grad(out.rows(), out.cols());
        double total = 0.0;
        RVector g;
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            work.channels = *samples[i];
            const auto col = static_cast<Eigen::Index>(i);
            const SampleLoss sl = sample_loss(work, out.col(col), config.penalty, config.ee_scale, gradient ? &g : nullptr);
            total += sl.loss;
            if (gradient)
                out_grad.col(col) = g / s;
        }
        if (gradient)
            *gradient = network.backward(c, out_grad);
        return total / s;
    }

    std::vector<double> moving_average(const std::vector<double> &values, int window)
    {
        if (window < 1)
            throw Error(ErrorKind::domain, "moving-average window must be positive");
        std::vector<double> out(values.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i)
        {
            acc += values[i];
            if (i >= static_cast<std::size_t>(window))
                acc -= values[i - static_cast<std::size_t>(window)];
            out[i] = acc / static_cast<double>(std::min<std::size_t>(i + 1, static_cast<std::size_t>(window)));
        }
        return out;
    }

    TrainingReport train(Network &network, const EEScenario &base, const std::vector<ChannelSample> &dataset,
                         const TrainerConfig &config)
    {
        base.validate();
        if (dataset.size() < 2)
            throw Error(ErrorKind::config, "training needs at least two samples");
        if (config.batch_size < 2)
            throw Error(ErrorKind::config, "batch size must be at least 2 for batch normalization");

        const auto count = static_cast<Eigen::Index>(dataset.size());
        RMatrix features(network.spec().input_dim(), count);
        for (Eigen::Index i = 0; i < count; ++i)
            features.col(i) = channel_features(dataset[static_cast<std::size_t>(i)]);
        network.scaler() = FeatureScaler::fit(features);
        const RMatrix scaled = network.scaler().apply(features);

        AdamState adam{RVector::Zero(static_cast<Eigen::Index>(network.num_parameters())),
                       RVector::Zero(static_cast<Eigen::Index>(network.num_parameters())), 0};
        Rng rng(derive_seed(config.seed, 0x7472, 0));
        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), std::size_t{0});

        TrainingReport rep;
        double initial = 0.0;
        double best = std::numeric_limits<double>::infinity();
        int best_epoch = 0;
        const auto batch = static_cast<std::size_t>(config.batch_size);

        for (int epoch = 1; epoch <= config.max_epochs; ++epoch)
        {
            std::shuffle(order.begin(), order.end(), rng);
            double sum = 0.0;
            std::size_t seen = 0;
            for (std::size_t start = 0; start + 1 < order.size(); start += batch)
            {
                const std::size_t stop = std::min(order.size(), start + batch);
                if (stop - start < 2)
                    break;
                std::vector<const ChannelSample *> samples;
                RMatrix cols(scaled.rows(), static_cast<Eigen::Index>(stop - start));
                for (std::size_t i = start; i < stop; ++i)
                {
                    samples.push_back(&dataset[order[i]]);
                    cols.col(static_cast<Eigen::Index>(i - start)) = scaled.col(static_cast<Eigen::Index>(order[i]));
                }
                RVector grad;
                ForwardCache cache;
                const double loss = batch_loss(network, base, samples, cols, config, &grad, &cache);
                if (!std::isfinite(loss) || !grad.allFinite())
                    throw Error(ErrorKind::numerical, "non-finite loss or gradient at epoch " + std::to_string(epoch));
                network.update_running_stats(cache);

                ++adam.step;
                adam.first = config.beta1 * adam.first + (1.0 - config.beta1) * grad;
                adam.second = config.beta2 * adam.second + (1.0 - config.beta2) * grad.cwiseAbs2();
                const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.step));
                const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.step));
                network.parameters().array() -= config.learning_rate * (adam.first.array() / c1) /
                                                ((adam.second.array() / c2).sqrt() + config.adam_epsilon);

                sum += loss * static_cast<double>(stop - start);
                seen += stop - start;
            }
            const double epoch_loss = sum / static_cast<double>(seen);
            rep.loss_history.push_back(epoch_loss);
            rep.epochs = epoch;
            if (epoch == 1)
                initial = epoch_loss;
            else if (epoch_loss > config.divergence_factor * std::max(std::abs(initial), 1e-12))
                throw Error(ErrorKind::numerical, "training diverged at epoch " + std::to_string(epoch));

            if (epoch_loss < best - config.plateau_tolerance * std::max(std::abs(best), 1.0) ||
                !std::isfinite(best))
            {
                best = epoch_loss;
                best_epoch = epoch;
            }
            else if (epoch - best_epoch >= config.patience)
            {
                rep.early_stopped = true;
                break;
            }
        }
        rep.final_loss = rep.loss_history.back();
        return rep;
    }

    namespace
    {
        using nlohmann::json;

        constexpr const char *kModelFormat = "simhaps-mlp";
        constexpr int kModelVersion = 1;

        json to_json(const RVector &v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

        RVector vector_from(const json &j, Eigen::Index expected, const char *what)
        {
            const auto v = j.get<std::vector<double>>();
            if (static_cast<Eigen::Index>(v.size()) != expected)
                throw Error(ErrorKind::config, std::string("model field '") + what + "' has the wrong length");
            return Eigen::Map<const RVector>(v.data(), expected);
        }
    } // namespace

    void save_model(const Network &network, const ModelMetadata &metadata, const std::string &path)
    {
        const NetworkSpec &s = network.spec();
        json j;
        j["format"] = kModelFormat;
        j["version"] = kModelVersion;
        j["spec"] = {{"elements_per_layer", s.elements_per_layer},
                     {"num_layers", s.num_layers},
                     {"num_users", s.num_users},
                     {"hidden_width", s.hidden_width},
                     {"hidden_layers", s.hidden_layers}};
        j["parameters"] = to_json(network.parameters());
        j["running_mean"] = json::array();
        j["running_var"] = json::array();
        for (std::size_t h = 0; h < network.running_mean().size(); ++h)
        {
            j["running_mean"].push_back(to_json(network.running_mean()[h]));
            j["running_var"].push_back(to_json(network.running_var()[h]));
        }
        j["scaler"] = {{"mean", to_json(network.scaler().mean)}, {"std", to_json(network.scaler().std)}};
        j["metadata"] = {{"seed", metadata.seed},
                         {"epochs", metadata.epochs},
                         {"final_loss", metadata.final_loss},
                         {"max_power_w", metadata.max_power}};

        std::ofstream out(path);
        if (!out)
            throw Error(ErrorKind::config, "cannot open '" + path + "' for writing");
        out << j.dump() << '\n';
        if (!out)
            throw Error(ErrorKind::config, "failed writing '" + path + "'");
    }

    Network load_model(const std::string &path, ModelMetadata *metadata)
    {
        std::ifstream in(path);
        if (!in)
            throw Error(ErrorKind::config, "cannot open model file '" + path + "'");
        json j;
        try
        {
            in >> j;
            if (j.at("format").get<std::string>() != kModelFormat)
                throw Error(ErrorKind::config, "'" + path + "' is not a simhaps model");
            if (j.at("version").get<int>() != kModelVersion)
                throw Error(ErrorKind::config, "unsupported model version in '" + path + "'");

            NetworkSpec s;
            const json &js = j.at("spec");
            s.elements_per_layer = js.at("elements_per_layer").get<int>();
            s.num_layers = js.at("num_layers").get<int>();
            s.num_users = js.at("num_users").get<int>();
            s.hidden_width = js.at("hidden_width").get<int>();
            s.hidden_layers = js.at("hidden_layers").get<int>();

            Network net = Network::zeros(s);
            net.parameters() = vector_from(j.at("parameters"), net.parameters().size(), "parameters");
            const auto &rm = j.at("running_mean");
            const auto &rv = j.at("running_var");
            if (rm.size() != net.running_mean().size() || rv.size() != net.running_var().size())
                throw Error(ErrorKind::config, "model batch-norm statistics do not match the spec");
            for (std::size_t h = 0; h < rm.size(); ++h)
            {
                net.running_mean()[h] = vector_from(rm[h], s.hidden_width, "running_mean");
                net.running_var()[h] = vector_from(rv[h], s.hidden_width, "running_var");
            }
            net.scaler().mean = vector_from(j.at("scaler").at("mean"), s.input_dim(), "scaler.mean");
            net.scaler().std = vector_from(j.at("scaler").at("std"), s.input_dim(), "scaler.std");
            if (metadata)
            {
                const json &m = j.at("metadata");
                metadata->seed = m.at("seed").get<std::uint64_t>();
                metadata->epochs = m.at("epochs").get<int>();
                metadata->final_loss = m.at("final_loss").get<double>();
                metadata->max_power = m.at("max_power_w").get<double>();
            }
            return net;
        }
        catch (const json::exception &e)
        {
            throw Error(ErrorKind::config, "malformed model file '" + path + "': " + e.what());
        }
    }

} // namespace simhaps
