#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedgan/bytes.hpp"
#include "fedgan/modmath.hpp"

namespace fedgan {

struct GanError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Activation { Linear, Tanh, Sigmoid };

struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;     // out
    Activation activation = Activation::Linear;
};

struct ModelParams {
    std::vector<Layer> layers;

    std::size_t input_dim() const { return layers.front().weights.cols(); }
    std::size_t output_dim() const { return layers.back().weights.rows(); }
    std::size_t parameter_count() const;
    /// Hash of shapes and activations only; equal across registries because
    /// architectures are homogeneous.
    Digest architecture_digest() const;
};

using GradientSet = ModelParams;  // same shape, values are d(loss)/d(param)

/// Batches are row-major: one sample per row.
struct ForwardCache {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre_activations;
    std::vector<Eigen::MatrixXd> activations;

    const Eigen::MatrixXd& output() const { return activations.back(); }
};

ForwardCache forward(const ModelParams& params, const Eigen::MatrixXd& batch);

/// Backprop through `params` given d(loss)/d(output). Returns the gradient
/// set; if `input_grad` is non-null it also receives d(loss)/d(input), which
/// the generator update needs to continue through the discriminator.
GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::MatrixXd& output_grad,
                     Eigen::MatrixXd* input_grad = nullptr);

// ---------------------------------------------------------------------------

struct SyntheticBatch {
    Eigen::MatrixXd rows;
    std::uint64_t source_iteration = 0;

    Bytes canonical_bytes() const;  // dims prefix + row-major f64 LE
    Digest digest() const;
};

Bytes canonical_matrix_bytes(const Eigen::MatrixXd& m);

struct LossPair {
    double d_loss = 0.0;
    double g_loss = 0.0;
};

inline constexpr double kProbClamp = 1e-7;

/// d_loss = -mean[log d_real + log(1 - d_fake)],
/// g_loss = -mean[log d_fake] (non-saturating). Probabilities are clamped to
/// [kProbClamp, 1 - kProbClamp] before the logs.
LossPair compute_losses(const Eigen::VectorXd& d_real,
                        const Eigen::VectorXd& d_fake);

/// Gradients of d_loss with respect to the discriminator parameters.
GradientSet discriminator_backward(const ModelParams& d_params,
                                   const Eigen::MatrixXd& real_batch,
                                   const Eigen::MatrixXd& fake_batch);

/// Gradients of the non-saturating g_loss with respect to the generator
/// parameters, backpropagated through the (frozen) discriminator.
GradientSet generator_backward(const ModelParams& g_params,
                               const ModelParams& d_params,
                               const Eigen::MatrixXd& noise);

ModelParams sgd_step(const ModelParams& params, const GradientSet& grads,
                     double lr);

ModelParams average_params(std::span<const ModelParams> all);

std::vector<double> flatten(const ModelParams& params);
ModelParams unflatten(std::span<const double> values,
                      const ModelParams& reference);

ModelParams zeros_like(const ModelParams& reference);

// ---------------------------------------------------------------------------

struct GanArchitecture {
    std::uint32_t noise_dim = 4;
    std::uint32_t hidden_dim = 16;
    std::uint32_t data_dim = 1;
};

/// Weights uniform in [-0.5, 0.5] from `rng`, biases zero.
ModelParams init_generator(const GanArchitecture& arch, Prng& rng);
ModelParams init_discriminator(const GanArchitecture& arch, Prng& rng);

Eigen::MatrixXd sample_noise(std::uint32_t batch, std::uint32_t noise_dim,
                             Prng& rng);

SyntheticBatch generator_forward(const ModelParams& g_params,
                                 const Eigen::MatrixXd& noise,
                                 std::uint64_t iteration);
Eigen::VectorXd discriminator_forward(const ModelParams& d_params,
                                      const Eigen::MatrixXd& batch);

// ---------------------------------------------------------------------------

struct Gaussian1D {
    double mean = 3.0;
    double stddev = 1.0;
};

struct MixtureComponent {
    double weight = 1.0;
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> stddev{1.0, 1.0};
};

struct GaussianMixture2D {
    std::vector<MixtureComponent> components;
};

struct TabularCategorical {
    // one column per entry; each inner vector is that column's marginals
    std::vector<std::vector<double>> marginals;
};

struct DataDistribution {
    std::variant<Gaussian1D, GaussianMixture2D, TabularCategorical> kind;

    std::uint32_t dim() const;
    Eigen::MatrixXd sample(std::uint32_t batch, Prng& rng) const;
};

}  // namespace fedgan
