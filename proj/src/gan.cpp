#include "fedgan/gan.hpp"

#include <cmath>
#include <cstring>

namespace fedgan {

namespace {

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& z) {
    switch (act) {
        case Activation::Linear:
            return z;
        case Activation::Tanh:
            return z.array().tanh();
        case Activation::Sigmoid:
            return 1.0 / (1.0 + (-z.array()).exp());
    }
    throw GanError("unknown activation");
}

// derivative expressed via the activation value a = act(z)
Eigen::MatrixXd activation_derivative(Activation act, const Eigen::MatrixXd& a) {
    switch (act) {
        case Activation::Linear:
            return Eigen::MatrixXd::Ones(a.rows(), a.cols());
        case Activation::Tanh:
            return 1.0 - a.array().square();
        case Activation::Sigmoid:
            return a.array() * (1.0 - a.array());
    }
    throw GanError("unknown activation");
}

const char* activation_name(Activation act) {
    switch (act) {
        case Activation::Linear: return "linear";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

Eigen::ArrayXd clamp_probs(const Eigen::VectorXd& p) {
    return p.array().max(kProbClamp).min(1.0 - kProbClamp);
}

}  // namespace

std::size_t ModelParams::parameter_count() const {
    std::size_t count = 0;
    for (const auto& layer : layers)
        count += static_cast<std::size_t>(layer.weights.size()) +
                 static_cast<std::size_t>(layer.bias.size());
    return count;
}

Digest ModelParams::architecture_digest() const {
    Bytes material;
    for (const auto& layer : layers) {
        append_u32_be(material, static_cast<std::uint32_t>(layer.weights.rows()));
        append_u32_be(material, static_cast<std::uint32_t>(layer.weights.cols()));
        append_field(material, activation_name(layer.activation));
    }
    return sha256(material);
}

ForwardCache forward(const ModelParams& params, const Eigen::MatrixXd& batch) {
    if (batch.cols() != static_cast<Eigen::Index>(params.input_dim()))
        throw GanError("forward: batch width does not match input dim");
    ForwardCache cache;
    cache.input = batch;
    const Eigen::MatrixXd* prev = &cache.input;
    for (const auto& layer : params.layers) {
        Eigen::MatrixXd z =
            (*prev * layer.weights.transpose()).rowwise() + layer.bias.transpose();
        cache.pre_activations.push_back(z);
        cache.activations.push_back(apply_activation(layer.activation, z));
        prev = &cache.activations.back();
    }
    return cache;
}

GradientSet backward(const ModelParams& params, const ForwardCache& cache,
                     const Eigen::MatrixXd& output_grad,
                     Eigen::MatrixXd* input_grad) {
    if (output_grad.rows() != cache.output().rows() ||
        output_grad.cols() != cache.output().cols())
        throw GanError("backward: output gradient shape mismatch");
    GradientSet grads = zeros_like(params);
    Eigen::MatrixXd da = output_grad;
    for (int l = static_cast<int>(params.layers.size()) - 1; l >= 0; --l) {
        const Layer& layer = params.layers[l];
        Eigen::MatrixXd dz =
            da.array() *
            activation_derivative(layer.activation, cache.activations[l]).array();
        const Eigen::MatrixXd& prev =
            l == 0 ? cache.input : cache.activations[l - 1];
        grads.layers[l].weights = dz.transpose() * prev;
        grads.layers[l].bias = dz.colwise().sum().transpose();
        if (l > 0 || input_grad != nullptr) da = dz * layer.weights;
    }
    if (input_grad != nullptr) *input_grad = da;
    return grads;
}

// ---------------------------------------------------------------------------

Bytes canonical_matrix_bytes(const Eigen::MatrixXd& m) {
    Bytes out;
    auto append_u32_le = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i)
            out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    };
    append_u32_le(static_cast<std::uint32_t>(m.rows()));
    append_u32_le(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            double v = m(r, c);
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof(bits));
            for (int i = 0; i < 8; ++i)
                out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
    }
    return out;
}

Bytes SyntheticBatch::canonical_bytes() const {
    return canonical_matrix_bytes(rows);
}

Digest SyntheticBatch::digest() const {
    return sha256(std::span<const std::uint8_t>(canonical_bytes()));
}

LossPair compute_losses(const Eigen::VectorXd& d_real,
                        const Eigen::VectorXd& d_fake) {
    if (d_real.size() == 0 || d_fake.size() == 0)
        throw GanError("compute_losses: empty probability vector");
    Eigen::ArrayXd pr = clamp_probs(d_real);
    Eigen::ArrayXd pf = clamp_probs(d_fake);
    LossPair out;
    out.d_loss = -(pr.log().mean() + (1.0 - pf).log().mean());
    out.g_loss = -pf.log().mean();
    return out;
}

GradientSet discriminator_backward(const ModelParams& d_params,
                                   const Eigen::MatrixXd& real_batch,
                                   const Eigen::MatrixXd& fake_batch) {
    ForwardCache real_cache = forward(d_params, real_batch);
    ForwardCache fake_cache = forward(d_params, fake_batch);
    Eigen::ArrayXd pr = clamp_probs(real_cache.output().col(0));
    Eigen::ArrayXd pf = clamp_probs(fake_cache.output().col(0));
    // d/dp of -mean log p  and  -mean log(1-p)
    Eigen::MatrixXd real_grad =
        (-1.0 / (static_cast<double>(pr.size()) * pr)).matrix();
    Eigen::MatrixXd fake_grad =
        (1.0 / (static_cast<double>(pf.size()) * (1.0 - pf))).matrix();
    GradientSet g_real = backward(d_params, real_cache, real_grad);
    GradientSet g_fake = backward(d_params, fake_cache, fake_grad);
    for (std::size_t l = 0; l < g_real.layers.size(); ++l) {
        g_real.layers[l].weights += g_fake.layers[l].weights;
        g_real.layers[l].bias += g_fake.layers[l].bias;
    }
    return g_real;
}

GradientSet generator_backward(const ModelParams& g_params,
                               const ModelParams& d_params,
                               const Eigen::MatrixXd& noise) {
    ForwardCache g_cache = forward(g_params, noise);
    ForwardCache d_cache = forward(d_params, g_cache.output());
    Eigen::ArrayXd pf = clamp_probs(d_cache.output().col(0));
    // non-saturating loss: d/dp of -mean log p
    Eigen::MatrixXd fake_grad =
        (-1.0 / (static_cast<double>(pf.size()) * pf)).matrix();
    Eigen::MatrixXd d_input_grad;
    backward(d_params, d_cache, fake_grad, &d_input_grad);
    return backward(g_params, g_cache, d_input_grad);
}

ModelParams sgd_step(const ModelParams& params, const GradientSet& grads,
                     double lr) {
    if (params.layers.size() != grads.layers.size())
        throw GanError("sgd_step: shape mismatch");
    ModelParams out = params;
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
        if (!grads.layers[l].weights.allFinite() ||
            !grads.layers[l].bias.allFinite())
            throw GanError("sgd_step: non-finite gradient (training fault)");
        if (grads.layers[l].weights.rows() != out.layers[l].weights.rows() ||
            grads.layers[l].weights.cols() != out.layers[l].weights.cols())
            throw GanError("sgd_step: shape mismatch");
        out.layers[l].weights -= lr * grads.layers[l].weights;
        out.layers[l].bias -= lr * grads.layers[l].bias;
    }
    return out;
}

ModelParams average_params(std::span<const ModelParams> all) {
    if (all.empty()) throw GanError("average_params: empty input");
    Digest digest = all.front().architecture_digest();
    for (const auto& p : all)
        if (p.architecture_digest() != digest)
            throw GanError("average_params: architecture digest mismatch");
    ModelParams out = zeros_like(all.front());
    for (const auto& p : all) {
        for (std::size_t l = 0; l < out.layers.size(); ++l) {
            out.layers[l].weights += p.layers[l].weights;
            out.layers[l].bias += p.layers[l].bias;
        }
    }
    double inv = 1.0 / static_cast<double>(all.size());
    for (auto& layer : out.layers) {
        layer.weights *= inv;
        layer.bias *= inv;
    }
    return out;
}

std::vector<double> flatten(const ModelParams& params) {
    std::vector<double> out;
    out.reserve(params.parameter_count());
    for (const auto& layer : params.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                out.push_back(layer.weights(r, c));
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            out.push_back(layer.bias(i));
    }
    return out;
}

ModelParams unflatten(std::span<const double> values,
                      const ModelParams& reference) {
    if (values.size() != reference.parameter_count())
        throw GanError("unflatten: length mismatch");
    ModelParams out = reference;
    std::size_t pos = 0;
    for (auto& layer : out.layers) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
                layer.weights(r, c) = values[pos++];
        for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
            layer.bias(i) = values[pos++];
    }
    return out;
}

ModelParams zeros_like(const ModelParams& reference) {
    ModelParams out = reference;
    for (auto& layer : out.layers) {
        layer.weights.setZero();
        layer.bias.setZero();
    }
    return out;
}

// ---------------------------------------------------------------------------

namespace {

Layer init_layer(std::uint32_t out_dim, std::uint32_t in_dim, Activation act,
                 Prng& rng) {
    Layer layer;
    layer.weights.resize(out_dim, in_dim);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
            layer.weights(r, c) = rng.next_unit() - 0.5;
    layer.bias = Eigen::VectorXd::Zero(out_dim);
    layer.activation = act;
    return layer;
}

}  // namespace

ModelParams init_generator(const GanArchitecture& arch, Prng& rng) {
    ModelParams p;
    p.layers.push_back(init_layer(arch.hidden_dim, arch.noise_dim,
                                  Activation::Tanh, rng));
    p.layers.push_back(init_layer(arch.data_dim, arch.hidden_dim,
                                  Activation::Linear, rng));
    return p;
}

ModelParams init_discriminator(const GanArchitecture& arch, Prng& rng) {
    ModelParams p;
    p.layers.push_back(init_layer(arch.hidden_dim, arch.data_dim,
                                  Activation::Tanh, rng));
    p.layers.push_back(init_layer(1, arch.hidden_dim, Activation::Sigmoid, rng));
    return p;
}

Eigen::MatrixXd sample_noise(std::uint32_t batch, std::uint32_t noise_dim,
                             Prng& rng) {
    Eigen::MatrixXd z(batch, noise_dim);
    for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.next_gaussian();
    return z;
}

SyntheticBatch generator_forward(const ModelParams& g_params,
                                 const Eigen::MatrixXd& noise,
                                 std::uint64_t iteration) {
    SyntheticBatch batch;
    batch.rows = forward(g_params, noise).output();
    batch.source_iteration = iteration;
    return batch;
}

Eigen::VectorXd discriminator_forward(const ModelParams& d_params,
                                      const Eigen::MatrixXd& batch) {
    return forward(d_params, batch).output().col(0);
}

// ---------------------------------------------------------------------------

std::uint32_t DataDistribution::dim() const {
    if (std::holds_alternative<Gaussian1D>(kind)) return 1;
    if (std::holds_alternative<GaussianMixture2D>(kind)) return 2;
    return static_cast<std::uint32_t>(
        std::get<TabularCategorical>(kind).marginals.size());
}

Eigen::MatrixXd DataDistribution::sample(std::uint32_t batch, Prng& rng) const {
    Eigen::MatrixXd out(batch, dim());
    if (const auto* g = std::get_if<Gaussian1D>(&kind)) {
        for (std::uint32_t i = 0; i < batch; ++i)
            out(i, 0) = g->mean + g->stddev * rng.next_gaussian();
    } else if (const auto* mix = std::get_if<GaussianMixture2D>(&kind)) {
        if (mix->components.empty())
            throw GanError("empty mixture distribution");
        double total = 0.0;
        for (const auto& comp : mix->components) total += comp.weight;
        for (std::uint32_t i = 0; i < batch; ++i) {
            double pick = rng.next_unit() * total;
            const MixtureComponent* chosen = &mix->components.back();
            for (const auto& comp : mix->components) {
                if (pick < comp.weight) {
                    chosen = &comp;
                    break;
                }
                pick -= comp.weight;
            }
            for (int d = 0; d < 2; ++d)
                out(i, d) = chosen->mean[d] + chosen->stddev[d] * rng.next_gaussian();
        }
    } else {
        const auto& tab = std::get<TabularCategorical>(kind);
        for (std::uint32_t i = 0; i < batch; ++i) {
            for (std::size_t col = 0; col < tab.marginals.size(); ++col) {
                const auto& marginal = tab.marginals[col];
                double pick = rng.next_unit();
                std::size_t category = marginal.size() - 1;
                double acc = 0.0;
                for (std::size_t k = 0; k < marginal.size(); ++k) {
                    acc += marginal[k];
                    if (pick < acc) {
                        category = k;
                        break;
                    }
                }
                out(i, col) = static_cast<double>(category);
            }
        }
    }
    return out;
}

}  // namespace fedgan
