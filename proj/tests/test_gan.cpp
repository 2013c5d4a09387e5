#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedgan/gan.hpp"

using namespace fedgan;

namespace {

const GanArchitecture kTinyArch{2, 3, 1};

double d_loss_of(const ModelParams& d, const Eigen::MatrixXd& real,
                 const Eigen::MatrixXd& fake) {
    return compute_losses(discriminator_forward(d, real),
                          discriminator_forward(d, fake))
        .d_loss;
}

double g_loss_of(const ModelParams& g, const ModelParams& d,
                 const Eigen::MatrixXd& noise) {
    SyntheticBatch fake = generator_forward(g, noise, 0);
    Eigen::VectorXd d_fake = discriminator_forward(d, fake.rows);
    return compute_losses(d_fake, d_fake).g_loss;
}

}  // namespace

TEST_CASE("zero parameters give the symmetric losses") {
    Prng rng(1);
    ModelParams g = zeros_like(init_generator(kTinyArch, rng));
    ModelParams d = zeros_like(init_discriminator(kTinyArch, rng));

    Eigen::MatrixXd noise = sample_noise(16, kTinyArch.noise_dim, rng);
    SyntheticBatch fake = generator_forward(g, noise, 1);
    CHECK(fake.rows.cwiseAbs().maxCoeff() == 0.0);  // tanh(0) through zeros

    Eigen::MatrixXd real = Eigen::MatrixXd::Constant(16, 1, 3.0);
    Eigen::VectorXd d_real = discriminator_forward(d, real);
    Eigen::VectorXd d_fake = discriminator_forward(d, fake.rows);
    CHECK(d_real(0) == doctest::Approx(0.5));  // sigmoid(0)

    LossPair l = compute_losses(d_real, d_fake);
    CHECK(l.d_loss == doctest::Approx(2.0 * std::log(2.0)));
    CHECK(l.g_loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("discriminator gradients match finite differences") {
    Prng rng(2);
    ModelParams d = init_discriminator(kTinyArch, rng);
    Eigen::MatrixXd real(4, 1), fake(4, 1);
    real << 2.9, 3.1, 3.4, 2.6;
    fake << -0.2, 0.4, 0.1, -0.5;

    GradientSet grads = discriminator_backward(d, real, fake);
    std::vector<double> flat = flatten(d);
    std::vector<double> gflat = flatten(grads);
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> up = flat, dn = flat;
        up[i] += h;
        dn[i] -= h;
        double fd = (d_loss_of(unflatten(up, d), real, fake) -
                     d_loss_of(unflatten(dn, d), real, fake)) /
                    (2 * h);
        double denom = std::max({std::abs(fd), std::abs(gflat[i]), 1e-8});
        CHECK(std::abs(fd - gflat[i]) / denom < 1e-4);
    }
}

TEST_CASE("generator gradients match finite differences") {
    Prng rng(3);
    ModelParams g = init_generator(kTinyArch, rng);
    ModelParams d = init_discriminator(kTinyArch, rng);
    Eigen::MatrixXd noise = sample_noise(4, kTinyArch.noise_dim, rng);

    GradientSet grads = generator_backward(g, d, noise);
    std::vector<double> flat = flatten(g);
    std::vector<double> gflat = flatten(grads);
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        std::vector<double> up = flat, dn = flat;
        up[i] += h;
        dn[i] -= h;
        double fd = (g_loss_of(unflatten(up, g), d, noise) -
                     g_loss_of(unflatten(dn, g), d, noise)) /
                    (2 * h);
        double denom = std::max({std::abs(fd), std::abs(gflat[i]), 1e-8});
        CHECK(std::abs(fd - gflat[i]) / denom < 1e-4);
    }
}

TEST_CASE("sgd step") {
    ModelParams p;
    p.layers.push_back(Layer{Eigen::MatrixXd::Constant(1, 1, 1.0),
                             Eigen::VectorXd::Zero(1), Activation::Linear});
    GradientSet g = p;
    g.layers[0].weights(0, 0) = 2.0;

    ModelParams stepped = sgd_step(p, g, 0.1);
    CHECK(stepped.layers[0].weights(0, 0) == doctest::Approx(0.8));

    ModelParams frozen = sgd_step(p, g, 0.0);
    CHECK(frozen.layers[0].weights(0, 0) == 1.0);
}

TEST_CASE("parameter averaging") {
    ModelParams a, b;
    a.layers.push_back(Layer{Eigen::MatrixXd::Constant(1, 1, 2.0),
                             Eigen::VectorXd::Constant(1, -1.0),
                             Activation::Linear});
    b.layers.push_back(Layer{Eigen::MatrixXd::Constant(1, 1, 4.0),
                             Eigen::VectorXd::Constant(1, 3.0),
                             Activation::Linear});
    std::vector<ModelParams> all{a, b};
    ModelParams avg = average_params(all);
    CHECK(avg.layers[0].weights(0, 0) == doctest::Approx(3.0));
    CHECK(avg.layers[0].bias(0) == doctest::Approx(1.0));
}

TEST_CASE("flatten/unflatten roundtrip") {
    Prng rng(4);
    ModelParams g = init_generator(kTinyArch, rng);
    std::vector<double> flat = flatten(g);
    CHECK(flat.size() == g.parameter_count());
    ModelParams back = unflatten(flat, g);
    CHECK(flatten(back) == flat);
    CHECK(back.architecture_digest() == g.architecture_digest());

    // architecture digest depends on shape only, not values
    Prng other(5);
    CHECK(init_generator(kTinyArch, other).architecture_digest() ==
          g.architecture_digest());
    CHECK(init_discriminator(kTinyArch, other).architecture_digest() !=
          g.architecture_digest());
}

TEST_CASE("init determinism and ranges") {
    Prng a(6), b(6);
    ModelParams g1 = init_generator(kTinyArch, a);
    ModelParams g2 = init_generator(kTinyArch, b);
    CHECK(flatten(g1) == flatten(g2));
    for (const Layer& l : g1.layers) {
        CHECK(l.weights.cwiseAbs().maxCoeff() <= 0.5);
        CHECK(l.bias.cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(g1.input_dim() == kTinyArch.noise_dim);
    CHECK(g1.output_dim() == kTinyArch.data_dim);
}

TEST_CASE("synthetic batch digest is content addressed") {
    Prng rng(7);
    Eigen::MatrixXd noise = sample_noise(8, kTinyArch.noise_dim, rng);
    ModelParams g = init_generator(kTinyArch, rng);
    SyntheticBatch b1 = generator_forward(g, noise, 5);
    SyntheticBatch b2 = generator_forward(g, noise, 5);
    CHECK(b1.digest() == b2.digest());
    CHECK(b1.canonical_bytes() == b2.canonical_bytes());

    b2.rows(0, 0) += 1e-12;
    CHECK(b1.digest() != b2.digest());
}

TEST_CASE("data distributions") {
    Prng rng(8);
    DataDistribution g1{Gaussian1D{3.0, 1.0}};
    CHECK(g1.dim() == 1);
    Eigen::MatrixXd s = g1.sample(20000, rng);
    double mean = s.mean();
    double sd = std::sqrt((s.array() - mean).square().mean());
    CHECK(std::abs(mean - 3.0) < 0.05);
    CHECK(std::abs(sd - 1.0) < 0.05);

    DataDistribution mix{GaussianMixture2D{
        {MixtureComponent{0.5, {-2.0, 0.0}, {0.5, 0.5}},
         MixtureComponent{0.5, {2.0, 0.0}, {0.5, 0.5}}}}};
    CHECK(mix.dim() == 2);
    Eigen::MatrixXd m = mix.sample(1000, rng);
    CHECK(m.cols() == 2);
    CHECK(std::abs(m.col(0).mean()) < 0.3);  // symmetric components

    DataDistribution tab{TabularCategorical{{{0.25, 0.75}, {0.5, 0.5}, {1.0}}}};
    CHECK(tab.dim() == 3);
    Eigen::MatrixXd t = tab.sample(4000, rng);
    CHECK(t.cols() == 3);
    // categorical samples are category indices
    CHECK(t.maxCoeff() <= 1.0);
    CHECK(t.minCoeff() >= 0.0);
}

TEST_CASE("adversarial training moves the generator toward the data") {
    Prng rng(9);
    GanArchitecture arch{4, 16, 1};
    ModelParams g = init_generator(arch, rng);
    ModelParams d = init_discriminator(arch, rng);
    DataDistribution data{Gaussian1D{3.0, 1.0}};
    const double lr = 0.15;
    const std::uint32_t batch = 64;

    double initial_mean =
        generator_forward(g, sample_noise(1024, arch.noise_dim, rng), 0)
            .rows.mean();

    for (int it = 0; it < 300; ++it) {
        Eigen::MatrixXd noise = sample_noise(batch, arch.noise_dim, rng);
        SyntheticBatch fake = generator_forward(g, noise, it);
        Eigen::MatrixXd real = data.sample(batch, rng);
        d = sgd_step(d, discriminator_backward(d, real, fake.rows), lr);
        g = sgd_step(g, generator_backward(g, d, noise), lr);
    }

    double final_mean =
        generator_forward(g, sample_noise(4096, arch.noise_dim, rng), 0)
            .rows.mean();
    CHECK(std::abs(initial_mean) < 0.5);  // fresh generator sits near zero
    CHECK(final_mean > 1.5);              // pulled toward the data mean of 3
}
