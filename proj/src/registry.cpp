#include "fedgan/registry.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace fedgan {

namespace {

Eigen::MatrixXd parse_canonical_matrix(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8) throw GanError("canonical matrix bytes truncated");
    auto read_u32_le = [&](std::size_t off) {
        return static_cast<std::uint32_t>(bytes[off]) |
               (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
               (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
               (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    };
    std::uint32_t rows = read_u32_le(0);
    std::uint32_t cols = read_u32_le(4);
    if (bytes.size() != 8 + static_cast<std::size_t>(rows) * cols * 8)
        throw GanError("canonical matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    std::size_t pos = 8;
    for (std::uint32_t r = 0; r < rows; ++r) {
        for (std::uint32_t c = 0; c < cols; ++c) {
            std::uint64_t bits = 0;
            for (int i = 7; i >= 0; --i)
                bits = (bits << 8) | bytes[pos + i];
            double v;
            std::memcpy(&v, &bits, sizeof(v));
            m(r, c) = v;
            pos += 8;
        }
    }
    return m;
}

std::string hex_digest(const Digest& d) { return to_hex(d); }

}  // namespace

// ---------------------------------------------------------------------------

FaultSpec FaultSpec::parse(const std::string& text) {
    auto split_colon = [](const std::string& s) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            std::size_t pos = s.find(':', start);
            parts.push_back(s.substr(start, pos - start));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        return parts;
    };
    std::vector<std::string> parts = split_colon(text);
    FaultSpec f;
    if (parts[0] == "byzantine-merger" && parts.size() == 2) {
        f.kind = Kind::ByzantineMerger;
        f.registry = static_cast<RegistryId>(std::stoul(parts[1]));
    } else if (parts[0] == "tamper-fake-data" && parts.size() == 3) {
        f.kind = Kind::TamperFakeData;
        f.registry = static_cast<RegistryId>(std::stoul(parts[1]));
        f.iteration = std::stoull(parts[2]);
    } else if (parts[0] == "forge-record" && parts.size() == 2) {
        f.kind = Kind::ForgeRecord;
        f.registry = static_cast<RegistryId>(std::stoul(parts[1]));
    } else {
        throw std::invalid_argument("unknown fault spec: " + text);
    }
    return f;
}

std::string FaultSpec::to_string() const {
    switch (kind) {
        case Kind::ByzantineMerger:
            return "byzantine-merger:" + std::to_string(registry);
        case Kind::TamperFakeData:
            return "tamper-fake-data:" + std::to_string(registry) + ":" +
                   std::to_string(iteration);
        case Kind::ForgeRecord:
            return "forge-record:" + std::to_string(registry);
    }
    return "?";
}

void SimConfig::validate() const {
    consortium.validate();
    if (arch.data_dim != data.dim())
        throw ContractError("config: architecture data_dim does not match the "
                            "data distribution");
    if (batch_size < 1) throw ContractError("config: batch size >= 1");
    if (!(learning_rate > 0.0)) throw ContractError("config: learning rate > 0");
    for (const FaultSpec& f : faults) {
        if (f.registry < 1 || f.registry > consortium.n_members)
            throw ContractError("config: fault registry out of range");
    }
}

Json SimConfig::to_json() const {
    Json data_json;
    if (const auto* g = std::get_if<Gaussian1D>(&data.kind)) {
        data_json = Json{{"kind", "gaussian1d"}, {"mean", g->mean},
                         {"stddev", g->stddev}};
    } else if (const auto* mix = std::get_if<GaussianMixture2D>(&data.kind)) {
        Json comps = Json::array();
        for (const auto& c : mix->components)
            comps.push_back(Json{{"weight", c.weight},
                                 {"mean", c.mean},
                                 {"stddev", c.stddev}});
        data_json = Json{{"kind", "mixture2d"}, {"components", comps}};
    } else {
        data_json = Json{{"kind", "tabular"},
                         {"marginals",
                          std::get<TabularCategorical>(data.kind).marginals}};
    }
    Json faults_json = Json::array();
    for (const auto& f : faults) faults_json.push_back(f.to_string());
    return Json{{"consortium", consortium.to_json()},
                {"arch", Json{{"noise_dim", arch.noise_dim},
                              {"hidden_dim", arch.hidden_dim},
                              {"data_dim", arch.data_dim}}},
                {"learning_rate", learning_rate},
                {"batch_size", batch_size},
                {"data", data_json},
                {"seed", seed},
                {"max_iterations", max_iterations},
                {"faults", faults_json}};
}

SimConfig SimConfig::from_json(const Json& j) {
    SimConfig cfg;
    cfg.consortium = ConsortiumConfig::from_json(j.at("consortium"));
    const Json& arch = j.at("arch");
    cfg.arch.noise_dim = arch.at("noise_dim").get<std::uint32_t>();
    cfg.arch.hidden_dim = arch.at("hidden_dim").get<std::uint32_t>();
    cfg.arch.data_dim = arch.at("data_dim").get<std::uint32_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.batch_size = j.at("batch_size").get<std::uint32_t>();
    const Json& data = j.at("data");
    std::string kind = data.at("kind").get<std::string>();
    if (kind == "gaussian1d") {
        cfg.data.kind = Gaussian1D{data.at("mean").get<double>(),
                                   data.at("stddev").get<double>()};
    } else if (kind == "mixture2d") {
        GaussianMixture2D mix;
        for (const Json& c : data.at("components")) {
            MixtureComponent comp;
            comp.weight = c.at("weight").get<double>();
            comp.mean = c.at("mean").get<std::array<double, 2>>();
            comp.stddev = c.at("stddev").get<std::array<double, 2>>();
            mix.components.push_back(comp);
        }
        cfg.data.kind = std::move(mix);
    } else if (kind == "tabular") {
        cfg.data.kind = TabularCategorical{
            data.at("marginals").get<std::vector<std::vector<double>>>()};
    } else {
        throw ContractError("config: unknown data kind " + kind);
    }
    cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("max_iterations"))
        cfg.max_iterations = j.at("max_iterations").get<std::uint64_t>();
    if (j.contains("faults")) {
        for (const Json& f : j.at("faults"))
            cfg.faults.push_back(FaultSpec::parse(f.get<std::string>()));
    }
    return cfg;
}

Digest SimConfig::digest() const {
    std::string s = to_json().dump();
    return sha256(std::string_view(s));
}

Json SimSummary::to_json() const {
    Json iters = Json::object();
    Json g_losses = Json::object();
    Json d_losses = Json::object();
    for (const auto& [r, v] : iterations) iters[std::to_string(r)] = v;
    for (const auto& [r, v] : final_g_loss) g_losses[std::to_string(r)] = v;
    for (const auto& [r, v] : final_d_loss) d_losses[std::to_string(r)] = v;
    Json j{{"merge_rounds_completed", merge_rounds_completed},
           {"final_round", final_round},
           {"termination", termination},
           {"iterations", iters},
           {"final_g_loss", g_losses},
           {"final_d_loss", d_losses},
           {"violations", violations},
           {"rejected_averages", rejected_averages},
           {"endorsement_failures", endorsement_failures}};
    if (stop_height) j["stop_height"] = *stop_height;
    return j;
}

// ---------------------------------------------------------------------------

RegistryNode::RegistryNode(RegistryId id, const SimConfig& cfg,
                           Channel& gan_channel, const PhePublicKey& pk,
                           SecretShare share, Prng node_rng)
    : id_(id),
      cfg_(cfg),
      gan_(gan_channel),
      pk_(pk),
      share_(std::move(share)),
      noise_rng_(node_rng.substream("noise")),
      data_rng_(node_rng.substream("data")),
      enc_rng_(node_rng.substream("encrypt")) {
    Prng init_g = node_rng.substream("init-generator");
    Prng init_d = node_rng.substream("init-discriminator");
    g_params_ = init_generator(cfg.arch, init_g);
    d_params_ = init_discriminator(cfg.arch, init_d);
    pending_g_grads_ = zeros_like(g_params_);
    gen_events_ = gan_.subscribe(
        id_, {EventType::GeneratorLoss, EventType::AveragedWeights,
              EventType::Stop});
    disc_events_ = gan_.subscribe(
        id_, {EventType::GeneratorRecorded, EventType::AveragedWeights,
              EventType::Stop});
    merger_events_ =
        gan_.subscribe(id_, {EventType::MergeTrigger, EventType::Stop});
}

CipherVector RegistryNode::encrypt_vector(std::span<const double> values) {
    std::vector<BigUint> encoded =
        encode_vector(values, cfg_.consortium.codec, pk_.n);
    CipherVector out;
    out.reserve(encoded.size());
    for (const BigUint& m : encoded) out.push_back(encrypt(pk_, m, enc_rng_));
    return out;
}

void RegistryNode::tamper_file_store(std::uint64_t iteration,
                                     std::size_t byte_index) {
    file_store_.at(iteration).at(byte_index) ^= 0x01;
}

void RegistryNode::generator_iteration(Simulation& sim) {
    if (stopped_ || halted_) return;
    ++g_iter_;

    Eigen::MatrixXd noise =
        sample_noise(cfg_.batch_size, cfg_.arch.noise_dim, noise_rng_);
    SyntheticBatch batch = generator_forward(g_params_, noise, g_iter_);
    Bytes batch_bytes = batch.canonical_bytes();
    Digest batch_digest = sha256(std::span<const std::uint8_t>(batch_bytes));
    file_store_[g_iter_] = batch_bytes;  // flow 2a: local filesystem
    noise_cache_[g_iter_] = noise;

    std::vector<double> weights = flatten(g_params_);
    std::vector<double> grads = flatten(pending_g_grads_);

    TrainingRecord rec;
    rec.registry = id_;
    rec.iteration = g_iter_;
    rec.role = Role::Generator;
    rec.enc_weights = ciphertexts_to_hex(encrypt_vector(weights));
    rec.enc_gradients = ciphertexts_to_hex(encrypt_vector(grads));
    rec.synthetic_data_hash = hex_digest(batch_digest);

    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            gan_.submit(id_, "record_generator", rec.to_json(),
                        sim.ledger().next_tick());
            break;
        } catch (const EndorsementError& e) {
            // byzantine replica forged its endorsement; surfaced, retried once
            sim.note_endorsement_failure(e.what());
            sim.consume_forge_fault();
            if (attempt == 1) throw;
        }
    }

    if (sim.config().keep_plaintext_shadow) {
        sim.record_shadow(ShadowEntry{id_, g_iter_, Role::Generator,
                                      std::move(weights), std::move(grads),
                                      {}});
    }

    if (sim.fault_active(FaultSpec::Kind::TamperFakeData, id_, g_iter_)) {
        // the adversary corrupts the locally stored batch after announcing
        // its hash on-chain
        tamper_file_store(g_iter_, batch_bytes.size() / 2);
    }
}

void RegistryNode::apply_averaged_weights(Simulation& sim,
                                          std::uint64_t round) {
    std::vector<double> g_avg = sim.combined_average(round, Role::Generator);
    g_params_ = unflatten(g_avg, g_params_);
    pending_g_grads_ = zeros_like(g_params_);
    last_applied_round_ = round;
    any_round_applied_ = true;
}

bool RegistryNode::step_generator(Simulation& sim) {
    bool progress = false;
    while (generator_event(sim)) progress = true;
    return progress;
}

bool RegistryNode::step_discriminator(Simulation& sim) {
    bool progress = false;
    while (discriminator_event(sim)) progress = true;
    return progress;
}

bool RegistryNode::step_merger(Simulation& sim) {
    bool progress = false;
    while (merger_event(sim)) progress = true;
    return progress;
}

bool RegistryNode::generator_event(Simulation& sim) {
    if (!bootstrap_done_) {
        // flow 1: noise bootstrap, first round only
        bootstrap_done_ = true;
        generator_iteration(sim);
        return true;
    }
    std::optional<Event> ev;
    if (deferred_gen_event_) {
        ev = deferred_gen_event_;
    } else {
        ev = gen_events_->pop();
    }
    if (!ev) return false;

    switch (ev->type) {
        case EventType::Stop:
            deferred_gen_event_.reset();
            stopped_ = true;
            return true;
        case EventType::GeneratorLoss: {
            deferred_gen_event_.reset();
            if (ev->payload.at("registry").get<RegistryId>() != id_) return true;
            if (stopped_ || halted_) return true;
            last_g_loss_ = ev->payload.at("g_loss").get<double>();
            // flow 6: apply the cached generator gradients, then iterate.
            // When the loss is acceptable the contract has already emitted
            // Stop (if enough merge rounds elapsed); otherwise we keep going.
            g_params_ = sgd_step(g_params_, pending_g_grads_, cfg_.learning_rate);
            generator_iteration(sim);
            return true;
        }
        case EventType::AveragedWeights: {
            if (stopped_ || halted_) {
                deferred_gen_event_.reset();
                return true;
            }
            std::uint64_t round = ev->payload.at("round").get<std::uint64_t>();
            if (!sim.round_ready(round)) {
                // partial decryptions still arriving; retry next pass
                deferred_gen_event_ = ev;
                return false;
            }
            deferred_gen_event_.reset();
            // flow 9a: replace local weights with the decoded average; the
            // next local iteration is driven by the next GeneratorLoss, which
            // keeps generator and discriminator records in 1:1 lockstep
            apply_averaged_weights(sim, round);
            return true;
        }
        default:
            deferred_gen_event_.reset();
            return true;
    }
}

bool RegistryNode::discriminator_event(Simulation& sim) {
    std::optional<Event> ev;
    if (deferred_disc_event_) {
        ev = deferred_disc_event_;
    } else {
        ev = disc_events_->pop();
    }
    if (!ev) return false;

    switch (ev->type) {
        case EventType::Stop:
            deferred_disc_event_.reset();
            stopped_ = true;
            return true;
        case EventType::AveragedWeights: {
            if (stopped_ || halted_) {
                deferred_disc_event_.reset();
                return true;
            }
            std::uint64_t round = ev->payload.at("round").get<std::uint64_t>();
            if (!sim.round_ready(round)) {
                deferred_disc_event_ = ev;
                return false;
            }
            deferred_disc_event_.reset();
            // flow 9b: replace discriminator weights with the decoded average
            std::vector<double> d_avg =
                sim.combined_average(round, Role::Discriminator);
            d_params_ = unflatten(d_avg, d_params_);
            return true;
        }
        case EventType::GeneratorRecorded:
            break;  // handled below
        default:
            deferred_disc_event_.reset();
            return true;
    }
    deferred_disc_event_.reset();
    if (ev->payload.at("registry").get<RegistryId>() != id_) return true;
    if (stopped_ || halted_) return true;

    std::uint64_t iteration = ev->payload.at("iteration").get<std::uint64_t>();
    std::string announced_hash =
        ev->payload.at("synthetic_data_hash").get<std::string>();

    // flow 4b: load the fake batch from the local file store and re-verify
    // its digest against the on-chain announcement
    const Bytes& batch_bytes = file_store_.at(iteration);
    std::string computed_hash =
        to_hex(sha256(std::span<const std::uint8_t>(batch_bytes)));
    if (computed_hash != announced_hash) {
        Json violation{{"registry", id_},
                       {"iteration", iteration},
                       {"kind", "synthetic-data-hash-mismatch"},
                       {"announced", announced_hash},
                       {"computed", computed_hash}};
        gan_.submit(id_, "record_violation", violation, sim.ledger().next_tick());
        sim.note_violation(violation_key(id_, iteration));
        halted_ = true;
        return true;
    }

    Eigen::MatrixXd fake =
        parse_canonical_matrix(std::span<const std::uint8_t>(batch_bytes));
    // flow 4a: sample from the local real data
    Eigen::MatrixXd real = cfg_.data.sample(cfg_.batch_size, data_rng_);
    Bytes real_bytes = canonical_matrix_bytes(real);

    Eigen::VectorXd d_real = discriminator_forward(d_params_, real);
    Eigen::VectorXd d_fake = discriminator_forward(d_params_, fake);
    LossPair losses = compute_losses(d_real, d_fake);

    GradientSet d_grads = discriminator_backward(d_params_, real, fake);
    // the generator-side gradients are computed here against the same
    // discriminator state that produced g_loss, and cached for flow 6
    pending_g_grads_ =
        generator_backward(g_params_, d_params_, noise_cache_.at(iteration));

    std::vector<double> weights = flatten(d_params_);
    std::vector<double> grads = flatten(d_grads);

    TrainingRecord rec;
    rec.registry = id_;
    rec.iteration = iteration;
    rec.role = Role::Discriminator;
    rec.enc_weights = ciphertexts_to_hex(encrypt_vector(weights));
    rec.enc_gradients = ciphertexts_to_hex(encrypt_vector(grads));
    rec.synthetic_data_hash = announced_hash;
    rec.real_data_hash = to_hex(sha256(std::span<const std::uint8_t>(real_bytes)));
    rec.d_loss = losses.d_loss;
    rec.g_loss = losses.g_loss;

    try {
        gan_.submit(id_, "record_discriminator", rec.to_json(),
                    sim.ledger().next_tick());
    } catch (const ContractError&) {
        // a Stop committed between the generator record and this submission;
        // the Stop event is already queued for us
        return true;
    }

    if (sim.config().keep_plaintext_shadow) {
        sim.record_shadow(ShadowEntry{id_, iteration, Role::Discriminator,
                                      weights, grads, real_bytes});
    }

    last_d_loss_ = losses.d_loss;
    last_g_loss_ = losses.g_loss;
    // flow 5b: local update from the discriminator loss
    d_params_ = sgd_step(d_params_, d_grads, cfg_.learning_rate);
    return true;
}

bool RegistryNode::merger_event(Simulation& sim) {
    bool progress = false;

    // partials that could not be posted earlier (average not yet committed)
    for (auto it = pending_partial_rounds_.begin();
         it != pending_partial_rounds_.end();) {
        if (try_post_partial(sim, *it)) {
            it = pending_partial_rounds_.erase(it);
            progress = true;
        } else {
            ++it;
        }
    }

    std::optional<Event> ev = merger_events_->pop();
    if (!ev) return progress;
    if (ev->type == EventType::Stop) {
        merger_done_ = true;  // flow: merger exits on Stop
        stopped_ = true;
        return true;
    }
    if (merger_done_) return true;  // post-Stop trigger: ignored

    // flow 7/8: gather the round's encrypted weights, sum homomorphically,
    // record the average, then post this registry's partial decryption
    std::uint64_t round = ev->payload.at("round").get<std::uint64_t>();
    Json averages = Json::array();
    for (Role role : {Role::Generator, Role::Discriminator}) {
        const char* field = role == Role::Generator ? "gen_keys" : "disc_keys";
        std::vector<std::string> keys =
            ev->payload.at(field).get<std::vector<std::string>>();
        CipherVector sum;
        for (const std::string& key : keys) {
            auto rec_json = gan_.get_state(key);
            if (!rec_json) throw LedgerError("merger: missing record " + key);
            TrainingRecord rec = TrainingRecord::from_json(*rec_json);
            CipherVector weights = ciphertexts_from_hex(rec.enc_weights);
            if (sum.empty()) {
                sum = std::move(weights);
            } else {
                for (std::size_t i = 0; i < sum.size(); ++i)
                    sum[i] = add(pk_, sum[i], weights[i]);
            }
        }
        if (role == Role::Generator &&
            sim.fault_active(FaultSpec::Kind::ByzantineMerger, id_)) {
            // model poisoning attempt: square one ciphertext, doubling the
            // underlying plaintext contribution
            sum[0].value = (sum[0].value * sum[0].value) % pk_.n_squared;
        }
        AverageRecord avg;
        avg.round = round;
        avg.role = role;
        avg.enc_sum = ciphertexts_to_hex(sum);
        avg.participant_count = cfg_.consortium.n_members;
        avg.contributing = keys;
        averages.push_back(avg.to_json());
    }
    try {
        gan_.submit(id_, "record_average",
                    Json{{"round", round}, {"averages", averages}},
                    sim.ledger().next_tick());
    } catch (const ContractError& e) {
        sim.note_rejected_average("registry " + std::to_string(id_) +
                                  ", round " + std::to_string(round) + ": " +
                                  e.what());
    }
    if (!try_post_partial(sim, round)) pending_partial_rounds_.push_back(round);
    return true;
}

bool RegistryNode::try_post_partial(Simulation& sim, std::uint64_t round) {
    if (!gan_.get_state("avg/committed/" + std::to_string(round))) return false;
    if (gan_.get_state(partial_key(round, id_))) return true;  // already posted
    // only the threshold set of registries holds a Lagrange slot
    if (id_ > cfg_.consortium.threshold_t) return true;

    std::vector<std::uint32_t> participants;
    for (std::uint32_t i = 1; i <= cfg_.consortium.threshold_t; ++i)
        participants.push_back(i);
    BigUint field_prime = sim.share_field_prime();

    Json payload{{"round", round}, {"registry", id_}};
    for (Role role : {Role::Generator, Role::Discriminator}) {
        auto avg_json = gan_.get_state(average_key(round, role));
        if (!avg_json) return false;
        AverageRecord avg = AverageRecord::from_json(*avg_json);
        CipherVector sum = ciphertexts_from_hex(avg.enc_sum);
        Json components = Json::array();
        for (const Ciphertext& c : sum) {
            PartialDecryption part =
                partial_decrypt(pk_, share_, participants, field_prime, c);
            components.push_back(
                Json{{"index", part.share_index},
                     {"component",
                      to_hex(std::span<const std::uint8_t>(
                          part.component.to_bytes_be()))},
                     {"cipher_digest", to_hex(part.ciphertext_digest)}});
        }
        payload[std::string(role_name(role))] = components;
    }
    gan_.submit(id_, "post_partial", payload, sim.ledger().next_tick());
    return true;
}

// ---------------------------------------------------------------------------

Simulation::Simulation(SimConfig cfg) : cfg_(std::move(cfg)) { initialize(); }

void Simulation::initialize() {
    cfg_.validate();

    std::vector<RegistryId> members;
    for (std::uint32_t i = 1; i <= cfg_.consortium.n_members; ++i)
        members.push_back(i);

    // Initialization phase: both channels, contracts, HE keygen + share split
    Channel& keys = ledger_.create_channel(kKeyChannel, members);
    deploy_key_contracts(keys, cfg_.consortium, cfg_.seed);
    keys.submit(1, "keygen", Json::object(), ledger_.next_tick());

    BigUint n = BigUint::from_bytes_be(std::span<const std::uint8_t>(from_hex(
        keys.get_state(kStatePublicKey)->at("n").get<std::string>())));
    pk_ = PhePublicKey::from_modulus(n);
    cfg_.consortium.codec.check_headroom(cfg_.consortium.n_members, pk_.n);

    Json scfg_json = *keys.get_state(kStateShareConfig);
    share_cfg_.n_shares = scfg_json.at("n_shares").get<std::uint32_t>();
    share_cfg_.threshold = scfg_json.at("threshold").get<std::uint32_t>();
    share_cfg_.field_prime = BigUint::from_bytes_be(std::span<const std::uint8_t>(
        from_hex(scfg_json.at("field_prime").get<std::string>())));

    Channel& gan = ledger_.create_channel(kGanChannel, members);
    deploy_gan_contracts(gan);
    for (const FaultSpec& f : cfg_.faults) {
        if (f.kind == FaultSpec::Kind::ForgeRecord) forge_fault_armed_ = true;
    }
    if (forge_fault_armed_) {
        gan.set_replica_fault([this](RegistryId replica,
                                     const std::string& contract,
                                     RegistryId submitter,
                                     ContractContext::Staged& staged) {
            if (!forge_fault_armed_) return;
            if (contract != "record_generator") return;
            if (!fault_active(FaultSpec::Kind::ForgeRecord, submitter)) return;
            if (replica != submitter) return;
            // the byzantine member's replica stages a forged extra write
            staged.writes["forged/" + std::to_string(replica)] =
                Bytes{0x01};
        });
    }
    gan.submit(1, "configure",
               Json{{"consortium", cfg_.consortium.to_json()},
                    {"public_key_n",
                     to_hex(std::span<const std::uint8_t>(pk_.n.to_bytes_be()))}},
               ledger_.next_tick());

    Prng root(cfg_.seed);
    for (RegistryId id : members) {
        auto share_bytes = keys.get_private(id, "key_share");
        if (!share_bytes) throw LedgerError("missing key share in PDC");
        SecretShare share =
            parse_share(std::span<const std::uint8_t>(*share_bytes));
        nodes_.push_back(std::make_unique<RegistryNode>(
            id, cfg_, gan, pk_, std::move(share),
            root.substream("registry/" + std::to_string(id))));
    }
}

bool Simulation::fault_active(FaultSpec::Kind kind, RegistryId registry,
                              std::uint64_t iteration) const {
    for (const FaultSpec& f : cfg_.faults) {
        if (f.kind != kind || f.registry != registry) continue;
        if (kind == FaultSpec::Kind::TamperFakeData &&
            f.iteration != iteration)
            continue;
        if (kind == FaultSpec::Kind::ForgeRecord && !forge_fault_armed_)
            continue;
        return true;
    }
    return false;
}

void Simulation::consume_forge_fault() { forge_fault_armed_ = false; }

void Simulation::record_shadow(ShadowEntry entry) {
    shadow_.push_back(std::move(entry));
}

void Simulation::note_rejected_average(std::string note) {
    summary_.rejected_averages.push_back(std::move(note));
}

void Simulation::note_endorsement_failure(std::string note) {
    summary_.endorsement_failures.push_back(std::move(note));
}

void Simulation::note_violation(std::string key) {
    summary_.violations.push_back(std::move(key));
}

bool Simulation::round_ready(std::uint64_t round) const {
    return ledger_.channel(kGanChannel)
        .get_state("partial/ready/" + std::to_string(round))
        .has_value();
}

BigUint Simulation::share_field_prime() const { return share_cfg_.field_prime; }

std::vector<double> Simulation::combined_average(std::uint64_t round,
                                                 Role role) {
    auto cache_key = std::make_pair(round, role == Role::Generator);
    auto it = average_cache_.find(cache_key);
    if (it != average_cache_.end()) return it->second;

    Channel& gan = ledger_.channel(kGanChannel);
    auto avg_json = gan.get_state(average_key(round, role));
    if (!avg_json) throw LedgerError("no average record for round");
    AverageRecord avg = AverageRecord::from_json(*avg_json);
    CipherVector sum = ciphertexts_from_hex(avg.enc_sum);

    // collect the threshold set's posted partials
    std::vector<std::vector<PartialDecryption>> per_element(sum.size());
    for (std::uint32_t r = 1; r <= share_cfg_.threshold; ++r) {
        auto partial_json = gan.get_state(partial_key(round, r));
        if (!partial_json)
            throw LedgerError("round not combinable: missing partial from " +
                              std::to_string(r));
        const Json& components =
            partial_json->at(std::string(role_name(role)));
        for (std::size_t i = 0; i < sum.size(); ++i) {
            const Json& comp = components.at(i);
            PartialDecryption part;
            part.share_index = comp.at("index").get<std::uint32_t>();
            part.component = BigUint::from_bytes_be(std::span<const std::uint8_t>(
                from_hex(comp.at("component").get<std::string>())));
            Bytes digest_bytes =
                from_hex(comp.at("cipher_digest").get<std::string>());
            std::copy_n(digest_bytes.begin(), 32,
                        part.ciphertext_digest.begin());
            per_element[i].push_back(std::move(part));
        }
    }

    std::vector<double> out(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        BigUint plain_sum = combine_partials(pk_, per_element[i], sum[i],
                                             share_cfg_);
        out[i] = decode_scalar(plain_sum, cfg_.consortium.codec, pk_.n) /
                 static_cast<double>(avg.participant_count);
    }
    average_cache_[cache_key] = out;
    return out;
}

SimResult Simulation::run() {
    Channel& gan = ledger_.channel(kGanChannel);

    // flow 1 bootstrap: every generator runs its first iteration from noise
    for (auto& node : nodes_) node->step_generator(*this);

    bool operator_halt = false;
    while (true) {
        bool progress = false;
        for (auto& node : nodes_) {
            progress |= node->step_discriminator(*this);
            progress |= node->step_merger(*this);
            progress |= node->step_generator(*this);
        }

        if (!summary_.violations.empty() && !operator_halt) {
            // a violation record is on-chain; the consortium halts the run
            // (the remediation decision itself is left to operators)
            operator_halt = true;
            for (auto& node : nodes_) {
                node->stopped_ = true;
                node->merger_done_ = true;
            }
        }

        bool stop_committed = gan.get_state(kStateStopped).has_value();
        bool queues_empty = true;
        for (auto& node : nodes_) {
            if (!node->gen_events_->empty() || !node->disc_events_->empty() ||
                !node->merger_events_->empty() || node->deferred_gen_event_ ||
                node->deferred_disc_event_ ||
                !node->pending_partial_rounds_.empty())
                queues_empty = false;
        }
        if ((stop_committed || operator_halt) && queues_empty) break;

        if (!progress)
            throw StallError("no event fired for a full scheduler pass");
        for (auto& node : nodes_) {
            if (node->iteration() > cfg_.max_iterations)
                throw StallError("iteration cap reached without stop");
        }
    }

    // assemble the result
    SimResult result;
    summary_.termination = operator_halt ? "halted-by-violation" : "stopped";
    auto completed = gan.get_state("merge/completed");
    summary_.merge_rounds_completed =
        completed ? completed->get<std::uint64_t>() : 0;
    for (const Block& b : gan.blocks()) {
        for (const Event& e : b.events) {
            if (e.type == EventType::Stop && !summary_.stop_height)
                summary_.stop_height = b.height;
        }
    }
    for (auto& node : nodes_) {
        summary_.iterations[node->id()] = node->iteration();
        summary_.final_g_loss[node->id()] = node->last_g_loss();
        summary_.final_d_loss[node->id()] = node->last_d_loss();
    }

    // final global model: the last round whose average is combinable
    std::uint64_t rounds = summary_.merge_rounds_completed;
    std::optional<std::uint64_t> final_round;
    for (std::uint64_t r = rounds; r-- > 0;) {
        if (round_ready(r)) {
            final_round = r;
            break;
        }
    }
    if (final_round) {
        summary_.final_round = *final_round;
        std::vector<double> g_avg =
            combined_average(*final_round, Role::Generator);
        result.final_generator =
            unflatten(g_avg, nodes_.front()->generator_params());
        // height of the average record that defined the final model
        for (const Block& b : gan.blocks()) {
            if (b.tx.contract == "record_average") {
                Json payload = Json::parse(b.tx.payload.begin(), b.tx.payload.end());
                if (payload.at("round").get<std::uint64_t>() == *final_round &&
                    !b.tx.write_set.empty())
                    result.final_model_height = b.height;
            }
        }
        Prng root(cfg_.seed);
        for (auto& node : nodes_) {
            Prng final_rng = root.substream("final-dataset/" +
                                            std::to_string(node->id()));
            Eigen::MatrixXd noise =
                sample_noise(cfg_.batch_size * 8, cfg_.arch.noise_dim, final_rng);
            result.final_datasets[node->id()] =
                generator_forward(result.final_generator, noise, 0).rows;
        }
    } else {
        result.final_generator = nodes_.front()->generator_params();
    }

    Channel& keys = ledger_.channel(kKeyChannel);
    for (auto& node : nodes_) {
        auto share_bytes = keys.get_private(node->id(), "key_share");
        result.share_files[node->id()] = *share_bytes;
    }

    result.summary = summary_;
    result.transcript = ledger_.export_transcript();
    result.shadow = std::move(shadow_);
    result.config_digest = cfg_.digest();
    return result;
}

}  // namespace fedgan
