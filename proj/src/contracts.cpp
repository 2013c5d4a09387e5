#include "fedgan/contracts.hpp"

#include <cmath>

#include "fedgan/secret_sharing.hpp"

namespace fedgan {

void ConsortiumConfig::validate() const {
    if (n_members < 2)
        throw ContractError("config: consortium needs N > 1 members");
    if (merge_interval < 1) throw ContractError("config: merge interval K >= 1");
    if (threshold_t < 2 || threshold_t > n_members)
        throw ContractError("config: need 2 <= threshold <= N");
    if (!(gen_loss_threshold > 0.0))
        throw ContractError("config: generator loss threshold must be > 0");
    if (min_merge_rounds < 1)
        throw ContractError("config: min merge rounds >= 1");
    if (key_bits < 16) throw ContractError("config: key bits >= 16 per prime");
    if (!(codec.bound > 0.0)) throw ContractError("config: codec bound > 0");
}

Json ConsortiumConfig::to_json() const {
    return Json{{"n_members", n_members},
                {"merge_interval", merge_interval},
                {"threshold_t", threshold_t},
                {"gen_loss_threshold", gen_loss_threshold},
                {"min_merge_rounds", min_merge_rounds},
                {"key_bits", key_bits},
                {"codec_scale_bits", codec.scale_bits},
                {"codec_bound", codec.bound}};
}

ConsortiumConfig ConsortiumConfig::from_json(const Json& j) {
    ConsortiumConfig cfg;
    cfg.n_members = j.at("n_members").get<std::uint32_t>();
    cfg.merge_interval = j.at("merge_interval").get<std::uint32_t>();
    cfg.threshold_t = j.at("threshold_t").get<std::uint32_t>();
    cfg.gen_loss_threshold = j.at("gen_loss_threshold").get<double>();
    cfg.min_merge_rounds = j.at("min_merge_rounds").get<std::uint32_t>();
    cfg.key_bits = j.at("key_bits").get<unsigned>();
    cfg.codec.scale_bits = j.at("codec_scale_bits").get<std::uint32_t>();
    cfg.codec.bound = j.at("codec_bound").get<double>();
    return cfg;
}

std::string_view role_name(Role r) {
    return r == Role::Generator ? "G" : "D";
}

static Role role_from_name(std::string_view s) {
    if (s == "G") return Role::Generator;
    if (s == "D") return Role::Discriminator;
    throw ContractError("unknown role: " + std::string(s));
}

Json TrainingRecord::to_json() const {
    Json j{{"registry", registry},
           {"iteration", iteration},
           {"role", std::string(role_name(role))},
           {"enc_weights", enc_weights},
           {"enc_gradients", enc_gradients},
           {"synthetic_data_hash", synthetic_data_hash}};
    if (role == Role::Discriminator) {
        j["real_data_hash"] = real_data_hash;
        j["d_loss"] = d_loss;
        j["g_loss"] = g_loss;
    }
    return j;
}

TrainingRecord TrainingRecord::from_json(const Json& j) {
    TrainingRecord r;
    r.registry = j.at("registry").get<RegistryId>();
    r.iteration = j.at("iteration").get<std::uint64_t>();
    r.role = role_from_name(j.at("role").get<std::string>());
    r.enc_weights = j.at("enc_weights").get<std::vector<std::string>>();
    r.enc_gradients = j.at("enc_gradients").get<std::vector<std::string>>();
    r.synthetic_data_hash = j.at("synthetic_data_hash").get<std::string>();
    if (r.role == Role::Discriminator) {
        r.real_data_hash = j.at("real_data_hash").get<std::string>();
        r.d_loss = j.at("d_loss").get<double>();
        r.g_loss = j.at("g_loss").get<double>();
    }
    return r;
}

Json AverageRecord::to_json() const {
    return Json{{"round", round},
                {"role", std::string(role_name(role))},
                {"enc_sum", enc_sum},
                {"participant_count", participant_count},
                {"contributing", contributing}};
}

AverageRecord AverageRecord::from_json(const Json& j) {
    AverageRecord r;
    r.round = j.at("round").get<std::uint64_t>();
    r.role = role_from_name(j.at("role").get<std::string>());
    r.enc_sum = j.at("enc_sum").get<std::vector<std::string>>();
    r.participant_count = j.at("participant_count").get<std::uint32_t>();
    r.contributing = j.at("contributing").get<std::vector<std::string>>();
    return r;
}

std::vector<std::string> ciphertexts_to_hex(const CipherVector& v) {
    std::vector<std::string> out;
    out.reserve(v.size());
    for (const auto& c : v)
        out.push_back(to_hex(std::span<const std::uint8_t>(c.serialize())));
    return out;
}

CipherVector ciphertexts_from_hex(const std::vector<std::string>& v) {
    CipherVector out;
    out.reserve(v.size());
    for (const auto& s : v)
        out.push_back(Ciphertext::parse(std::span<const std::uint8_t>(from_hex(s))));
    return out;
}

std::string record_key(Role role, RegistryId registry,
                       std::uint64_t iteration) {
    return "rec/" + std::string(role_name(role)) + "/" +
           std::to_string(registry) + "/" + std::to_string(iteration);
}

std::string average_key(std::uint64_t round, Role role) {
    return "avg/" + std::to_string(round) + "/" + std::string(role_name(role));
}

std::string partial_key(std::uint64_t round, RegistryId registry) {
    return "partial/" + std::to_string(round) + "/" + std::to_string(registry);
}

std::string violation_key(RegistryId registry, std::uint64_t iteration) {
    return "violation/" + std::to_string(registry) + "/" +
           std::to_string(iteration);
}

// ---------------------------------------------------------------------------

void deploy_key_contracts(Channel& keys, const ConsortiumConfig& cfg,
                          std::uint64_t keygen_seed) {
    cfg.validate();
    keys.deploy("keygen", [cfg, keygen_seed](ContractContext& ctx) {
        if (ctx.exists(kStateKeygenDone))
            throw ContractError("keygen: already initialized");

        Prng root(keygen_seed);
        Prng key_rng = root.substream("phe-keygen");
        PheKeyPair kp = keygen(cfg.key_bits, key_rng);

        ShareConfig share_cfg{cfg.n_members, cfg.threshold_t,
                              kp.share_field_prime};
        Prng split_rng = root.substream("key-split");
        std::vector<SecretShare> shares =
            split(kp.threshold_exponent, share_cfg, split_rng);

        Prng enc_rng = root.substream("audit-test-ciphertext");
        Ciphertext test_ct =
            encrypt(kp.pk, BigUint(kAuditTestPlaintext), enc_rng);

        ctx.put(kStatePublicKey,
                Json{{"n", to_hex(std::span<const std::uint8_t>(
                               kp.pk.n.to_bytes_be()))}});
        ctx.put(kStateShareConfig,
                Json{{"n_shares", share_cfg.n_shares},
                     {"threshold", share_cfg.threshold},
                     {"field_prime",
                      to_hex(std::span<const std::uint8_t>(
                          share_cfg.field_prime.to_bytes_be()))}});
        ctx.put(kStateTestCiphertext,
                Json{{"cipher", to_hex(std::span<const std::uint8_t>(
                                    test_ct.serialize()))},
                     {"plaintext", kAuditTestPlaintext}});
        for (std::uint32_t i = 1; i <= cfg.n_members; ++i)
            ctx.put_private(i, "key_share", serialize_share(shares[i - 1]));
        ctx.put(kStateKeygenDone, Json(true));
        // kp.sk and kp.threshold_exponent leave scope here; no plaintext key
        // material is ever written to world state or the transcript.
    });
}

// ---------------------------------------------------------------------------

namespace {

ConsortiumConfig read_config(ContractContext& ctx) {
    auto j = ctx.get(kStateConfig);
    if (!j) throw ContractError("channel not configured");
    return ConsortiumConfig::from_json(j->at("consortium"));
}

BigUint read_modulus(ContractContext& ctx) {
    auto j = ctx.get(kStateConfig);
    if (!j) throw ContractError("channel not configured");
    return BigUint::from_bytes_be(std::span<const std::uint8_t>(
        from_hex(j->at("public_key_n").get<std::string>())));
}

std::uint64_t read_counter(ContractContext& ctx, const std::string& key) {
    auto j = ctx.get(key);
    return j ? j->get<std::uint64_t>() : 0;
}

void require_not_stopped(ContractContext& ctx) {
    if (ctx.exists(kStateStopped))
        throw ContractError("training is stopped; submission rejected");
}

void require_hash_hex(const std::string& h, const char* what) {
    if (h.size() != 64)
        throw ContractError(std::string(what) + " must be a 32-byte hash");
    from_hex(h);
}

void validate_record(ContractContext& ctx, const TrainingRecord& rec) {
    if (rec.registry != ctx.submitter())
        throw ContractError("record registry does not match submitter");
    require_hash_hex(rec.synthetic_data_hash, "synthetic data hash");
    if (rec.role == Role::Discriminator) {
        require_hash_hex(rec.real_data_hash, "real data hash");
        if (!std::isfinite(rec.d_loss) || !std::isfinite(rec.g_loss))
            throw ContractError("losses must be finite");
    }
    if (rec.enc_weights.empty())
        throw ContractError("record has no encrypted weights");
}

void check_and_fire_merge_trigger(ContractContext& ctx,
                                  const ConsortiumConfig& cfg) {
    std::uint64_t round = read_counter(ctx, "merge/round");
    std::vector<std::string> gen_keys, disc_keys;
    for (std::uint32_t r = 1; r <= cfg.n_members; ++r) {
        std::uint64_t g_iter = read_counter(ctx, "iter/G/" + std::to_string(r));
        std::uint64_t d_iter = read_counter(ctx, "iter/D/" + std::to_string(r));
        std::uint64_t g_mark =
            read_counter(ctx, "merge/mark/G/" + std::to_string(r));
        std::uint64_t d_mark =
            read_counter(ctx, "merge/mark/D/" + std::to_string(r));
        if (g_iter < g_mark + cfg.merge_interval ||
            d_iter < d_mark + cfg.merge_interval)
            return;  // some registry has not finished K iterations yet
        gen_keys.push_back(record_key(Role::Generator, r, g_iter));
        disc_keys.push_back(record_key(Role::Discriminator, r, d_iter));
    }
    for (std::uint32_t r = 1; r <= cfg.n_members; ++r) {
        ctx.put("merge/mark/G/" + std::to_string(r),
                Json(read_counter(ctx, "iter/G/" + std::to_string(r))));
        ctx.put("merge/mark/D/" + std::to_string(r),
                Json(read_counter(ctx, "iter/D/" + std::to_string(r))));
    }
    Json pending{{"round", round},
                 {"gen_keys", gen_keys},
                 {"disc_keys", disc_keys}};
    ctx.put("merge/pending/" + std::to_string(round), pending);
    ctx.put("merge/round", Json(round + 1));
    ctx.emit(EventType::MergeTrigger, pending);
}

void do_stop(ContractContext& ctx, Json reason) {
    ctx.put(kStateStopped, std::move(reason));
    ctx.emit(EventType::Stop, *ctx.get(kStateStopped));
}

}  // namespace

void deploy_gan_contracts(Channel& gan) {
    gan.deploy("configure", [](ContractContext& ctx) {
        if (ctx.exists(kStateConfig))
            throw ContractError("channel already configured");
        ConsortiumConfig cfg =
            ConsortiumConfig::from_json(ctx.payload().at("consortium"));
        cfg.validate();
        ctx.put(kStateConfig, ctx.payload());
    });

    gan.deploy("record_generator", [](ContractContext& ctx) {
        require_not_stopped(ctx);
        ConsortiumConfig cfg = read_config(ctx);
        TrainingRecord rec = TrainingRecord::from_json(ctx.payload());
        if (rec.role != Role::Generator)
            throw ContractError("record_generator: wrong role");
        validate_record(ctx, rec);

        std::string counter_key = "iter/G/" + std::to_string(rec.registry);
        std::uint64_t last = read_counter(ctx, counter_key);
        if (rec.iteration != last + 1)
            throw ContractError("generator iteration sequence error: expected " +
                                std::to_string(last + 1) + ", got " +
                                std::to_string(rec.iteration));

        std::string key = record_key(Role::Generator, rec.registry, rec.iteration);
        ctx.put(key, ctx.payload());
        ctx.put(counter_key, Json(rec.iteration));
        ctx.emit(EventType::GeneratorRecorded,
                 Json{{"registry", rec.registry},
                      {"iteration", rec.iteration},
                      {"synthetic_data_hash", rec.synthetic_data_hash},
                      {"record_key", key}});
        (void)cfg;
    });

    gan.deploy("record_discriminator", [](ContractContext& ctx) {
        require_not_stopped(ctx);
        ConsortiumConfig cfg = read_config(ctx);
        TrainingRecord rec = TrainingRecord::from_json(ctx.payload());
        if (rec.role != Role::Discriminator)
            throw ContractError("record_discriminator: wrong role");
        validate_record(ctx, rec);

        if (!ctx.exists(record_key(Role::Generator, rec.registry, rec.iteration)))
            throw ContractError("orphan discriminator record: no generator "
                                "record for iteration " +
                                std::to_string(rec.iteration));

        std::string counter_key = "iter/D/" + std::to_string(rec.registry);
        std::uint64_t last = read_counter(ctx, counter_key);
        if (rec.iteration != last + 1)
            throw ContractError(
                "discriminator iteration sequence error: expected " +
                std::to_string(last + 1) + ", got " +
                std::to_string(rec.iteration));

        std::string key =
            record_key(Role::Discriminator, rec.registry, rec.iteration);
        ctx.put(key, ctx.payload());
        ctx.put(counter_key, Json(rec.iteration));
        ctx.emit(EventType::DiscriminatorRecorded,
                 Json{{"registry", rec.registry},
                      {"iteration", rec.iteration},
                      {"record_key", key}});
        ctx.emit(EventType::GeneratorLoss, Json{{"registry", rec.registry},
                                                {"iteration", rec.iteration},
                                                {"g_loss", rec.g_loss}});

        std::uint64_t completed_rounds = read_counter(ctx, "merge/completed");
        if (rec.g_loss <= cfg.gen_loss_threshold &&
            completed_rounds >= cfg.min_merge_rounds) {
            do_stop(ctx, Json{{"reason", "generator loss acceptable"},
                              {"registry", rec.registry},
                              {"iteration", rec.iteration},
                              {"g_loss", rec.g_loss},
                              {"merge_rounds", completed_rounds},
                              {"tick", ctx.tick()}});
            return;
        }
        check_and_fire_merge_trigger(ctx, cfg);
    });

    gan.deploy("record_average", [](ContractContext& ctx) {
        require_not_stopped(ctx);
        ConsortiumConfig cfg = read_config(ctx);
        BigUint n = read_modulus(ctx);
        BigUint n_squared = n * n;
        std::uint64_t round = ctx.payload().at("round").get<std::uint64_t>();

        auto pending = ctx.get("merge/pending/" + std::to_string(round));
        if (!pending)
            throw ContractError("record_average: unknown merge round " +
                                std::to_string(round));

        Json submitted = Json::array();
        for (const Json& avg_json : ctx.payload().at("averages")) {
            AverageRecord avg = AverageRecord::from_json(avg_json);
            if (avg.round != round)
                throw ContractError("record_average: round mismatch");
            if (avg.participant_count != cfg.n_members)
                throw ContractError("record_average: participant count must be " +
                                    std::to_string(cfg.n_members));
            const char* keys_field =
                avg.role == Role::Generator ? "gen_keys" : "disc_keys";
            std::vector<std::string> expected_keys =
                pending->at(keys_field).get<std::vector<std::string>>();
            if (avg.contributing != expected_keys)
                throw ContractError(
                    "record_average: contributing records do not match the "
                    "merge trigger");

            // Accountability enforcement: re-add the on-chain ciphertexts and
            // require ciphertext-level equality with the submitted sum.
            std::vector<BigUint> product;
            for (const std::string& rec_key : avg.contributing) {
                auto rec_json = ctx.get(rec_key);
                if (!rec_json)
                    throw ContractError("record_average: missing record " +
                                        rec_key);
                TrainingRecord rec = TrainingRecord::from_json(*rec_json);
                CipherVector weights = ciphertexts_from_hex(rec.enc_weights);
                if (product.empty()) {
                    product.resize(weights.size(), BigUint(1));
                }
                if (weights.size() != product.size())
                    throw ContractError("record_average: vector length mismatch");
                for (std::size_t i = 0; i < weights.size(); ++i)
                    product[i] = (product[i] * weights[i].value) % n_squared;
            }
            CipherVector sum = ciphertexts_from_hex(avg.enc_sum);
            if (sum.size() != product.size())
                throw ContractError("record_average: sum length mismatch");
            for (std::size_t i = 0; i < sum.size(); ++i) {
                if (!(sum[i].value == product[i]))
                    throw ContractError(
                        "record_average: submitted sum does not equal the "
                        "recomputed homomorphic sum (poisoned average), role " +
                        std::string(role_name(avg.role)) + ", element " +
                        std::to_string(i));
            }
            submitted.push_back(avg_json);
        }
        if (submitted.size() != 2)
            throw ContractError("record_average: expected one record per role");

        std::string marker = "avg/committed/" + std::to_string(round);
        auto existing = ctx.get(marker);
        if (existing) {
            // Duplicate honest submission: record as a confirmation.
            if (*existing != ctx.payload())
                throw ContractError("record_average: conflicting duplicate");
            ctx.put("avg/confirm/" + std::to_string(round) + "/" +
                        std::to_string(ctx.submitter()),
                    Json(true));
            return;
        }
        for (const Json& avg_json : submitted) {
            AverageRecord avg = AverageRecord::from_json(avg_json);
            ctx.put(average_key(round, avg.role), avg_json);
        }
        ctx.put(marker, ctx.payload());
        ctx.put("merge/completed", Json(read_counter(ctx, "merge/completed") + 1));
        ctx.emit(EventType::AveragedWeights,
                 Json{{"round", round},
                      {"participant_count", cfg.n_members}});
    });

    gan.deploy("post_partial", [](ContractContext& ctx) {
        ConsortiumConfig cfg = read_config(ctx);
        std::uint64_t round = ctx.payload().at("round").get<std::uint64_t>();
        RegistryId registry = ctx.payload().at("registry").get<RegistryId>();
        if (registry != ctx.submitter())
            throw ContractError("post_partial: registry does not match submitter");
        if (!ctx.exists("avg/committed/" + std::to_string(round)))
            throw ContractError("post_partial: no average record for round " +
                                std::to_string(round));
        std::string key = partial_key(round, registry);
        if (ctx.exists(key))
            throw ContractError("post_partial: already posted for this round");
        ctx.put(key, ctx.payload());
        std::string count_key = "partial/count/" + std::to_string(round);
        std::uint64_t count = read_counter(ctx, count_key) + 1;
        ctx.put(count_key, Json(count));
        if (count >= cfg.threshold_t)
            ctx.put("partial/ready/" + std::to_string(round), Json(true));
        ctx.emit(EventType::PartialDecryptionPosted,
                 Json{{"round", round}, {"registry", registry}, {"count", count}});
    });

    gan.deploy("record_stop", [](ContractContext& ctx) {
        if (ctx.exists(kStateStopped)) return;  // idempotent
        do_stop(ctx, Json{{"reason", "operator stop"},
                          {"registry", ctx.submitter()},
                          {"tick", ctx.tick()}});
    });

    gan.deploy("record_violation", [](ContractContext& ctx) {
        RegistryId registry = ctx.payload().at("registry").get<RegistryId>();
        std::uint64_t iteration =
            ctx.payload().at("iteration").get<std::uint64_t>();
        if (registry != ctx.submitter())
            throw ContractError("record_violation: registry does not match "
                                "submitter");
        ctx.put(violation_key(registry, iteration), ctx.payload());
    });
}

}  // namespace fedgan
