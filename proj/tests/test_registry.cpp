#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fedgan/registry.hpp"

using namespace fedgan;

namespace {

SimConfig fast_config(std::uint64_t seed = 1) {
    SimConfig cfg;       // defaults: N=3, K=5, min 3 merge rounds
    cfg.seed = seed;
    cfg.consortium.key_bits = 64;  // keeps the crypto cheap in unit tests
    return cfg;
}

}  // namespace

TEST_CASE("fault spec parsing") {
    FaultSpec f = FaultSpec::parse("byzantine-merger:2");
    CHECK(f.kind == FaultSpec::Kind::ByzantineMerger);
    CHECK(f.registry == 2);
    CHECK(f.to_string() == "byzantine-merger:2");

    f = FaultSpec::parse("tamper-fake-data:3:7");
    CHECK(f.kind == FaultSpec::Kind::TamperFakeData);
    CHECK(f.registry == 3);
    CHECK(f.iteration == 7);
    CHECK(f.to_string() == "tamper-fake-data:3:7");

    f = FaultSpec::parse("forge-record:1");
    CHECK(f.kind == FaultSpec::Kind::ForgeRecord);

    CHECK_THROWS_AS(FaultSpec::parse("drop-messages:1"), std::invalid_argument);
    CHECK_THROWS_AS(FaultSpec::parse("byzantine-merger"), std::invalid_argument);
}

TEST_CASE("sim config validation and serialization") {
    SimConfig cfg = fast_config();
    cfg.validate();

    SimConfig back = SimConfig::from_json(cfg.to_json());
    CHECK(back.to_json() == cfg.to_json());
    CHECK(back.digest() == cfg.digest());

    SimConfig other = fast_config(2);
    CHECK(other.digest() != cfg.digest());

    SimConfig bad = fast_config();
    bad.consortium.n_members = 1;
    CHECK_THROWS_AS(bad.validate(), ContractError);

    bad = fast_config();
    bad.faults.push_back(FaultSpec::parse("byzantine-merger:9"));
    CHECK_THROWS_AS(bad.validate(), ContractError);
}

TEST_CASE("honest end-to-end run") {
    SimConfig cfg = fast_config();
    Simulation sim(cfg);
    SimResult result = sim.run();

    CHECK(result.summary.termination == "stopped");
    CHECK(result.summary.stop_height.has_value());
    CHECK(result.summary.merge_rounds_completed >= 3);
    CHECK(result.summary.violations.empty());
    CHECK(result.summary.rejected_averages.empty());
    CHECK(result.summary.endorsement_failures.empty());

    // lockstep scheduling: merge boundaries keep iteration counts within one
    // merge window of each other (a registry may squeeze in a final
    // iteration before it consumes the stop event)
    REQUIRE(result.summary.iterations.size() == 3);
    std::uint64_t lo = result.summary.iterations.at(1);
    std::uint64_t hi = lo;
    for (auto [id, it] : result.summary.iterations) {
        lo = std::min(lo, it);
        hi = std::max(hi, it);
    }
    CHECK(hi - lo < cfg.consortium.merge_interval);

    // bootstrap record: iteration 1 committed with ciphertexts and digest
    Channel& gan = sim.gan_channel();
    auto rec_json = gan.get_state(record_key(Role::Generator, 1, 1));
    REQUIRE(rec_json.has_value());
    TrainingRecord rec = TrainingRecord::from_json(*rec_json);
    CHECK(rec.iteration == 1);
    CHECK_FALSE(rec.enc_weights.empty());
    CHECK_FALSE(rec.enc_gradients.empty());
    CHECK(rec.synthetic_data_hash.size() == 64);
    CHECK_FALSE(ciphertexts_from_hex(rec.enc_weights).empty());

    // horizontal partitioning: discriminators hash disjoint real samples
    std::set<std::string> real_hashes;
    for (RegistryId r = 1; r <= 3; ++r) {
        TrainingRecord d = TrainingRecord::from_json(
            *gan.get_state(record_key(Role::Discriminator, r, 1)));
        CHECK(d.synthetic_data_hash ==
              TrainingRecord::from_json(
                  *gan.get_state(record_key(Role::Generator, r, 1)))
                  .synthetic_data_hash);
        real_hashes.insert(d.real_data_hash);
    }
    CHECK(real_hashes.size() == 3);

    // stop safety: no training record commits above the stop height
    std::uint64_t stop_h = *result.summary.stop_height;
    for (const Block& b : gan.blocks()) {
        if (b.height <= stop_h) continue;
        CHECK(b.tx.contract != "record_generator");
        CHECK(b.tx.contract != "record_discriminator");
    }

    // artifacts
    CHECK(result.share_files.size() == 3);
    CHECK(result.final_datasets.size() == 3);
    for (const auto& [id, data] : result.final_datasets) {
        CHECK(data.rows() == cfg.batch_size * 8);
        CHECK(data.cols() == 1);
    }
    CHECK_FALSE(result.transcript.empty());
    CHECK(result.final_model_height > 0);

    // the returned final generator is the last combinable averaged model
    std::vector<double> avg =
        sim.combined_average(result.summary.final_round, Role::Generator);
    CHECK(flatten(result.final_generator) == avg);
}

TEST_CASE("determinism: same seed, byte-identical transcript") {
    SimConfig cfg = fast_config(5);
    SimResult a = Simulation(cfg).run();
    SimResult b = Simulation(cfg).run();
    CHECK(a.transcript == b.transcript);
    CHECK(a.summary.to_json() == b.summary.to_json());

    SimResult c = Simulation(fast_config(6)).run();
    CHECK(c.transcript != a.transcript);
}

TEST_CASE("byzantine merger is rejected on-chain, run completes") {
    SimConfig cfg = fast_config();
    cfg.faults.push_back(FaultSpec::parse("byzantine-merger:2"));
    Simulation sim(cfg);
    SimResult result = sim.run();

    CHECK(result.summary.termination == "stopped");
    REQUIRE_FALSE(result.summary.rejected_averages.empty());
    CHECK(result.summary.rejected_averages[0].find("registry 2") !=
          std::string::npos);
    // honest mergers still committed every round
    CHECK(sim.gan_channel().get_state("avg/committed/0").has_value());
    CHECK(result.summary.violations.empty());
}

TEST_CASE("tampered fake batch halts with an on-chain violation") {
    SimConfig cfg = fast_config();
    cfg.faults.push_back(FaultSpec::parse("tamper-fake-data:2:2"));
    Simulation sim(cfg);
    SimResult result = sim.run();

    CHECK(result.summary.termination == "halted-by-violation");
    REQUIRE_FALSE(result.summary.violations.empty());
    CHECK(result.summary.violations[0] == violation_key(2, 2));
    auto violation = sim.gan_channel().get_state(violation_key(2, 2));
    REQUIRE(violation.has_value());
    CHECK(violation->at("registry") == 2);
    CHECK(violation->at("iteration") == 2);
}

TEST_CASE("forged endorsement fails without blocking the run") {
    SimConfig cfg = fast_config();
    cfg.faults.push_back(FaultSpec::parse("forge-record:3"));
    Simulation sim(cfg);
    SimResult result = sim.run();

    CHECK(result.summary.termination == "stopped");
    REQUIRE_FALSE(result.summary.endorsement_failures.empty());
    CHECK(result.summary.endorsement_failures[0].find("registry 3") !=
          std::string::npos);
}

TEST_CASE("stall guard") {
    SimConfig cfg = fast_config();
    cfg.max_iterations = 5;  // cannot reach 3 merge rounds of K=5
    Simulation sim(cfg);
    CHECK_THROWS_AS(sim.run(), StallError);
}

TEST_CASE("plaintext shadow matches the committed ciphertexts") {
    SimConfig cfg = fast_config();
    cfg.keep_plaintext_shadow = true;
    Simulation sim(cfg);
    SimResult result = sim.run();
    REQUIRE_FALSE(result.shadow.empty());

    // every committed training record has exactly one shadow entry
    std::uint64_t committed = 0;
    for (const Block& b : sim.gan_channel().blocks())
        if (b.tx.contract == "record_generator" ||
            b.tx.contract == "record_discriminator")
            ++committed;
    CHECK(result.shadow.size() == committed);
}
