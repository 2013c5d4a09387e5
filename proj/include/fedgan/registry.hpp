#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedgan/contracts.hpp"
#include "fedgan/gan.hpp"
#include "fedgan/ledger.hpp"
#include "fedgan/phe.hpp"
#include "fedgan/secret_sharing.hpp"

namespace fedgan {

struct StallError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FaultSpec {
    enum class Kind { ByzantineMerger, TamperFakeData, ForgeRecord };
    Kind kind = Kind::ByzantineMerger;
    RegistryId registry = 0;
    std::uint64_t iteration = 0;  // TamperFakeData only

    static FaultSpec parse(const std::string& text);  // e.g. "byzantine-merger:2"
    std::string to_string() const;
};

struct SimConfig {
    ConsortiumConfig consortium;
    GanArchitecture arch;
    double learning_rate = 0.15;
    std::uint32_t batch_size = 64;
    DataDistribution data{Gaussian1D{}};
    std::uint64_t seed = 42;
    std::uint64_t max_iterations = 20000;  // stall guard for non-converging runs
    std::vector<FaultSpec> faults;
    bool keep_plaintext_shadow = false;  // test/audit-harness mode only

    void validate() const;
    Json to_json() const;
    static SimConfig from_json(const Json& j);
    Digest digest() const;
};

/// Test-mode plaintext sidecar: one entry per committed training record, used
/// by the FedAvg fidelity check and the confidentiality byte-scan. Never part
/// of the transcript.
struct ShadowEntry {
    RegistryId registry = 0;
    std::uint64_t iteration = 0;
    Role role = Role::Generator;
    std::vector<double> weights;
    std::vector<double> gradients;
    Bytes real_batch_bytes;  // discriminator entries only
};

struct SimSummary {
    std::uint64_t merge_rounds_completed = 0;
    std::uint64_t final_round = 0;  // last round with a combinable average
    std::optional<std::uint64_t> stop_height;
    std::string termination;  // "stopped" | "halted-by-violation"
    std::map<RegistryId, std::uint64_t> iterations;
    std::map<RegistryId, double> final_g_loss;
    std::map<RegistryId, double> final_d_loss;
    std::vector<std::string> violations;          // violation record keys
    std::vector<std::string> rejected_averages;   // per-fault rejection notes
    std::vector<std::string> endorsement_failures;

    Json to_json() const;
};

struct SimResult {
    SimSummary summary;
    std::string transcript;  // line-delimited JSON
    ModelParams final_generator;
    std::map<RegistryId, Eigen::MatrixXd> final_datasets;
    std::map<RegistryId, Bytes> share_files;
    std::vector<ShadowEntry> shadow;
    Digest config_digest{};
    std::uint64_t final_model_height = 0;
};

/// One consortium member: the generator, discriminator and merger apps,
/// communicating with peers only through ledger commits and events.
class RegistryNode {
public:
    RegistryNode(RegistryId id, const SimConfig& cfg, Channel& gan_channel,
                 const PhePublicKey& pk, SecretShare share, Prng node_rng);

    /// Each drains the app's event queue and returns true when it made
    /// progress (consumed an event and/or committed a transaction). Draining
    /// keeps the three apps in lockstep: a backlog would mean training on
    /// stale records.
    bool step_generator(class Simulation& sim);
    bool step_discriminator(class Simulation& sim);
    bool step_merger(class Simulation& sim);

    RegistryId id() const { return id_; }
    bool stopped() const { return stopped_; }
    bool halted() const { return halted_; }
    const ModelParams& generator_params() const { return g_params_; }
    const ModelParams& discriminator_params() const { return d_params_; }
    double last_g_loss() const { return last_g_loss_; }
    double last_d_loss() const { return last_d_loss_; }
    std::uint64_t iteration() const { return g_iter_; }

    /// Content-addressed local store: retrieval re-verifies the digest.
    const std::map<std::uint64_t, Bytes>& file_store() const {
        return file_store_;
    }
    void tamper_file_store(std::uint64_t iteration, std::size_t byte_index);

private:
    friend class Simulation;

    bool generator_event(Simulation& sim);
    bool discriminator_event(Simulation& sim);
    bool merger_event(Simulation& sim);
    void generator_iteration(Simulation& sim);
    void apply_averaged_weights(Simulation& sim, std::uint64_t round);
    bool try_post_partial(Simulation& sim, std::uint64_t round);
    CipherVector encrypt_vector(std::span<const double> values);

    RegistryId id_;
    const SimConfig& cfg_;
    Channel& gan_;
    PhePublicKey pk_;
    SecretShare share_;

    ModelParams g_params_;
    ModelParams d_params_;
    GradientSet pending_g_grads_;
    std::uint64_t g_iter_ = 0;
    double last_g_loss_ = 0.0;
    double last_d_loss_ = 0.0;

    std::map<std::uint64_t, Bytes> file_store_;  // iteration -> batch bytes
    std::map<std::uint64_t, Eigen::MatrixXd> noise_cache_;

    SubscriptionHandle gen_events_;   // GeneratorLoss, AveragedWeights, Stop
    SubscriptionHandle disc_events_;  // GeneratorRecorded, AveragedWeights, Stop
    SubscriptionHandle merger_events_;  // MergeTrigger, Stop
    std::optional<Event> deferred_gen_event_;
    std::optional<Event> deferred_disc_event_;
    std::vector<std::uint64_t> pending_partial_rounds_;

    Prng noise_rng_;
    Prng data_rng_;
    Prng enc_rng_;

    bool bootstrap_done_ = false;
    bool stopped_ = false;
    bool halted_ = false;      // local violation detected
    bool merger_done_ = false;
    std::uint64_t last_applied_round_ = 0;
    bool any_round_applied_ = false;
};

class Simulation {
public:
    explicit Simulation(SimConfig cfg);

    SimResult run();

    Ledger& ledger() { return ledger_; }
    Channel& gan_channel() { return ledger_.channel(kGanChannel); }
    Channel& key_channel() { return ledger_.channel(kKeyChannel); }
    const PhePublicKey& public_key() const { return pk_; }
    const SimConfig& config() const { return cfg_; }
    RegistryNode& node(RegistryId id) { return *nodes_.at(id - 1); }

    /// Decoded plaintext average for a completed round (combines the posted
    /// partial decryptions from world state). Role-separated.
    std::vector<double> combined_average(std::uint64_t round, Role role);
    bool round_ready(std::uint64_t round) const;
    BigUint share_field_prime() const;

    void record_shadow(ShadowEntry entry);
    void note_rejected_average(std::string note);
    void note_endorsement_failure(std::string note);
    void note_violation(std::string key);

    bool fault_active(FaultSpec::Kind kind, RegistryId registry,
                      std::uint64_t iteration = 0) const;
    void consume_forge_fault();

private:
    void initialize();

    SimConfig cfg_;
    Ledger ledger_;
    PhePublicKey pk_;
    ShareConfig share_cfg_;
    std::vector<std::unique_ptr<RegistryNode>> nodes_;
    SimSummary summary_;
    std::vector<ShadowEntry> shadow_;
    std::map<std::pair<std::uint64_t, bool>, std::vector<double>> average_cache_;
    bool forge_fault_armed_ = false;
};

}  // namespace fedgan
