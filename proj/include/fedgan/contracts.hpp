#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedgan/gan.hpp"
#include "fedgan/ledger.hpp"
#include "fedgan/phe.hpp"

namespace fedgan {

inline constexpr const char* kKeyChannel = "keys";
inline constexpr const char* kGanChannel = "gan";

struct ConsortiumConfig {
    std::uint32_t n_members = 3;
    std::uint32_t merge_interval = 5;  // K
    std::uint32_t threshold_t = 3;     // Shamir threshold, default n-of-n
    double gen_loss_threshold = 0.70;
    std::uint32_t min_merge_rounds = 3;  // default N
    unsigned key_bits = 128;             // per prime
    FixedPointCodec codec;

    void validate() const;
    Json to_json() const;
    static ConsortiumConfig from_json(const Json& j);
};

enum class Role { Generator, Discriminator };
std::string_view role_name(Role r);

struct TrainingRecord {
    RegistryId registry = 0;
    std::uint64_t iteration = 0;
    Role role = Role::Generator;
    std::vector<std::string> enc_weights;    // hex(Ciphertext::serialize())
    std::vector<std::string> enc_gradients;  // hex(Ciphertext::serialize())
    std::string synthetic_data_hash;         // hex, 32 bytes
    std::string real_data_hash;              // discriminator only
    double d_loss = 0.0;                     // discriminator only
    double g_loss = 0.0;                     // discriminator only

    Json to_json() const;
    static TrainingRecord from_json(const Json& j);
};

struct AverageRecord {
    std::uint64_t round = 0;
    Role role = Role::Generator;
    std::vector<std::string> enc_sum;  // hex(Ciphertext::serialize())
    std::uint32_t participant_count = 0;
    std::vector<std::string> contributing;  // world-state record keys

    Json to_json() const;
    static AverageRecord from_json(const Json& j);
};

std::vector<std::string> ciphertexts_to_hex(const CipherVector& v);
CipherVector ciphertexts_from_hex(const std::vector<std::string>& v);

// World-state key helpers shared by contracts, registry apps and the audit.
std::string record_key(Role role, RegistryId registry, std::uint64_t iteration);
std::string average_key(std::uint64_t round, Role role);
std::string partial_key(std::uint64_t round, RegistryId registry);
std::string violation_key(RegistryId registry, std::uint64_t iteration);

inline constexpr const char* kStateConfig = "consortium/config";
inline constexpr const char* kStateStopped = "training/stopped";
inline constexpr const char* kStatePublicKey = "phe/public_key";
inline constexpr const char* kStateShareConfig = "phe/share_config";
inline constexpr const char* kStateTestCiphertext = "phe/test_ciphertext";
inline constexpr const char* kStateKeygenDone = "phe/initialized";
inline constexpr std::uint64_t kAuditTestPlaintext = 424242;

/// Key channel: "keygen" generates the Paillier pair deterministically from
/// `keygen_seed`, commits the public key, share config and audit test
/// ciphertext, records one Shamir share per member PDC, and lets the private
/// key material go out of scope (it is never written anywhere).
void deploy_key_contracts(Channel& keys, const ConsortiumConfig& cfg,
                          std::uint64_t keygen_seed);

/// GAN interaction channel: configure, record_generator, record_discriminator
/// (with merge-trigger and stop logic), record_average, post_partial,
/// record_stop, record_violation.
void deploy_gan_contracts(Channel& gan);

}  // namespace fedgan
