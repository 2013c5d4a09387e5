#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedgan/contracts.hpp"
#include "fedgan/ledger.hpp"
#include "fedgan/phe.hpp"
#include "fedgan/secret_sharing.hpp"

namespace fedgan {

struct AuditError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One committed block, reconstructed from a transcript line.
struct TranscriptBlock {
    std::string channel;
    Block block;
    Json payload_json;  // tx payload, parsed
};

std::vector<TranscriptBlock> parse_transcript(const std::string& jsonl);

struct AuditReport {
    bool passed = false;
    bool chain_ok = false;
    bool key_ok = false;
    // per channel: first height whose hash or linkage fails
    std::map<std::string, std::uint64_t> first_bad_height;
    std::uint64_t blocks_checked = 0;
    std::uint64_t records_checked = 0;
    std::uint64_t ciphertexts_decrypted = 0;
    std::uint64_t averages_checked = 0;
    std::uint64_t partial_rounds_checked = 0;
    std::vector<Json> violations;  // violation records found in the history
    std::vector<std::string> failures;

    Json to_json() const;
    std::string to_text() const;
};

/// Parse serialized share files and reconstruct the threshold decryption
/// exponent over GF(field_prime). Validates share count against `threshold`.
BigUint reconstruct_exponent(const std::vector<Bytes>& share_files,
                             std::uint32_t threshold,
                             const BigUint& field_prime);

/// Full post-hoc audit of an exported transcript:
///  1. recompute every block hash and chain link (fail fast: a broken chain
///     skips the decryption phase entirely),
///  2. reconstruct the decryption exponent from >= t share files and verify
///     it round-trips a known plaintext,
///  3. decrypt every committed weight/gradient vector, check bounds and
///     gapless per-registry iteration sequences and hash linkage between
///     generator and discriminator records,
///  4. recompute each committed homomorphic sum from its contributing
///     records and check the decoded average against the member plaintexts,
///  5. re-combine each round's posted partial decryptions and compare with
///     direct decryption,
///  6. check the stop decision against the recorded losses and round count.
/// Violation records are reported but are valid history, not audit failures.
AuditReport run_audit(const std::string& transcript,
                      const std::vector<Bytes>& share_files);

}  // namespace fedgan
