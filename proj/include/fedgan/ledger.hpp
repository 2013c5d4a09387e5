#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedgan/bytes.hpp"

namespace fedgan {

using RegistryId = std::uint32_t;  // 1-based consortium ordinal
using Json = nlohmann::json;

struct LedgerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AuthorizationError : LedgerError {
    using LedgerError::LedgerError;
};
struct EndorsementError : LedgerError {
    using LedgerError::LedgerError;
};
/// Thrown by contracts to reject a submission; no block is committed.
struct ContractError : LedgerError {
    using LedgerError::LedgerError;
};

enum class EventType {
    GeneratorRecorded,
    DiscriminatorRecorded,
    GeneratorLoss,
    MergeTrigger,
    AveragedWeights,
    PartialDecryptionPosted,
    Stop,
};

std::string_view event_type_name(EventType t);
EventType event_type_from_name(std::string_view name);

struct Event {
    EventType type;
    std::string channel_id;
    Json payload;
    Digest tx_id{};
    std::uint64_t height = 0;
    std::uint64_t seq = 0;  // commit-order sequence within the channel
};

struct Transaction {
    Digest tx_id{};
    RegistryId submitter = 0;
    std::string contract;
    Bytes payload;  // canonical JSON bytes
    std::uint64_t tick = 0;
    std::vector<std::string> read_set;
    std::vector<std::string> write_set;

    Bytes canonical_bytes() const;
};

struct Block {
    std::uint64_t height = 0;
    Digest prev_hash{};
    Transaction tx;
    std::vector<Event> events;
    Digest block_hash{};

    /// Bytes covered by block_hash: height, prev_hash, tx, emitted events.
    Bytes hashed_bytes() const;
};

using WorldState = std::map<std::string, Bytes>;

/// Execution context handed to a contract. Reads see committed state plus the
/// contract's own staged writes; writes and events are staged and applied only
/// if endorsement succeeds.
class ContractContext {
public:
    ContractContext(const WorldState& state, RegistryId submitter,
                    const Json& payload, std::uint64_t tick,
                    RegistryId replica);

    std::optional<Json> get(const std::string& key);
    bool exists(const std::string& key);
    void put(const std::string& key, const Json& value);
    void emit(EventType type, Json payload);
    /// Private-data write: payload goes to `member`'s PDC store only; the
    /// SHA-256 of the payload is staged into world state under
    /// "pdc_hash/<member>/<key>" so every member witnesses it.
    void put_private(RegistryId member, const std::string& key,
                     const Bytes& value);

    RegistryId submitter() const { return submitter_; }
    const Json& payload() const { return payload_; }
    std::uint64_t tick() const { return tick_; }
    /// Which member's replica is executing; honest contracts must not branch
    /// on it. It exists so fault injection can perturb a single replica.
    RegistryId replica() const { return replica_; }

    struct Staged {
        std::map<std::string, Bytes> writes;
        std::vector<std::pair<RegistryId, std::pair<std::string, Bytes>>>
            private_writes;
        std::vector<std::pair<EventType, Json>> events;
        std::vector<std::string> reads;

        Bytes canonical_bytes() const;  // endorsement comparison
    };
    Staged& staged() { return staged_; }

private:
    const WorldState& state_;
    RegistryId submitter_;
    Json payload_;
    std::uint64_t tick_;
    RegistryId replica_;
    Staged staged_;
};

using Contract = std::function<void(ContractContext&)>;

/// Per-replica fault hook: may mutate the staged result after the contract
/// ran on one replica (simulates a byzantine member forging its endorsement).
using ReplicaFault =
    std::function<void(RegistryId replica, const std::string& contract,
                       RegistryId submitter, ContractContext::Staged&)>;

class Subscription {
public:
    Subscription() = default;
    explicit Subscription(std::set<EventType> filter)
        : filter_(std::move(filter)) {}

    bool matches(EventType t) const {
        return filter_.empty() || filter_.count(t) > 0;
    }
    void push(const Event& e) { queue_.push_back(e); }
    std::optional<Event> pop();
    bool empty() const { return queue_.empty(); }

private:
    std::set<EventType> filter_;
    std::deque<Event> queue_;
};

using SubscriptionHandle = std::shared_ptr<Subscription>;

class Channel {
public:
    Channel(std::string channel_id, std::vector<RegistryId> members);

    void deploy(const std::string& name, Contract contract);
    void set_replica_fault(ReplicaFault fault) { fault_ = std::move(fault); }

    /// Execute on every member replica, require byte-identical staged
    /// results, then commit one block and deliver events.
    const Block& submit(RegistryId submitter, const std::string& contract,
                        const Json& payload, std::uint64_t tick);

    SubscriptionHandle subscribe(RegistryId member, std::set<EventType> filter);

    std::optional<Json> get_state(const std::string& key) const;
    const WorldState& world_state() const { return state_; }
    const std::vector<Block>& blocks() const { return blocks_; }
    const std::vector<RegistryId>& members() const { return members_; }
    const std::string& id() const { return channel_id_; }

    std::optional<Bytes> get_private(RegistryId member,
                                     const std::string& key) const;
    void tamper_private(RegistryId member, const std::string& key,
                        std::size_t byte_index);  // test/fault harness

    /// Recompute every block hash and link; nullopt if intact, else the first
    /// inconsistent height.
    std::optional<std::uint64_t> verify_chain() const;

    Digest state_hash() const;

private:
    void require_member(RegistryId id, const char* what) const;

    std::string channel_id_;
    std::vector<RegistryId> members_;
    std::map<std::string, Contract> contracts_;
    std::vector<Block> blocks_;
    WorldState state_;
    std::map<RegistryId, std::map<std::string, Bytes>> pdc_;
    std::vector<std::pair<RegistryId, SubscriptionHandle>> subscriptions_;
    ReplicaFault fault_;
    std::uint64_t event_seq_ = 0;
};

/// The ledger: named channels plus a shared logical clock.
class Ledger {
public:
    Channel& create_channel(const std::string& channel_id,
                            std::vector<RegistryId> members);
    Channel& channel(const std::string& channel_id);
    const Channel& channel(const std::string& channel_id) const;
    bool has_channel(const std::string& channel_id) const;

    std::uint64_t next_tick() { return tick_++; }
    std::uint64_t current_tick() const { return tick_; }

    /// Line-delimited JSON, one object per committed block, all channels
    /// merged in commit-tick order.
    std::string export_transcript() const;

    std::vector<std::string> channel_ids() const;

private:
    std::map<std::string, std::unique_ptr<Channel>> channels_;
    std::uint64_t tick_ = 0;
};

Json block_to_transcript_line(const std::string& channel_id, const Block& b);

/// Canonical JSON bytes (nlohmann dump, keys sorted by std::map ordering).
Bytes json_bytes(const Json& j);

}  // namespace fedgan
