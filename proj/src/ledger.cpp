#include "fedgan/ledger.hpp"

#include <algorithm>

namespace fedgan {

std::string_view event_type_name(EventType t) {
    switch (t) {
        case EventType::GeneratorRecorded: return "GeneratorRecorded";
        case EventType::DiscriminatorRecorded: return "DiscriminatorRecorded";
        case EventType::GeneratorLoss: return "GeneratorLoss";
        case EventType::MergeTrigger: return "MergeTrigger";
        case EventType::AveragedWeights: return "AveragedWeights";
        case EventType::PartialDecryptionPosted: return "PartialDecryptionPosted";
        case EventType::Stop: return "Stop";
    }
    throw LedgerError("unknown event type");
}

EventType event_type_from_name(std::string_view name) {
    for (EventType t :
         {EventType::GeneratorRecorded, EventType::DiscriminatorRecorded,
          EventType::GeneratorLoss, EventType::MergeTrigger,
          EventType::AveragedWeights, EventType::PartialDecryptionPosted,
          EventType::Stop}) {
        if (event_type_name(t) == name) return t;
    }
    throw LedgerError("unknown event type name: " + std::string(name));
}

Bytes json_bytes(const Json& j) {
    std::string s = j.dump();
    return Bytes(s.begin(), s.end());
}

Bytes Transaction::canonical_bytes() const {
    Bytes out;
    append_u32_be(out, submitter);
    append_field(out, contract);
    append_field(out, payload);
    append_u64_be(out, tick);
    return out;
}

Bytes Block::hashed_bytes() const {
    Bytes out;
    append_u64_be(out, height);
    append_bytes(out, prev_hash);
    append_field(out, tx.canonical_bytes());
    append_u32_be(out, static_cast<std::uint32_t>(events.size()));
    for (const auto& e : events) {
        append_field(out, event_type_name(e.type));
        append_field(out, json_bytes(e.payload));
    }
    return out;
}

// ---------------------------------------------------------------------------

ContractContext::ContractContext(const WorldState& state, RegistryId submitter,
                                 const Json& payload, std::uint64_t tick,
                                 RegistryId replica)
    : state_(state),
      submitter_(submitter),
      payload_(payload),
      tick_(tick),
      replica_(replica) {}

std::optional<Json> ContractContext::get(const std::string& key) {
    staged_.reads.push_back(key);
    auto staged_it = staged_.writes.find(key);
    if (staged_it != staged_.writes.end())
        return Json::parse(staged_it->second.begin(), staged_it->second.end());
    auto it = state_.find(key);
    if (it == state_.end()) return std::nullopt;
    return Json::parse(it->second.begin(), it->second.end());
}

bool ContractContext::exists(const std::string& key) {
    staged_.reads.push_back(key);
    return staged_.writes.count(key) > 0 || state_.count(key) > 0;
}

void ContractContext::put(const std::string& key, const Json& value) {
    staged_.writes[key] = json_bytes(value);
}

void ContractContext::emit(EventType type, Json payload) {
    staged_.events.emplace_back(type, std::move(payload));
}

void ContractContext::put_private(RegistryId member, const std::string& key,
                                  const Bytes& value) {
    staged_.private_writes.push_back({member, {key, value}});
    Digest h = sha256(std::span<const std::uint8_t>(value));
    put("pdc_hash/" + std::to_string(member) + "/" + key,
        Json{{"sha256", to_hex(h)}});
}

Bytes ContractContext::Staged::canonical_bytes() const {
    Bytes out;
    append_u32_be(out, static_cast<std::uint32_t>(writes.size()));
    for (const auto& [k, v] : writes) {
        append_field(out, k);
        append_field(out, v);
    }
    append_u32_be(out, static_cast<std::uint32_t>(private_writes.size()));
    for (const auto& [member, kv] : private_writes) {
        append_u32_be(out, member);
        append_field(out, kv.first);
        append_field(out, kv.second);
    }
    append_u32_be(out, static_cast<std::uint32_t>(events.size()));
    for (const auto& [type, payload] : events) {
        append_field(out, event_type_name(type));
        append_field(out, json_bytes(payload));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::optional<Event> Subscription::pop() {
    if (queue_.empty()) return std::nullopt;
    Event e = queue_.front();
    queue_.pop_front();
    return e;
}

Channel::Channel(std::string channel_id, std::vector<RegistryId> members)
    : channel_id_(std::move(channel_id)), members_(std::move(members)) {
    if (members_.empty()) throw LedgerError("channel needs at least one member");
    std::set<RegistryId> unique(members_.begin(), members_.end());
    if (unique.size() != members_.size())
        throw LedgerError("duplicate channel member");
    for (RegistryId m : members_) pdc_[m] = {};
}

void Channel::deploy(const std::string& name, Contract contract) {
    if (!contracts_.emplace(name, std::move(contract)).second)
        throw LedgerError("contract already deployed: " + name);
}

void Channel::require_member(RegistryId id, const char* what) const {
    if (std::find(members_.begin(), members_.end(), id) == members_.end())
        throw AuthorizationError(std::string(what) + ": registry " +
                                 std::to_string(id) + " is not a member of " +
                                 channel_id_);
}

const Block& Channel::submit(RegistryId submitter, const std::string& contract,
                             const Json& payload, std::uint64_t tick) {
    require_member(submitter, "submit");
    auto it = contracts_.find(contract);
    if (it == contracts_.end())
        throw LedgerError("contract not deployed: " + contract);

    // Simulated unanimous endorsement: every member replica executes the
    // contract against the same committed state; staged results must match
    // byte for byte.
    std::vector<ContractContext> replicas;
    replicas.reserve(members_.size());
    for (RegistryId member : members_) {
        replicas.emplace_back(state_, submitter, payload, tick, member);
        it->second(replicas.back());
        if (fault_) fault_(member, contract, submitter, replicas.back().staged());
    }
    Bytes reference = replicas.front().staged().canonical_bytes();
    for (std::size_t i = 1; i < replicas.size(); ++i) {
        if (replicas[i].staged().canonical_bytes() != reference)
            throw EndorsementError(
                "endorsement failure on " + contract + ": replica of registry " +
                std::to_string(members_[i]) + " produced a divergent write set");
    }

    ContractContext::Staged& staged = replicas.front().staged();

    Block block;
    block.height = blocks_.size();
    block.prev_hash =
        blocks_.empty() ? Digest{} : blocks_.back().block_hash;
    block.tx.submitter = submitter;
    block.tx.contract = contract;
    block.tx.payload = json_bytes(payload);
    block.tx.tick = tick;
    block.tx.read_set = staged.reads;
    for (const auto& [k, v] : staged.writes) block.tx.write_set.push_back(k);
    block.tx.tx_id = sha256(std::span<const std::uint8_t>(block.tx.canonical_bytes()));

    for (const auto& [type, event_payload] : staged.events) {
        Event e;
        e.type = type;
        e.channel_id = channel_id_;
        e.payload = event_payload;
        e.tx_id = block.tx.tx_id;
        e.height = block.height;
        e.seq = event_seq_++;
        block.events.push_back(std::move(e));
    }
    block.block_hash = sha256(std::span<const std::uint8_t>(block.hashed_bytes()));

    // commit
    for (const auto& [k, v] : staged.writes) state_[k] = v;
    for (const auto& [member, kv] : staged.private_writes)
        pdc_[member][kv.first] = kv.second;
    blocks_.push_back(std::move(block));

    for (const Event& e : blocks_.back().events) {
        for (auto& [member, sub] : subscriptions_) {
            if (sub->matches(e.type)) sub->push(e);
        }
    }
    return blocks_.back();
}

SubscriptionHandle Channel::subscribe(RegistryId member,
                                      std::set<EventType> filter) {
    require_member(member, "subscribe");
    auto sub = std::make_shared<Subscription>(std::move(filter));
    subscriptions_.emplace_back(member, sub);
    return sub;
}

std::optional<Json> Channel::get_state(const std::string& key) const {
    auto it = state_.find(key);
    if (it == state_.end()) return std::nullopt;
    return Json::parse(it->second.begin(), it->second.end());
}

std::optional<Bytes> Channel::get_private(RegistryId member,
                                          const std::string& key) const {
    auto mit = pdc_.find(member);
    if (mit == pdc_.end()) return std::nullopt;
    auto it = mit->second.find(key);
    if (it == mit->second.end()) return std::nullopt;
    return it->second;
}

void Channel::tamper_private(RegistryId member, const std::string& key,
                             std::size_t byte_index) {
    auto& store = pdc_.at(member);
    auto it = store.find(key);
    if (it == store.end()) throw LedgerError("no such private value");
    it->second.at(byte_index) ^= 0x01;
}

std::optional<std::uint64_t> Channel::verify_chain() const {
    Digest prev{};
    for (std::size_t h = 0; h < blocks_.size(); ++h) {
        const Block& b = blocks_[h];
        if (b.height != h) return h;
        if (b.prev_hash != prev) return h;
        Digest recomputed = sha256(std::span<const std::uint8_t>(b.hashed_bytes()));
        if (recomputed != b.block_hash) return h;
        prev = b.block_hash;
    }
    return std::nullopt;
}

Digest Channel::state_hash() const {
    Bytes material;
    for (const auto& [k, v] : state_) {
        append_field(material, k);
        append_field(material, v);
    }
    return sha256(material);
}

// ---------------------------------------------------------------------------

Channel& Ledger::create_channel(const std::string& channel_id,
                                std::vector<RegistryId> members) {
    if (channels_.count(channel_id))
        throw LedgerError("duplicate channel id: " + channel_id);
    auto ch = std::make_unique<Channel>(channel_id, std::move(members));
    Channel& ref = *ch;
    channels_[channel_id] = std::move(ch);

    // genesis: no contract execution, empty world state
    ref.deploy("genesis", [](ContractContext& ctx) {
        // records the channel roster; nothing else
        (void)ctx;
    });
    Json payload{{"channel", channel_id}};
    Json members_json = Json::array();
    for (RegistryId m : ref.members()) members_json.push_back(m);
    payload["members"] = members_json;
    ref.submit(ref.members().front(), "genesis", payload, next_tick());
    return ref;
}

Channel& Ledger::channel(const std::string& channel_id) {
    auto it = channels_.find(channel_id);
    if (it == channels_.end())
        throw LedgerError("no such channel: " + channel_id);
    return *it->second;
}

const Channel& Ledger::channel(const std::string& channel_id) const {
    auto it = channels_.find(channel_id);
    if (it == channels_.end())
        throw LedgerError("no such channel: " + channel_id);
    return *it->second;
}

bool Ledger::has_channel(const std::string& channel_id) const {
    return channels_.count(channel_id) > 0;
}

std::vector<std::string> Ledger::channel_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, _] : channels_) ids.push_back(id);
    return ids;
}

Json block_to_transcript_line(const std::string& channel_id, const Block& b) {
    Json events = Json::array();
    for (const auto& e : b.events) {
        events.push_back(Json{{"type", std::string(event_type_name(e.type))},
                              {"payload", e.payload}});
    }
    return Json{
        {"channel", channel_id},
        {"height", b.height},
        {"prev_hash", to_hex(b.prev_hash)},
        {"block_hash", to_hex(b.block_hash)},
        {"submitter", b.tx.submitter},
        {"contract", b.tx.contract},
        {"tick", b.tx.tick},
        {"payload", to_hex(std::span<const std::uint8_t>(b.tx.payload))},
        {"events", events},
    };
}

std::string Ledger::export_transcript() const {
    // merge all channels' blocks in tick order (ticks are globally unique)
    std::vector<std::pair<std::uint64_t, Json>> lines;
    for (const auto& [id, ch] : channels_) {
        for (const Block& b : ch->blocks())
            lines.emplace_back(b.tx.tick, block_to_transcript_line(id, b));
    }
    std::sort(lines.begin(), lines.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string out;
    for (const auto& [tick, line] : lines) {
        out += line.dump();
        out += '\n';
    }
    return out;
}

}  // namespace fedgan
