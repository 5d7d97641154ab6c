#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "mazefl/dataset.hpp"
#include "mazefl/mlp.hpp"

namespace mazefl {

// Wire protocol: length-prefixed frames over a TCP stream, all fields
// little-endian.
//   "MZFD" u8 type u32 payload_len payload
// Payloads:
//   ClientHello (1): u32 client_id, u32 num_samples
//   GlobalModel (2): u32 round, checkpoint bytes
//   LocalUpdate (3): u32 round, u32 num_samples, checkpoint bytes
//   Done        (4): u32 round
struct ClientHello {
    std::uint32_t client_id = 0;
    std::uint32_t num_samples = 0;
};

struct GlobalModel {
    std::uint32_t round = 0;
    std::vector<std::uint8_t> checkpoint;
};

struct LocalUpdate {
    std::uint32_t round = 0;
    std::uint32_t num_samples = 0;
    std::vector<std::uint8_t> checkpoint;
};

struct Done {
    std::uint32_t round = 0;
};

using FedMessage = std::variant<ClientHello, GlobalModel, LocalUpdate, Done>;

inline constexpr std::uint32_t kMaxFramePayload = 8u << 20;

std::vector<std::uint8_t> encode_message(const FedMessage& message);

// Pull-based byte source: fill up to n bytes, return how many, 0 at EOF.
// Lets the frame reader run identically over sockets and test buffers.
using ByteSource = std::function<std::size_t(std::uint8_t*, std::size_t)>;

// Reads one frame. Malformed input throws ProtocolError; EOF (at a frame
// boundary or inside one) throws ClientDisconnected. Never crashes on
// arbitrary bytes.
FedMessage read_message(const ByteSource& source);

struct ClientUpdate {
    std::uint32_t client_id = 0;
    std::uint32_t num_samples = 0;
    MlpParams params;
};

// Sample-count-weighted mean of the updates, accumulated in extended
// precision and rounded once, so the result does not depend on arrival
// order (updates are averaged in client_id order) and the mean of
// identical models is exactly that model.
MlpParams aggregate(std::vector<ClientUpdate> updates);

enum class LocalUnit { epoch, step };

struct FedConfig {
    int rounds = 15;
    int expected_clients = 2;
    int local_epochs = 2;          // per-round local work, in `local_unit`s
    LocalUnit local_unit = LocalUnit::epoch;
    double learning_rate = 0.001;
    double weight_decay = 0.001;
    int batch_size = 16;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;        // 0 = pick a free port
    double timeout_s = 120.0;      // per blocking network operation
    std::uint64_t train_seed = 0;  // client: per-round shuffles derive from it
};

struct ServerHooks {
    // Called once the listening socket is bound, with the actual port.
    std::function<void(const std::string& host, std::uint16_t port)> on_listening;
    // Called after each aggregation with the new global model.
    std::function<void(int round, const MlpParams& global)> on_round_complete;
};

// Synchronous FedAvg parameter server: waits for expected_clients hellos,
// then per round broadcasts the global model, collects one update per
// client, and aggregates. Sends Done and returns the final model. Any
// protocol violation, timeout, or client loss aborts the run by throwing.
MlpParams run_server(const FedConfig& config, MlpParams initial,
                     const ServerHooks& hooks = {});

// FedAvg client: sends its hello, then trains each received global model
// on `data` for local_epochs units (shuffle seed derived from train_seed
// and the round) and returns the update. Returns the last global model
// received before Done.
MlpParams run_client(const FedConfig& config, const Dataset& data,
                     const std::string& server_host, std::uint16_t server_port,
                     std::uint32_t client_id);

}  // namespace mazefl
