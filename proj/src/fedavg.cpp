#include "mazefl/fedavg.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>
#include <utility>

#include "mazefl/detail/binary.hpp"
#include "mazefl/rng.hpp"

namespace mazefl {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string errno_text(const char* op) {
    return std::string(op) + ": " + std::strerror(errno);
}

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept {
        if (this != &other) {
            close_fd();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close_fd(); }

    int fd() const { return fd_; }

    void set_timeouts(double seconds) {
        auto whole = static_cast<time_t>(seconds);
        timeval tv{whole, static_cast<suseconds_t>((seconds - static_cast<double>(whole)) * 1e6)};
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        ::setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }

    std::size_t recv_some(std::uint8_t* buf, std::size_t n) {
        for (;;) {
            ssize_t r = ::recv(fd_, buf, n, 0);
            if (r >= 0) {
                return static_cast<std::size_t>(r);
            }
            if (errno == EINTR) continue;
            if (errno == EAGAIN || errno == EWOULDBLOCK) {
                throw Timeout("receive timed out");
            }
            if (errno == ECONNRESET) {
                return 0;  // surfaced as ClientDisconnected by the reader
            }
            throw IoError(errno_text("recv"));
        }
    }

    void send_all(const std::uint8_t* buf, std::size_t n) {
        while (n > 0) {
            ssize_t r = ::send(fd_, buf, n, MSG_NOSIGNAL);
            if (r < 0) {
                if (errno == EINTR) continue;
                if (errno == EPIPE || errno == ECONNRESET) {
                    throw ClientDisconnected("peer closed during send");
                }
                if (errno == EAGAIN || errno == EWOULDBLOCK) {
                    throw Timeout("send timed out");
                }
                throw IoError(errno_text("send"));
            }
            buf += r;
            n -= static_cast<std::size_t>(r);
        }
    }

    void send_all(const std::vector<std::uint8_t>& bytes) {
        send_all(bytes.data(), bytes.size());
    }

    void shutdown_both() { ::shutdown(fd_, SHUT_RDWR); }

private:
    void close_fd() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    int fd_ = -1;
};

sockaddr_in make_addr(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        throw InvalidArgument("not an IPv4 address: " + host);
    }
    return addr;
}

class Listener {
public:
    Listener(const std::string& host, std::uint16_t port) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) {
            throw IoError(errno_text("socket"));
        }
        sock_ = Socket(fd);
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr = make_addr(host, port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
            throw IoError(errno_text("bind"));
        }
        if (::listen(fd, 16) < 0) {
            throw IoError(errno_text("listen"));
        }
    }

    std::uint16_t port() const {
        sockaddr_in addr{};
        socklen_t len = sizeof addr;
        if (::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr),
                          &len) < 0) {
            throw IoError(errno_text("getsockname"));
        }
        return ntohs(addr.sin_port);
    }

    Socket accept_within(double seconds) {
        pollfd p{sock_.fd(), POLLIN, 0};
        for (;;) {
            int r = ::poll(&p, 1, static_cast<int>(seconds * 1000.0));
            if (r > 0) break;
            if (r == 0) {
                throw Timeout("timed out waiting for a client to connect");
            }
            if (errno != EINTR) {
                throw IoError(errno_text("poll"));
            }
        }
        int cfd = ::accept(sock_.fd(), nullptr, nullptr);
        if (cfd < 0) {
            throw IoError(errno_text("accept"));
        }
        return Socket(cfd);
    }

private:
    Socket sock_;
};

Socket connect_to(const std::string& host, std::uint16_t port,
                  double timeout_s) {
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration<double>(timeout_s);
    sockaddr_in addr = make_addr(host, port);
    for (;;) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) {
            throw IoError(errno_text("socket"));
        }
        Socket sock(fd);
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) ==
            0) {
            return sock;
        }
        int err = errno;
        // The server may still be coming up; retry until the deadline.
        if ((err == ECONNREFUSED || err == ECONNABORTED || err == ETIMEDOUT) &&
            std::chrono::steady_clock::now() < deadline) {
            ::usleep(100'000);
            continue;
        }
        throw ConnectionRefused("connect to " + host + ":" +
                                std::to_string(port) + ": " +
                                std::strerror(err));
    }
}

constexpr char kFrameMagic[5] = "MZFD";

enum : std::uint8_t {
    kTypeClientHello = 1,
    kTypeGlobalModel = 2,
    kTypeLocalUpdate = 3,
    kTypeDone = 4,
};

// Reads exactly n bytes; `got_any` distinguishes EOF between frames from
// EOF inside one.
void read_exact(const ByteSource& source, std::uint8_t* buf, std::size_t n,
                bool& got_any) {
    std::size_t got = 0;
    while (got < n) {
        std::size_t r = source(buf + got, n - got);
        if (r == 0) {
            throw ClientDisconnected(got_any ? "peer closed mid-frame"
                                             : "peer closed");
        }
        got += r;
        got_any = true;
    }
}

std::vector<std::uint8_t> take_rest(detail::ByteCursor& cur) {
    auto rest = cur.bytes(cur.remaining());
    return {rest.begin(), rest.end()};
}

void expect_consumed(const detail::ByteCursor& cur) {
    if (!cur.at_end()) {
        throw ProtocolError("trailing bytes in frame payload");
    }
}

}  // namespace

std::vector<std::uint8_t> encode_message(const FedMessage& message) {
    std::vector<std::uint8_t> payload;
    std::uint8_t type = 0;
    std::visit(
        overloaded{
            [&](const ClientHello& m) {
                type = kTypeClientHello;
                detail::put_u32le(payload, m.client_id);
                detail::put_u32le(payload, m.num_samples);
            },
            [&](const GlobalModel& m) {
                type = kTypeGlobalModel;
                detail::put_u32le(payload, m.round);
                payload.insert(payload.end(), m.checkpoint.begin(),
                               m.checkpoint.end());
            },
            [&](const LocalUpdate& m) {
                type = kTypeLocalUpdate;
                detail::put_u32le(payload, m.round);
                detail::put_u32le(payload, m.num_samples);
                payload.insert(payload.end(), m.checkpoint.begin(),
                               m.checkpoint.end());
            },
            [&](const Done& m) {
                type = kTypeDone;
                detail::put_u32le(payload, m.round);
            },
        },
        message);
    if (payload.size() > kMaxFramePayload) {
        throw ProtocolError("frame payload too large");
    }
    std::vector<std::uint8_t> out;
    out.reserve(9 + payload.size());
    out.insert(out.end(), kFrameMagic, kFrameMagic + 4);
    detail::put_u8(out, type);
    detail::put_u32le(out, static_cast<std::uint32_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

FedMessage read_message(const ByteSource& source) {
    std::uint8_t header[9];
    bool got_any = false;
    read_exact(source, header, sizeof header, got_any);
    if (std::memcmp(header, kFrameMagic, 4) != 0) {
        throw ProtocolError("bad frame magic");
    }
    std::uint8_t type = header[4];
    std::uint32_t len = detail::load_u32le(header + 5);
    if (type < kTypeClientHello || type > kTypeDone) {
        throw ProtocolError("unknown frame type " + std::to_string(type));
    }
    if (len > kMaxFramePayload) {
        throw ProtocolError("frame payload too large");
    }
    std::vector<std::uint8_t> payload(len);
    read_exact(source, payload.data(), len, got_any);

    try {
        detail::ByteCursor cur(payload);
        switch (type) {
            case kTypeClientHello: {
                ClientHello m{cur.u32le(), cur.u32le()};
                expect_consumed(cur);
                return m;
            }
            case kTypeGlobalModel: {
                GlobalModel m;
                m.round = cur.u32le();
                m.checkpoint = take_rest(cur);
                return m;
            }
            case kTypeLocalUpdate: {
                LocalUpdate m;
                m.round = cur.u32le();
                m.num_samples = cur.u32le();
                m.checkpoint = take_rest(cur);
                return m;
            }
            default: {
                Done m{cur.u32le()};
                expect_consumed(cur);
                return m;
            }
        }
    } catch (const FormatError& e) {
        throw ProtocolError(e.what());
    }
}

MlpParams aggregate(std::vector<ClientUpdate> updates) {
    if (updates.empty()) {
        throw InvalidArgument("no updates to aggregate");
    }
    std::sort(updates.begin(), updates.end(),
              [](const ClientUpdate& a, const ClientUpdate& b) {
                  return a.client_id < b.client_id;
              });
    std::uint64_t total = 0;
    for (std::size_t k = 0; k < updates.size(); ++k) {
        if (k > 0 && updates[k].client_id == updates[k - 1].client_id) {
            throw ProtocolError("duplicate client id " +
                                std::to_string(updates[k].client_id));
        }
        if (!updates[k].params.same_shape(updates[0].params)) {
            throw ShapeMismatch("updates disagree on model shape");
        }
        total += updates[k].num_samples;
    }
    if (total == 0) {
        throw InvalidArgument("all updates carry zero samples");
    }

// Weighted sums in extended precision, rounded to f64 once: averaging is
// then independent of client order and exact for identical inputs.
#if defined(__SIZEOF_FLOAT128__)
    using Acc = __float128;
#else
    using Acc = long double;
#endif

    const MlpParams& first = updates[0].params;
    MlpParams out =
        MlpParams::zeros(first.in_dim, first.hidden_dim, first.out_dim);
    auto blend = [&](std::vector<double> MlpParams::* member) {
        auto& dst = out.*member;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            Acc acc = 0;
            for (const ClientUpdate& u : updates) {
                acc += static_cast<Acc>((u.params.*member)[i]) *
                       static_cast<Acc>(u.num_samples);
            }
            dst[i] = static_cast<double>(acc / static_cast<Acc>(total));
        }
    };
    blend(&MlpParams::w1);
    blend(&MlpParams::b1);
    blend(&MlpParams::w2);
    blend(&MlpParams::b2);
    return out;
}

namespace {

struct ServerState {
    std::mutex mu;
    std::condition_variable cv;
    int round = 0;  // latest broadcast round; 0 before the first
    std::shared_ptr<const std::vector<std::uint8_t>> round_frame;
    std::map<std::uint32_t, ClientUpdate> updates;
    std::set<std::uint32_t> ids;
    int hellos = 0;
    bool done = false;
    std::uint32_t done_round = 0;
    std::exception_ptr error;

    void fail(std::exception_ptr e) {
        {
            std::lock_guard lock(mu);
            if (!error) {
                error = std::move(e);
            }
        }
        cv.notify_all();
    }
};

void serve_client(Socket& sock, ServerState& st) {
    try {
        ByteSource src = [&sock](std::uint8_t* buf, std::size_t n) {
            return sock.recv_some(buf, n);
        };

        FedMessage first = read_message(src);
        const auto* hello = std::get_if<ClientHello>(&first);
        if (!hello) {
            throw ProtocolError("expected ClientHello");
        }
        std::uint32_t id = hello->client_id;
        {
            std::lock_guard lock(st.mu);
            if (!st.ids.insert(id).second) {
                throw ProtocolError("duplicate client id " +
                                    std::to_string(id));
            }
            ++st.hellos;
        }
        st.cv.notify_all();

        int last_sent = 0;
        for (;;) {
            std::shared_ptr<const std::vector<std::uint8_t>> frame;
            int round = 0;
            std::uint32_t done_round = 0;
            bool done = false;
            {
                std::unique_lock lock(st.mu);
                st.cv.wait(lock, [&] {
                    return st.error || st.done || st.round > last_sent;
                });
                if (st.error) {
                    return;
                }
                if (st.done) {
                    done = true;
                    done_round = st.done_round;
                } else {
                    round = st.round;
                    frame = st.round_frame;
                }
            }
            if (done) {
                sock.send_all(encode_message(Done{done_round}));
                sock.shutdown_both();
                return;
            }

            sock.send_all(*frame);
            FedMessage reply = read_message(src);
            auto* update = std::get_if<LocalUpdate>(&reply);
            if (!update) {
                throw ProtocolError("expected LocalUpdate");
            }
            if (update->round != static_cast<std::uint32_t>(round)) {
                throw ProtocolError("update for round " +
                                    std::to_string(update->round) +
                                    ", expected " + std::to_string(round));
            }
            ClientUpdate cu;
            cu.client_id = id;
            cu.num_samples = update->num_samples;
            try {
                cu.params = decode_params(update->checkpoint);
            } catch (const FormatError& e) {
                throw ProtocolError(e.what());
            }
            {
                std::lock_guard lock(st.mu);
                if (!st.updates.emplace(id, std::move(cu)).second) {
                    throw ProtocolError("duplicate update from client " +
                                        std::to_string(id));
                }
            }
            st.cv.notify_all();
            last_sent = round;
        }
    } catch (...) {
        st.fail(std::current_exception());
    }
}

}  // namespace

MlpParams run_server(const FedConfig& config, MlpParams initial,
                     const ServerHooks& hooks) {
    if (config.rounds < 1 || config.expected_clients < 1) {
        throw InvalidArgument("rounds and expected_clients must be positive");
    }
    if (!initial.canonical_shape()) {
        throw ShapeMismatch("the wire carries canonical checkpoints only");
    }

    Listener listener(config.host, config.port);
    if (hooks.on_listening) {
        hooks.on_listening(config.host, listener.port());
    }

    std::vector<Socket> socks;
    socks.reserve(config.expected_clients);
    for (int i = 0; i < config.expected_clients; ++i) {
        Socket s = listener.accept_within(config.timeout_s);
        s.set_timeouts(config.timeout_s);
        socks.push_back(std::move(s));
    }

    ServerState st;
    std::vector<std::thread> threads;
    threads.reserve(socks.size());
    for (Socket& s : socks) {
        threads.emplace_back(serve_client, std::ref(s), std::ref(st));
    }

    auto wait_for = [&](auto pred) {
        std::unique_lock lock(st.mu);
        bool ok = st.cv.wait_for(lock,
                                 std::chrono::duration<double>(config.timeout_s),
                                 [&] { return st.error != nullptr || pred(); });
        if (!ok) {
            throw Timeout("round timed out");
        }
        if (st.error) {
            std::rethrow_exception(st.error);
        }
    };

    MlpParams global = std::move(initial);
    try {
        wait_for([&] { return st.hellos == config.expected_clients; });
        for (int round = 1; round <= config.rounds; ++round) {
            auto frame = std::make_shared<const std::vector<std::uint8_t>>(
                encode_message(GlobalModel{static_cast<std::uint32_t>(round),
                                           encode_params(global)}));
            {
                std::lock_guard lock(st.mu);
                st.updates.clear();
                st.round_frame = frame;
                st.round = round;
            }
            st.cv.notify_all();
            wait_for([&] {
                return static_cast<int>(st.updates.size()) ==
                       config.expected_clients;
            });
            std::vector<ClientUpdate> ups;
            {
                std::lock_guard lock(st.mu);
                ups.reserve(st.updates.size());
                for (auto& [id, up] : st.updates) {
                    ups.push_back(std::move(up));
                }
                st.updates.clear();
            }
            global = aggregate(std::move(ups));
            if (hooks.on_round_complete) {
                hooks.on_round_complete(round, global);
            }
        }
        {
            std::lock_guard lock(st.mu);
            st.done = true;
            st.done_round = static_cast<std::uint32_t>(config.rounds);
        }
        st.cv.notify_all();
    } catch (...) {
        st.fail(std::current_exception());
    }

    {
        std::lock_guard lock(st.mu);
        if (st.error) {
            // Unblock handler threads stuck in recv.
            for (Socket& s : socks) {
                s.shutdown_both();
            }
        }
    }
    for (std::thread& t : threads) {
        t.join();
    }
    std::exception_ptr err;
    {
        std::lock_guard lock(st.mu);
        err = st.error;
    }
    if (err) {
        std::rethrow_exception(err);
    }
    return global;
}

MlpParams run_client(const FedConfig& config, const Dataset& data,
                     const std::string& server_host, std::uint16_t server_port,
                     std::uint32_t client_id) {
    if (data.empty()) {
        throw EmptyDataset("client has no training data");
    }
    if (config.local_epochs < 1) {
        throw InvalidArgument("local_epochs must be at least 1");
    }

    Socket sock = connect_to(server_host, server_port, config.timeout_s);
    sock.set_timeouts(config.timeout_s);
    ByteSource src = [&sock](std::uint8_t* buf, std::size_t n) {
        return sock.recv_some(buf, n);
    };

    sock.send_all(encode_message(
        ClientHello{client_id, static_cast<std::uint32_t>(data.size())}));

    MlpParams last_global;
    bool got_global = false;
    for (;;) {
        FedMessage msg = read_message(src);
        if (auto* gm = std::get_if<GlobalModel>(&msg)) {
            MlpParams global;
            try {
                global = decode_params(gm->checkpoint);
            } catch (const FormatError& e) {
                throw ProtocolError(e.what());
            }

            TrainConfig tc;
            tc.learning_rate = config.learning_rate;
            tc.weight_decay = config.weight_decay;
            tc.batch_size = config.batch_size;
            tc.shuffle_seed = derive_seed(config.train_seed, gm->round);
            if (config.local_unit == LocalUnit::epoch) {
                tc.epochs = config.local_epochs;
            } else {
                tc.epochs = 1;  // train() extends passes up to the step cap
                tc.max_steps = config.local_epochs;
            }
            MlpParams local = train(global, data, tc);

            sock.send_all(encode_message(
                LocalUpdate{gm->round, static_cast<std::uint32_t>(data.size()),
                            encode_params(local)}));
            last_global = std::move(global);
            got_global = true;
        } else if (std::holds_alternative<Done>(msg)) {
            if (!got_global) {
                throw ProtocolError("done before any global model");
            }
            return last_global;
        } else {
            throw ProtocolError("unexpected message from server");
        }
    }
}

}  // namespace mazefl
