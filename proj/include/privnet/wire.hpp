// Copyright 2026 The privnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sodium.h>
#include <sys/socket.h>
#include <unistd.h>

#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "privnet/common.hpp"
#include "privnet/ring.hpp"

namespace privnet {

// ---------------------------------------------------------------------------
// Frame format, shared by the inter-party protocol and the serving layer:
//
//   [4-byte big-endian payload length][1-byte message type]
//   [16-byte session id][8-byte big-endian sequence number][payload]
//
// Payload numeric encoding is little-endian 64-bit words, row-major for
// tensors. On TCP transports the payload field carries the authenticated
// ciphertext of the logical payload (see seal_payload below).
// ---------------------------------------------------------------------------

enum class MsgType : uint8_t {
  kTripleDelivery = 1,
  kBeaverOpen = 2,
  kBitOpen = 3,
  kShareDelivery = 4,
  kOutputShare = 5,
  kAbort = 6,

  kPredictSubmit = 16,
  kSharePayload = 17,
  kResultShare = 18,
  kStatus = 19,
};

inline const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::kTripleDelivery: return "TRIPLE_DELIVERY";
    case MsgType::kBeaverOpen: return "BEAVER_OPEN";
    case MsgType::kBitOpen: return "BIT_OPEN";
    case MsgType::kShareDelivery: return "SHARE_DELIVERY";
    case MsgType::kOutputShare: return "OUTPUT_SHARE";
    case MsgType::kAbort: return "ABORT";
    case MsgType::kPredictSubmit: return "PREDICT_SUBMIT";
    case MsgType::kSharePayload: return "SHARE_PAYLOAD";
    case MsgType::kResultShare: return "RESULT_SHARE";
    case MsgType::kStatus: return "STATUS";
  }
  return "UNKNOWN";
}

struct SessionId {
  std::array<uint8_t, 16> bytes{};

  bool operator==(const SessionId&) const = default;

  static SessionId random(Rng& rng) {
    SessionId id;
    for (int i = 0; i < 2; ++i) {
      uint64_t w = rng();
      std::memcpy(id.bytes.data() + 8 * i, &w, 8);
    }
    return id;
  }

  std::string hex() const { return to_hex(bytes); }

  // First 8 bytes as an integer label, for seed derivation.
  uint64_t label() const { return get_u64_le(bytes.data()); }
};

struct Frame {
  MsgType type = MsgType::kAbort;
  SessionId session;
  uint64_t seq = 0;
  std::vector<uint8_t> payload;
};

inline constexpr size_t kFrameHeaderSize = 4 + 1 + 16 + 8;

inline std::vector<uint8_t> frame_encode(const Frame& f) {
  std::vector<uint8_t> out;
  out.reserve(kFrameHeaderSize + f.payload.size());
  put_u32_be(out, static_cast<uint32_t>(f.payload.size()));
  out.push_back(static_cast<uint8_t>(f.type));
  out.insert(out.end(), f.session.bytes.begin(), f.session.bytes.end());
  put_u64_be(out, f.seq);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

// Decodes one frame from a buffer holding at least a full frame; returns the
// frame and the number of bytes consumed.
inline std::pair<Frame, size_t> frame_decode(std::span<const uint8_t> buf) {
  if (buf.size() < kFrameHeaderSize) throw io_error("frame_decode: short header");
  Frame f;
  uint32_t len = get_u32_be(buf.data());
  f.type = static_cast<MsgType>(buf[4]);
  std::memcpy(f.session.bytes.data(), buf.data() + 5, 16);
  f.seq = get_u64_be(buf.data() + 21);
  if (buf.size() < kFrameHeaderSize + len) throw io_error("frame_decode: short payload");
  f.payload.assign(buf.begin() + kFrameHeaderSize, buf.begin() + kFrameHeaderSize + len);
  return {std::move(f), kFrameHeaderSize + len};
}

// Word <-> payload helpers. Word size follows the ring in use; the external
// 64-bit contract is the production instantiation.
template <RingWord W>
void put_words(std::vector<uint8_t>& out, std::span<const W> words) {
  for (W w : words)
    for (size_t i = 0; i < sizeof(W); ++i) out.push_back(static_cast<uint8_t>(w >> (8 * i)));
}

template <RingWord W>
std::vector<W> get_words(std::span<const uint8_t> bytes) {
  if (bytes.size() % sizeof(W) != 0) throw io_error("payload is not a whole number of words");
  std::vector<W> out(bytes.size() / sizeof(W));
  for (size_t i = 0; i < out.size(); ++i) {
    W w = 0;
    for (size_t b = 0; b < sizeof(W); ++b)
      w |= static_cast<W>(static_cast<W>(bytes[i * sizeof(W) + b]) << (8 * b));
    out[i] = w;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Channel security: XSalsa20-Poly1305 secretbox under per-direction keys
// derived from the pre-shared master key in the deployment config. The nonce
// is session id || big-endian sequence number, unique per (key, frame)
// because keys are per ordered (sender, receiver) pair and sequence numbers
// never repeat within a session.
// ---------------------------------------------------------------------------

enum class Role : uint8_t { kParty0 = 0, kParty1 = 1, kParty2 = 2, kQueue = 3, kClient = 4 };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::kParty0: return "party0";
    case Role::kParty1: return "party1";
    case Role::kParty2: return "party2";
    case Role::kQueue: return "queue";
    case Role::kClient: return "client";
  }
  return "unknown";
}

using Key256 = std::array<uint8_t, 32>;

inline Key256 derive_channel_key(const Key256& master, Role sender, Role receiver) {
  sodium_ready();
  Key256 out;
  std::array<uint8_t, 18> context{};
  std::memcpy(context.data(), "privnet-channel-", 16);
  context[16] = static_cast<uint8_t>(sender);
  context[17] = static_cast<uint8_t>(receiver);
  crypto_generichash(out.data(), out.size(), context.data(), context.size(), master.data(),
                     master.size());
  return out;
}

inline std::array<uint8_t, crypto_secretbox_NONCEBYTES> make_nonce(const SessionId& session,
                                                                   uint64_t seq) {
  std::array<uint8_t, crypto_secretbox_NONCEBYTES> nonce{};
  std::memcpy(nonce.data(), session.bytes.data(), 16);
  for (int i = 0; i < 8; ++i) nonce[16 + i] = static_cast<uint8_t>(seq >> (8 * (7 - i)));
  return nonce;
}

inline std::vector<uint8_t> seal_payload(const Key256& key, const SessionId& session, uint64_t seq,
                                         std::span<const uint8_t> plaintext) {
  sodium_ready();
  auto nonce = make_nonce(session, seq);
  std::vector<uint8_t> out(plaintext.size() + crypto_secretbox_MACBYTES);
  crypto_secretbox_easy(out.data(), plaintext.data(), plaintext.size(), nonce.data(), key.data());
  return out;
}

inline std::vector<uint8_t> open_payload(const Key256& key, const SessionId& session, uint64_t seq,
                                         std::span<const uint8_t> ciphertext) {
  sodium_ready();
  if (ciphertext.size() < crypto_secretbox_MACBYTES)
    throw session_abort_error("sealed payload shorter than its authenticator");
  auto nonce = make_nonce(session, seq);
  std::vector<uint8_t> out(ciphertext.size() - crypto_secretbox_MACBYTES);
  if (crypto_secretbox_open_easy(out.data(), ciphertext.data(), ciphertext.size(), nonce.data(),
                                 key.data()) != 0)
    throw session_abort_error("payload authentication failed");
  return out;
}

// ---------------------------------------------------------------------------
// Channel: one ordered duplex link between two endpoints within one session.
// Sequence numbers are stamped on send and checked on receive; any gap or
// reordering aborts the session. An inbound ABORT frame is surfaced as
// session_abort_error carrying the sender's diagnostic.
// ---------------------------------------------------------------------------

class Channel {
 public:
  virtual ~Channel() = default;

  void send(MsgType type, std::vector<uint8_t> payload) {
    Frame f;
    f.type = type;
    f.session = session_;
    f.seq = next_send_seq_++;
    f.payload = std::move(payload);
    send_impl(std::move(f));
  }

  Frame recv() {
    Frame f = recv_impl();
    if (session_bound_ && !(f.session == session_))
      throw session_abort_error("frame for foreign session " + f.session.hex());
    if (!session_bound_) {
      session_ = f.session;
      session_bound_ = true;
    }
    if (f.seq != next_recv_seq_)
      throw session_abort_error("sequence desync: expected " + std::to_string(next_recv_seq_) +
                                ", got " + std::to_string(f.seq));
    ++next_recv_seq_;
    if (transcript_) {
      auto bytes = frame_encode(f);
      transcript_->insert(transcript_->end(), bytes.begin(), bytes.end());
    }
    if (f.type == MsgType::kAbort)
      throw session_abort_error("peer abort: " +
                                std::string(f.payload.begin(), f.payload.end()));
    return f;
  }

  // Receives and requires the given type; anything else is a desync.
  Frame expect(MsgType type) {
    Frame f = recv();
    if (f.type != type)
      throw session_abort_error(std::string("expected ") + msg_type_name(type) + ", got " +
                                msg_type_name(f.type));
    return f;
  }

  void send_abort(const std::string& reason) noexcept {
    try {
      send(MsgType::kAbort, std::vector<uint8_t>(reason.begin(), reason.end()));
    } catch (...) {
      // channel already dead; nothing to do
    }
  }

  const SessionId& session() const { return session_; }

  // Records every received frame (post-decryption) for the capture harness.
  void set_transcript(std::vector<uint8_t>* sink) { transcript_ = sink; }

 protected:
  explicit Channel(std::optional<SessionId> session) {
    if (session) {
      session_ = *session;
      session_bound_ = true;
    }
  }

  virtual void send_impl(Frame&& f) = 0;
  virtual Frame recv_impl() = 0;

  SessionId session_;
  bool session_bound_ = false;

 private:
  uint64_t next_send_seq_ = 0;
  uint64_t next_recv_seq_ = 0;
  std::vector<uint8_t>* transcript_ = nullptr;
};

// ---------------------------------------------------------------------------
// In-process channel pair, used by tests and the local inference harness.
// ---------------------------------------------------------------------------

namespace detail {

struct LocalQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Frame> frames;
  bool closed = false;

  void push(Frame&& f) {
    {
      std::lock_guard lk(mu);
      if (closed) return;
      frames.push_back(std::move(f));
    }
    cv.notify_one();
  }

  Frame pop() {
    std::unique_lock lk(mu);
    cv.wait(lk, [&] { return !frames.empty() || closed; });
    if (frames.empty()) throw session_abort_error("local channel closed");
    Frame f = std::move(frames.front());
    frames.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

}  // namespace detail

class LocalChannel final : public Channel {
 public:
  static std::pair<std::unique_ptr<LocalChannel>, std::unique_ptr<LocalChannel>> make_pair(
      const SessionId& session) {
    auto a2b = std::make_shared<detail::LocalQueue>();
    auto b2a = std::make_shared<detail::LocalQueue>();
    auto a = std::unique_ptr<LocalChannel>(new LocalChannel(session, a2b, b2a));
    auto b = std::unique_ptr<LocalChannel>(new LocalChannel(session, b2a, a2b));
    return {std::move(a), std::move(b)};
  }

  ~LocalChannel() override {
    out_->close();
    in_->close();
  }

 protected:
  void send_impl(Frame&& f) override { out_->push(std::move(f)); }
  Frame recv_impl() override { return in_->pop(); }

 private:
  LocalChannel(const SessionId& session, std::shared_ptr<detail::LocalQueue> out,
               std::shared_ptr<detail::LocalQueue> in)
      : Channel(session), out_(std::move(out)), in_(std::move(in)) {}

  std::shared_ptr<detail::LocalQueue> out_;
  std::shared_ptr<detail::LocalQueue> in_;
};

// ---------------------------------------------------------------------------
// TCP transport.
// ---------------------------------------------------------------------------

class TcpSocket {
 public:
  TcpSocket() = default;
  explicit TcpSocket(int fd) : fd_(fd) {}
  TcpSocket(TcpSocket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  TcpSocket& operator=(TcpSocket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = o.fd_;
      o.fd_ = -1;
    }
    return *this;
  }
  TcpSocket(const TcpSocket&) = delete;
  TcpSocket& operator=(const TcpSocket&) = delete;
  ~TcpSocket() { close(); }

  bool valid() const { return fd_ >= 0; }

  void close() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  static TcpSocket connect(const std::string& host, uint16_t port, int timeout_ms) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    std::string service = std::to_string(port);
    if (getaddrinfo(host.c_str(), service.c_str(), &hints, &res) != 0 || res == nullptr)
      throw io_error("connect: cannot resolve " + host);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
      freeaddrinfo(res);
      throw io_error("connect: socket() failed");
    }
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    int rc = ::connect(fd, res->ai_addr, static_cast<socklen_t>(res->ai_addrlen));
    freeaddrinfo(res);
    if (rc != 0) {
      ::close(fd);
      throw io_error("connect: " + host + ":" + service + " refused or timed out");
    }
    TcpSocket s(fd);
    s.tune();
    return s;
  }

  void tune() {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  }

  void set_recv_timeout(int timeout_ms) {
    timeval tv{timeout_ms / 1000, (timeout_ms % 1000) * 1000};
    setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  }

  void send_all(std::span<const uint8_t> data) const {
    size_t off = 0;
    while (off < data.size()) {
      ssize_t n = ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw io_error("send: connection lost");
      off += static_cast<size_t>(n);
    }
  }

  // Reads exactly n bytes; false on orderly shutdown at a frame boundary.
  bool recv_exact(uint8_t* out, size_t n) const {
    size_t off = 0;
    while (off < n) {
      ssize_t r = ::recv(fd_, out + off, n - off, 0);
      if (r == 0) {
        if (off == 0) return false;
        throw io_error("recv: connection truncated mid-frame");
      }
      if (r < 0) throw io_error("recv: timed out or failed");
      off += static_cast<size_t>(r);
    }
    return true;
  }

  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

class TcpListener {
 public:
  TcpListener() = default;
  TcpListener(TcpListener&&) = default;
  TcpListener& operator=(TcpListener&&) = default;

  static TcpListener bind(const std::string& host, uint16_t port) {
    TcpListener l;
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw io_error("listen: socket() failed");
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host.empty() || host == "0.0.0.0")
      addr.sin_addr.s_addr = INADDR_ANY;
    else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
      hostent* he = gethostbyname(host.c_str());
      if (!he || he->h_addrtype != AF_INET) {
        ::close(fd);
        throw io_error("listen: cannot resolve " + host);
      }
      std::memcpy(&addr.sin_addr, he->h_addr, sizeof(addr.sin_addr));
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw io_error("listen: cannot bind " + host + ":" + std::to_string(port) +
                     " (port in use?)");
    }
    if (::listen(fd, 64) != 0) {
      ::close(fd);
      throw io_error("listen: listen() failed");
    }
    l.sock_ = TcpSocket(fd);
    return l;
  }

  TcpSocket accept() const {
    int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) throw io_error("accept failed (listener closed?)");
    TcpSocket s(fd);
    s.tune();
    return s;
  }

  uint16_t port() const {
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    return ntohs(addr.sin_port);
  }

  void close() { sock_.close(); }
  bool valid() const { return sock_.valid(); }

 private:
  TcpSocket sock_;
};

// Authenticated-encrypted channel over one TCP connection. Outbound frames go
// through a writer thread so that both peers of a protocol round can send
// before either receives without risking a kernel-buffer deadlock on large
// openings.
class TcpChannel final : public Channel {
 public:
  TcpChannel(TcpSocket sock, std::optional<SessionId> session, std::optional<Key256> send_key,
             std::optional<Key256> recv_key)
      : Channel(session),
        sock_(std::move(sock)),
        send_key_(send_key),
        recv_key_(recv_key),
        writer_([this] { writer_loop(); }) {}

  ~TcpChannel() override {
    {
      std::lock_guard lk(mu_);
      closing_ = true;
    }
    cv_.notify_all();
    writer_.join();
    sock_.close();
  }

  void set_recv_timeout(int timeout_ms) { sock_.set_recv_timeout(timeout_ms); }

 protected:
  void send_impl(Frame&& f) override {
    if (send_key_) f.payload = seal_payload(*send_key_, f.session, f.seq, f.payload);
    auto bytes = frame_encode(f);
    {
      std::lock_guard lk(mu_);
      if (write_error_) throw io_error("send: connection lost");
      outbox_.push_back(std::move(bytes));
    }
    cv_.notify_one();
  }

  Frame recv_impl() override {
    std::array<uint8_t, kFrameHeaderSize> header;
    if (!sock_.recv_exact(header.data(), header.size()))
      throw io_error("recv: connection closed by peer");
    uint32_t len = get_u32_be(header.data());
    Frame f;
    f.type = static_cast<MsgType>(header[4]);
    std::memcpy(f.session.bytes.data(), header.data() + 5, 16);
    f.seq = get_u64_be(header.data() + 21);
    f.payload.resize(len);
    if (len > 0 && !sock_.recv_exact(f.payload.data(), len))
      throw io_error("recv: connection truncated");
    if (recv_key_) f.payload = open_payload(*recv_key_, f.session, f.seq, f.payload);
    return f;
  }

 private:
  void writer_loop() {
    for (;;) {
      std::vector<uint8_t> next;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return !outbox_.empty() || closing_; });
        if (outbox_.empty()) return;
        next = std::move(outbox_.front());
        outbox_.pop_front();
      }
      try {
        sock_.send_all(next);
      } catch (...) {
        std::lock_guard lk(mu_);
        write_error_ = true;
      }
    }
  }

  TcpSocket sock_;
  std::optional<Key256> send_key_, recv_key_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::vector<uint8_t>> outbox_;
  bool closing_ = false;
  bool write_error_ = false;
  std::thread writer_;
};

// Connection-level prologue: the dialer announces its role in one clear byte
// before the first frame so the listener can derive the per-direction keys.
inline void send_role_prologue(const TcpSocket& sock, Role role) {
  uint8_t b = static_cast<uint8_t>(role);
  sock.send_all(std::span<const uint8_t>(&b, 1));
}

inline Role recv_role_prologue(const TcpSocket& sock) {
  uint8_t b = 0;
  if (!sock.recv_exact(&b, 1)) throw io_error("prologue: connection closed");
  if (b > static_cast<uint8_t>(Role::kClient)) throw io_error("prologue: unknown role byte");
  return static_cast<Role>(b);
}

// Dials a peer and opens an encrypted channel bound to the session. The first
// frame on the wire is STATUS carrying the dialer's role, which the listener
// uses to bind the connection to (session, peer).
inline std::unique_ptr<TcpChannel> dial_channel(const std::string& host, uint16_t port,
                                                Role self, Role peer, const Key256& master,
                                                const SessionId& session, int timeout_ms) {
  TcpSocket sock = TcpSocket::connect(host, port, timeout_ms);
  sock.set_recv_timeout(timeout_ms);
  send_role_prologue(sock, self);
  auto ch = std::make_unique<TcpChannel>(std::move(sock), session,
                                         derive_channel_key(master, self, peer),
                                         derive_channel_key(master, peer, self));
  std::vector<uint8_t> hello;
  put_u64_le(hello, 0);  // status OK
  put_u64_le(hello, static_cast<uint64_t>(self));
  ch->send(MsgType::kStatus, std::move(hello));
  return ch;
}

// Listener side of dial_channel: wraps an accepted socket once the prologue
// has been read. The session id is learned from the hello frame.
inline std::unique_ptr<TcpChannel> accept_channel(TcpSocket sock, Role self, Role peer,
                                                  const Key256& master, int timeout_ms) {
  sock.set_recv_timeout(timeout_ms);
  return std::make_unique<TcpChannel>(std::move(sock), std::nullopt,
                                      derive_channel_key(master, self, peer),
                                      derive_channel_key(master, peer, self));
}

}  // namespace privnet
