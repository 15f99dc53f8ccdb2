#include <doctest.h>

#include <random>
#include <thread>

#include "oracles.hpp"
#include "scbf/errors.hpp"
#include "scbf/transport.hpp"
#include "scbf/wire.hpp"

using namespace scbf;
using namespace scbf::wire;

namespace {

// Values that survive the f32 wire format exactly.
double f32_value(std::mt19937_64& rng) {
  std::normal_distribution<float> normal(0.0f, 2.0f);
  return static_cast<double>(normal(rng));
}

DenseParameters random_parameters(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  DenseParameters p;
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    DenseMatrix m(shape[l], shape[l + 1]);
    for (double& v : m.data()) v = f32_value(rng);
    std::vector<double> b(shape[l + 1]);
    for (double& v : b) v = f32_value(rng);
    p.weights.push_back(std::move(m));
    p.biases.push_back(std::move(b));
  }
  return p;
}

SparseUpdate random_update(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  SparseUpdate u;
  std::bernoulli_distribution keep(0.4);
  for (std::size_t l = 0; l + 1 < shape.size(); ++l) {
    u.source_shapes.emplace_back(shape[l], shape[l + 1]);
    std::vector<SparseEntry> entries;
    for (std::uint32_t r = 0; r < shape[l]; ++r) {
      for (std::uint32_t c = 0; c < shape[l + 1]; ++c) {
        if (keep(rng)) entries.push_back({r, c, f32_value(rng)});
      }
    }
    u.layer_entries.push_back(std::move(entries));
  }
  return u;
}

Frame through_bytes(const Frame& f) {
  const auto bytes = encode_frame(f);
  const auto decoded = decode_frame(bytes);
  REQUIRE(decoded.has_value());
  CHECK(decoded->second == bytes.size());
  return decoded->first;
}

}  // namespace

TEST_CASE("frame header layout") {
  const auto bytes = encode_frame({MessageType::kPruneDirective, {0xAA, 0xBB, 0xCC}});
  const std::vector<std::uint8_t> expected{'S', 'C', 'B', 'F', 0x01, 0x03, 3, 0, 0, 0, 0xAA, 0xBB, 0xCC};
  CHECK(bytes == expected);
  CHECK(encode_frame(encode_round_ack()) ==
        std::vector<std::uint8_t>{'S', 'C', 'B', 'F', 0x01, 0x04, 0, 0, 0, 0});
}

TEST_CASE("payload encodings are little-endian u32 and f32") {
  DenseParameters p;
  p.weights = {DenseMatrix(1, 1, {1.0})};
  p.biases = {{-2.0}};
  const Frame f = encode_server_weights(p);
  const std::vector<std::uint8_t> expected{1, 0, 0, 0, 1, 0, 0, 0, 0x00, 0x00, 0x80, 0x3F,
                                           0x00, 0x00, 0x00, 0xC0};
  CHECK(f.payload == expected);

  SparseUpdate u;
  u.source_shapes = {{4, 4}};
  u.layer_entries = {{{2, 3, 0.5}}};
  const std::vector<std::uint8_t> update_bytes{1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0, 0x00, 0x00, 0x00, 0x3F};
  CHECK(encode_client_update(u).payload == update_bytes);

  const std::vector<std::uint8_t> prune_bytes{2, 0, 0, 0, 1, 0, 0, 0, 5, 0, 0, 0, 0, 0, 0, 0};
  CHECK(encode_prune_directive({{{1, 5}, {}}}).payload == prune_bytes);
}

TEST_CASE("every message type round-trips") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::size_t> shape{1 + rng() % 9, 1 + rng() % 7, 1 + rng() % 5, 1};
    const DenseParameters p = random_parameters(rng, shape);
    const Frame pf = through_bytes(encode_server_weights(p));
    CHECK(pf.type == MessageType::kServerWeights);
    CHECK(decode_server_weights(pf.payload) == p);

    const SparseUpdate u = random_update(rng, shape);
    const Frame uf = through_bytes(encode_client_update(u));
    CHECK(uf.type == MessageType::kClientUpdate);
    CHECK(decode_client_update(uf.payload, u.source_shapes) == u);

    PruneDirective d;
    for (std::size_t l = 0; l + 2 < shape.size(); ++l) {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < shape[l + 1]; ++i) {
        if (rng() % 3 == 0) idx.push_back(i);
      }
      d.layers.push_back(idx);
    }
    const Frame df = through_bytes(encode_prune_directive(d));
    CHECK(df.type == MessageType::kPruneDirective);
    CHECK(decode_prune_directive(df.payload) == d);

    const Frame af = through_bytes(encode_round_ack());
    CHECK(af.type == MessageType::kRoundAck);
    CHECK(af.payload.empty());
  }
}

TEST_CASE("double values are rounded to f32 on the wire") {
  DenseParameters p;
  p.weights = {DenseMatrix(1, 2, {0.1, 1e-3})};
  p.biases = {{0.0, 1.0 / 3.0}};
  const DenseParameters back = decode_server_weights(encode_server_weights(p).payload);
  CHECK(back == to_wire_precision(p));
  CHECK(back.weights[0](0, 0) != 0.1);
  CHECK(std::abs(back.weights[0](0, 0) - 0.1) <= 0.1 * 6e-8);
}

TEST_CASE("malformed frames") {
  auto bytes = encode_frame(encode_round_ack());
  SUBCASE("partial frame waits for more bytes") {
    auto full = encode_frame({MessageType::kClientUpdate, {0, 0, 0, 0}});
    for (std::size_t n = 0; n < full.size(); ++n) {
      CHECK_FALSE(decode_frame(std::span(full).first(n)).has_value());
    }
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_frame(bytes), ProtocolError);
  }
  SUBCASE("bad version") {
    bytes[4] = 0x02;
    CHECK_THROWS_AS(decode_frame(bytes), ProtocolError);
  }
  SUBCASE("unknown type") {
    bytes[5] = 0x09;
    CHECK_THROWS_AS(decode_frame(bytes), ProtocolError);
  }
  SUBCASE("truncated payloads") {
    const std::vector<std::uint8_t> short_update{5, 0, 0, 0, 1, 0};
    CHECK_THROWS_AS(decode_client_update(short_update, {{2, 2}}), ProtocolError);
    const std::vector<std::uint8_t> huge{0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF};
    CHECK_THROWS_AS(decode_server_weights(huge), ProtocolError);
  }
  SUBCASE("update outside the receiver's shapes") {
    SparseUpdate u;
    u.source_shapes = {{4, 4}};
    u.layer_entries = {{{3, 3, 1.0}}};
    const Frame f = encode_client_update(u);
    CHECK_THROWS_AS(decode_client_update(f.payload, {{2, 2}}), ProtocolError);
    CHECK_THROWS_AS(decode_client_update(f.payload, {{4, 4}, {4, 1}}), ProtocolError);
  }
}

TEST_CASE("frames cross a loopback connection in order") {
  std::mt19937_64 rng(5);
  const DenseParameters big = random_parameters(rng, {300, 64, 32, 1});
  LoopbackListener listener;
  std::vector<Frame> received;
  std::thread client([&] {
    Connection c = connect_loopback(listener.port());
    for (int i = 0; i < 3; ++i) received.push_back(c.receive());
    c.send(encode_round_ack());
  });
  Connection server = listener.accept();
  server.send(encode_server_weights(big));
  server.send(encode_prune_directive({{{1, 2}, {0}}}));
  server.send(encode_round_ack());
  const Frame reply = server.receive();
  client.join();
  CHECK(reply.type == MessageType::kRoundAck);
  REQUIRE(received.size() == 3);
  CHECK(decode_server_weights(received[0].payload) == big);
  CHECK(decode_prune_directive(received[1].payload) == PruneDirective{{{1, 2}, {0}}});
  CHECK(received[2].type == MessageType::kRoundAck);
  server.close();
}

TEST_CASE("receive on a closed peer fails") {
  LoopbackListener listener;
  std::thread client([&] { Connection c = connect_loopback(listener.port()); });
  Connection server = listener.accept();
  client.join();
  CHECK_THROWS_AS(server.receive(), ProtocolError);
}
