#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "scbf/channel_selection.hpp"
#include "scbf/matrix.hpp"
#include "scbf/mlp.hpp"
#include "scbf/pruning.hpp"

// Client/server framing:
//   "SCBF" | version 0x01 | type | payload length (u32 LE) | payload
// All integers are little-endian u32 and all values little-endian IEEE-754 f32.
namespace scbf::wire {

inline constexpr std::array<std::uint8_t, 4> kMagic{'S', 'C', 'B', 'F'};
inline constexpr std::uint8_t kVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 10;

enum class MessageType : std::uint8_t {
  kServerWeights = 0x01,
  kClientUpdate = 0x02,
  kPruneDirective = 0x03,
  kRoundAck = 0x04,
};

struct Frame {
  MessageType type = MessageType::kRoundAck;
  std::vector<std::uint8_t> payload;

  bool operator==(const Frame&) const = default;
};

// Dense per-layer weights and biases (the ServerWeights payload).
struct DenseParameters {
  std::vector<DenseMatrix> weights;
  std::vector<std::vector<double>> biases;

  bool operator==(const DenseParameters&) const = default;
};

DenseParameters parameters_of(const MlpModel& model);
DenseParameters parameters_of(const GradientSet& grads);

std::vector<std::uint8_t> encode_frame(const Frame& frame);

// Parses one frame from the front of `bytes`. Returns the frame and the number
// of bytes consumed, or nullopt if `bytes` holds only part of a frame.
// Throws ProtocolError on a bad magic, version or message type.
std::optional<std::pair<Frame, std::size_t>> decode_frame(std::span<const std::uint8_t> bytes);

// Header fields of a complete 10-byte header; returns the payload length.
std::uint32_t parse_header(std::span<const std::uint8_t> header, MessageType& type);

Frame encode_server_weights(const DenseParameters& params);
DenseParameters decode_server_weights(std::span<const std::uint8_t> payload);

Frame encode_client_update(const SparseUpdate& update);
// `shapes` are the receiver's layer shapes; entries are range-checked against them.
SparseUpdate decode_client_update(std::span<const std::uint8_t> payload,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& shapes);

Frame encode_prune_directive(const PruneDirective& directive);
PruneDirective decode_prune_directive(std::span<const std::uint8_t> payload);

Frame encode_round_ack();

// Rounds every value through f32, as a transfer over the wire would.
DenseParameters to_wire_precision(DenseParameters params);
SparseUpdate to_wire_precision(SparseUpdate update);

}  // namespace scbf::wire
