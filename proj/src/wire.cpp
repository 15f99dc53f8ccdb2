#include "scbf/wire.hpp"

#include <bit>
#include <cstring>
#include <string>

#include "scbf/errors.hpp"

namespace scbf::wire {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void count(std::size_t n) {
    if (n > 0xFFFFFFFFu) throw ProtocolError("count does not fit in u32");
    u32(static_cast<std::uint32_t>(n));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint32_t u32() {
    if (bytes_.size() - pos_ < 4) throw ProtocolError("payload truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }

  // Guards against counts that claim more data than remains.
  void require(std::size_t items, std::size_t item_size) {
    if (item_size != 0 && items > (bytes_.size() - pos_) / item_size) {
      throw ProtocolError("payload truncated");
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

bool known_type(std::uint8_t t) { return t >= 0x01 && t <= 0x04; }

}  // namespace

DenseParameters parameters_of(const MlpModel& model) {
  return {model.weights(), model.biases()};
}

DenseParameters parameters_of(const GradientSet& grads) { return {grads.weights, grads.biases}; }

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
  if (frame.payload.size() > 0xFFFFFFFFu) throw ProtocolError("payload too large for one frame");
  std::vector<std::uint8_t> out(kMagic.begin(), kMagic.end());
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(frame.type));
  const auto len = static_cast<std::uint32_t>(frame.payload.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

std::uint32_t parse_header(std::span<const std::uint8_t> header, MessageType& type) {
  if (header.size() < kHeaderSize) throw ProtocolError("frame header truncated");
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) {
    throw ProtocolError("bad frame magic");
  }
  if (header[4] != kVersion) {
    throw ProtocolError("unsupported protocol version " + std::to_string(header[4]));
  }
  if (!known_type(header[5])) {
    throw ProtocolError("unknown message type " + std::to_string(header[5]));
  }
  type = static_cast<MessageType>(header[5]);
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(header[6 + i]) << (8 * i);
  return len;
}

std::optional<std::pair<Frame, std::size_t>> decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderSize) return std::nullopt;
  Frame frame;
  const std::uint32_t len = parse_header(bytes.first(kHeaderSize), frame.type);
  if (bytes.size() - kHeaderSize < len) return std::nullopt;
  frame.payload.assign(bytes.begin() + kHeaderSize, bytes.begin() + kHeaderSize + len);
  return std::make_pair(std::move(frame), kHeaderSize + len);
}

Frame encode_server_weights(const DenseParameters& params) {
  if (params.weights.size() != params.biases.size()) {
    throw ProtocolError("server weights: weight and bias layer counts differ");
  }
  Writer w;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const DenseMatrix& m = params.weights[l];
    if (params.biases[l].size() != m.cols()) {
      throw ProtocolError("server weights: layer " + std::to_string(l + 1) +
                          " bias length does not match its columns");
    }
    w.count(m.rows());
    w.count(m.cols());
    for (double v : m.data()) w.f32(v);
    for (double v : params.biases[l]) w.f32(v);
  }
  return {MessageType::kServerWeights, w.take()};
}

DenseParameters decode_server_weights(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  DenseParameters params;
  while (!r.done()) {
    const std::size_t rows = r.u32();
    const std::size_t cols = r.u32();
    const std::size_t floats = r.remaining() / 4;
    if (cols > floats || (cols != 0 && rows > (floats - cols) / cols)) {
      throw ProtocolError("payload truncated");
    }
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = r.f32();
    std::vector<double> bias(cols);
    for (double& v : bias) v = r.f32();
    params.weights.push_back(std::move(m));
    params.biases.push_back(std::move(bias));
  }
  return params;
}

Frame encode_client_update(const SparseUpdate& update) {
  Writer w;
  for (const auto& layer : update.layer_entries) {
    w.count(layer.size());
    for (const SparseEntry& e : layer) {
      w.u32(e.row);
      w.u32(e.col);
      w.f32(e.value);
    }
  }
  return {MessageType::kClientUpdate, w.take()};
}

SparseUpdate decode_client_update(std::span<const std::uint8_t> payload,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& shapes) {
  Reader r(payload);
  SparseUpdate update;
  while (!r.done()) {
    const std::size_t count = r.u32();
    r.require(count, 12);
    std::vector<SparseEntry> entries(count);
    for (SparseEntry& e : entries) {
      e.row = r.u32();
      e.col = r.u32();
      e.value = r.f32();
    }
    update.layer_entries.push_back(std::move(entries));
  }
  if (update.layer_entries.size() != shapes.size()) {
    throw ProtocolError("client update has " + std::to_string(update.layer_entries.size()) +
                        " layers, expected " + std::to_string(shapes.size()));
  }
  update.source_shapes = shapes;
  try {
    update.validate();
  } catch (const ShapeError& e) {
    throw ProtocolError(std::string("client update: ") + e.what());
  }
  return update;
}

Frame encode_prune_directive(const PruneDirective& directive) {
  Writer w;
  for (const auto& layer : directive.layers) {
    w.count(layer.size());
    for (std::size_t idx : layer) w.count(idx);
  }
  return {MessageType::kPruneDirective, w.take()};
}

PruneDirective decode_prune_directive(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  PruneDirective directive;
  while (!r.done()) {
    const std::size_t count = r.u32();
    r.require(count, 4);
    std::vector<std::size_t> layer(count);
    for (std::size_t& idx : layer) idx = r.u32();
    directive.layers.push_back(std::move(layer));
  }
  return directive;
}

Frame encode_round_ack() { return {MessageType::kRoundAck, {}}; }

DenseParameters to_wire_precision(DenseParameters params) {
  for (auto& m : params.weights) {
    for (double& v : m.data()) v = static_cast<float>(v);
  }
  for (auto& b : params.biases) {
    for (double& v : b) v = static_cast<float>(v);
  }
  return params;
}

SparseUpdate to_wire_precision(SparseUpdate update) {
  for (auto& layer : update.layer_entries) {
    for (SparseEntry& e : layer) e.value = static_cast<float>(e.value);
  }
  return update;
}

}  // namespace scbf::wire
