#include "scbf/federation.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <exception>
#include <memory>
#include <numeric>
#include <random>
#include <thread>
#include <utility>

#include "scbf/errors.hpp"
#include "scbf/metrics.hpp"
#include "scbf/transport.hpp"

namespace scbf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t download_seed(std::uint64_t base, std::size_t round, std::size_t client) {
  return splitmix64(splitmix64(base ^ 0xD0D0ull) + round * 1000003ull + client);
}

bool uses_selection(Algorithm a) {
  return a == Algorithm::kScbf || a == Algorithm::kScbfWithPruning;
}

// What one client sends back in a round.
struct ClientUpload {
  SparseUpdate sparse;                            // SCBF
  std::optional<wire::DenseParameters> dense;     // FedAvg
  double upload_fraction = 0.0;
};

ClientUpload client_round(ClientState& client, const wire::DenseParameters& server_params,
                          const FederationConfig& config, bool selective, std::size_t round) {
  download(client, server_params, config.download_rate,
           download_seed(config.seed, round, client.index));
  GradientSet delta = train_local(client.model, client.shard, config.epochs_per_loop,
                                  config.batch_size);
  ClientUpload upload;
  if (selective) {
    upload.sparse = process_gradients(delta, config.selection);
    upload.upload_fraction = upload_fraction(upload.sparse);
  } else {
    upload.dense = wire::parameters_of(delta);
    upload.upload_fraction = 1.0;
  }
  client.last_upload_fraction = upload.upload_fraction;
  return upload;
}

std::vector<std::pair<std::size_t, std::size_t>> weight_shapes(const MlpModel& model) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  for (const auto& w : model.weights()) shapes.emplace_back(w.rows(), w.cols());
  return shapes;
}

void check_dense_shapes(const MlpModel& model, const wire::DenseParameters& params) {
  if (params.weights.size() != model.num_layers() || params.biases.size() != model.num_layers()) {
    throw ProtocolError("dense parameters have " + std::to_string(params.weights.size()) +
                        " layers, model has " + std::to_string(model.num_layers()));
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    if (!params.weights[l].same_shape(model.weights()[l]) ||
        params.biases[l].size() != model.biases()[l].size()) {
      throw ProtocolError("dense parameters: layer " + std::to_string(l + 1) + " is " +
                          shape_string(params.weights[l]) + ", model layer is " +
                          shape_string(model.weights()[l]));
    }
  }
}

[[noreturn]] void rethrow_for_client(std::size_t client, const std::exception& e) {
  throw ProtocolError("client " + std::to_string(client) + ": " + e.what());
}

// Moves one round's messages between the server and its clients.
class RoundTransport {
 public:
  virtual ~RoundTransport() = default;
  // Sends the server parameters to every client and returns their uploads in
  // client-index order.
  virtual std::vector<ClientUpload> exchange(const ServerState& server, bool selective,
                                             std::size_t round) = 0;
  virtual void broadcast_prune(const PruneDirective& directive) = 0;
  virtual void end_round() {}
};

class InProcessTransport : public RoundTransport {
 public:
  InProcessTransport(std::vector<ClientState>& clients, const FederationConfig& config,
                     bool through_codec)
      : clients_(clients), config_(config), through_codec_(through_codec) {}

  std::vector<ClientUpload> exchange(const ServerState& server, bool selective,
                                     std::size_t round) override {
    wire::DenseParameters params = wire::parameters_of(server.model);
    if (through_codec_) params = round_trip_weights(params);

    std::vector<ClientUpload> uploads(clients_.size());
    const auto work = [&](std::size_t k) {
      uploads[k] = client_round(clients_[k], params, config_, selective, round);
    };
    if (config_.parallel_clients && clients_.size() > 1) {
      std::vector<std::exception_ptr> errors(clients_.size());
      std::vector<std::thread> threads;
      for (std::size_t k = 0; k < clients_.size(); ++k) {
        threads.emplace_back([&, k] {
          try {
            work(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    } else {
      for (std::size_t k = 0; k < clients_.size(); ++k) work(k);
    }

    if (through_codec_) {
      const auto shapes = weight_shapes(server.model);
      for (std::size_t k = 0; k < uploads.size(); ++k) {
        try {
          if (uploads[k].dense) {
            uploads[k].dense = round_trip_weights(*uploads[k].dense);
          } else {
            auto bytes = wire::encode_frame(wire::encode_client_update(uploads[k].sparse));
            auto decoded = wire::decode_frame(bytes);
            uploads[k].sparse = wire::decode_client_update(decoded->first.payload, shapes);
          }
        } catch (const Error& e) {
          rethrow_for_client(k, e);
        }
      }
    }
    return uploads;
  }

  void broadcast_prune(const PruneDirective& directive) override {
    PruneDirective sent = directive;
    if (through_codec_) {
      auto bytes = wire::encode_frame(wire::encode_prune_directive(directive));
      sent = wire::decode_prune_directive(wire::decode_frame(bytes)->first.payload);
    }
    for (auto& client : clients_) apply_prune(client.model, sent);
  }

 private:
  static wire::DenseParameters round_trip_weights(const wire::DenseParameters& params) {
    auto bytes = wire::encode_frame(wire::encode_server_weights(params));
    return wire::decode_server_weights(wire::decode_frame(bytes)->first.payload);
  }

  std::vector<ClientState>& clients_;
  const FederationConfig& config_;
  bool through_codec_;
};

// Each client runs on its own thread and talks to the server over TCP. Frames
// per round: server sends ServerWeights; client answers with ClientUpdate (or a
// dense ServerWeights-typed delta for FedAvg); server may send PruneDirective;
// server closes the round with RoundAck.
class LoopbackTransport : public RoundTransport {
 public:
  LoopbackTransport(std::vector<ClientState>& clients, const FederationConfig& config)
      : clients_(clients), config_(config), errors_(clients.size()) {
    for (std::size_t k = 0; k < clients_.size(); ++k) {
      const std::uint16_t port = listener_.port();
      threads_.emplace_back([this, k, port] { client_loop(k, port); });
      server_side_.push_back(listener_.accept());
    }
  }

  ~LoopbackTransport() override { shutdown(); }

  void shutdown() {
    for (auto& c : server_side_) c.close();
    for (auto& t : threads_) {
      if (t.joinable()) t.join();
    }
  }

  std::vector<ClientUpload> exchange(const ServerState& server, bool selective,
                                     std::size_t round) override {
    selective_ = selective;
    round_ = round;
    const wire::Frame weights = wire::encode_server_weights(wire::parameters_of(server.model));
    for (auto& conn : server_side_) conn.send(weights);

    const auto shapes = weight_shapes(server.model);
    std::vector<ClientUpload> uploads(clients_.size());
    for (std::size_t k = 0; k < clients_.size(); ++k) {
      try {
        wire::Frame frame = server_side_[k].receive();
        if (selective && frame.type == wire::MessageType::kClientUpdate) {
          uploads[k].sparse = wire::decode_client_update(frame.payload, shapes);
          uploads[k].upload_fraction = upload_fraction(uploads[k].sparse);
        } else if (!selective && frame.type == wire::MessageType::kServerWeights) {
          uploads[k].dense = wire::decode_server_weights(frame.payload);
          uploads[k].upload_fraction = 1.0;
        } else {
          throw ProtocolError("unexpected message type " +
                              std::to_string(static_cast<int>(frame.type)));
        }
      } catch (const Error& e) {
        rethrow_client_error(k, e);
      }
    }
    return uploads;
  }

  void broadcast_prune(const PruneDirective& directive) override {
    const wire::Frame frame = wire::encode_prune_directive(directive);
    for (auto& conn : server_side_) conn.send(frame);
  }

  void end_round() override {
    const wire::Frame ack = wire::encode_round_ack();
    for (std::size_t k = 0; k < server_side_.size(); ++k) {
      server_side_[k].send(ack);
      try {
        const wire::Frame reply = server_side_[k].receive();
        if (reply.type != wire::MessageType::kRoundAck) {
          throw ProtocolError("expected RoundAck");
        }
      } catch (const Error& e) {
        rethrow_client_error(k, e);
      }
    }
  }

 private:
  [[noreturn]] void rethrow_client_error(std::size_t k, const std::exception& e) {
    // A failure inside the client thread is the more useful message.
    server_side_[k].close();
    if (threads_[k].joinable()) threads_[k].join();
    if (errors_[k]) {
      try {
        std::rethrow_exception(errors_[k]);
      } catch (const std::exception& inner) {
        rethrow_for_client(k, inner);
      }
    }
    rethrow_for_client(k, e);
  }

  void client_loop(std::size_t k, std::uint16_t port) {
    ClientState& client = clients_[k];
    try {
      Connection conn = connect_loopback(port);
      for (;;) {
        wire::Frame frame;
        try {
          frame = conn.receive();
        } catch (const ProtocolError&) {
          return;  // server closed the connection
        }
        switch (frame.type) {
          case wire::MessageType::kServerWeights: {
            const wire::DenseParameters params = wire::decode_server_weights(frame.payload);
            ClientUpload upload = client_round(client, params, config_, selective_, round_);
            if (upload.dense) {
              conn.send(wire::encode_server_weights(*upload.dense));
            } else {
              conn.send(wire::encode_client_update(upload.sparse));
            }
            break;
          }
          case wire::MessageType::kPruneDirective:
            apply_prune(client.model, wire::decode_prune_directive(frame.payload));
            break;
          case wire::MessageType::kRoundAck:
            conn.send(wire::encode_round_ack());
            break;
          case wire::MessageType::kClientUpdate:
            throw ProtocolError("client received a ClientUpdate frame");
        }
      }
    } catch (...) {
      errors_[k] = std::current_exception();
    }
  }

  std::vector<ClientState>& clients_;
  const FederationConfig& config_;
  std::vector<std::exception_ptr> errors_;
  // Set by the server before it sends ServerWeights.
  std::atomic<bool> selective_ = true;
  std::atomic<std::size_t> round_ = 0;
  LoopbackListener listener_;
  std::vector<std::thread> threads_;
  std::vector<Connection> server_side_;
};

void maybe_prune(ServerState& server, const PartitionedDataset& data,
                 const FederationConfig& config, RoundTransport& transport) {
  if (!config.prune) return;
  const PruneConfig& prune = *config.prune;
  const double pruned_fraction = static_cast<double>(server.pruned_count) /
                                 static_cast<double>(server.initial_neuron_total);
  if (pruned_fraction >= prune.total_fraction) return;
  const ApozReport report = compute_apoz(server.model, data.validation);
  const PruneDirective directive =
      plan_prune(report, prune, server.pruned_count, server.initial_neuron_total);
  if (directive.empty()) return;
  apply_prune(server.model, directive);
  server.pruned_count += directive.total();
  transport.broadcast_prune(directive);
}

RoundReport run_round(ServerState& server, const PartitionedDataset& data,
                      const FederationConfig& config, RoundTransport& transport,
                      bool selective) {
  Stopwatch watch;
  RoundReport report;
  report.round_index = server.round_index;

  std::vector<ClientUpload> uploads = transport.exchange(server, selective, server.round_index);
  for (const auto& u : uploads) report.upload_fractions.push_back(u.upload_fraction);

  if (selective) {
    std::vector<SparseUpdate> updates;
    updates.reserve(uploads.size());
    for (auto& u : uploads) updates.push_back(std::move(u.sparse));
    server_apply(server, updates, config.decay);
  } else {
    std::vector<wire::DenseParameters> deltas;
    deltas.reserve(uploads.size());
    for (auto& u : uploads) deltas.push_back(std::move(*u.dense));
    server_apply_average(server, deltas);
  }

  maybe_prune(server, data, config, transport);
  transport.end_round();

  const std::vector<double> scores = predict(server.model, data.test.features);
  report.auc_roc = auc_roc(scores, data.test.labels);
  report.auc_pr = auc_pr(scores, data.test.labels);
  report.neurons_left = server.model.hidden_neuron_count();
  ++server.round_index;
  report.wall_seconds = watch.seconds();
  return report;
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kScbf: return "scbf";
    case Algorithm::kScbfWithPruning: return "scbfwp";
    case Algorithm::kFedAvg: return "fedavg";
    case Algorithm::kFedAvgWithPruning: return "fedavgwp";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "scbf") return Algorithm::kScbf;
  if (name == "scbfwp") return Algorithm::kScbfWithPruning;
  if (name == "fedavg") return Algorithm::kFedAvg;
  if (name == "fedavgwp") return Algorithm::kFedAvgWithPruning;
  throw ConfigError("unknown algorithm '" + name + "' (expected scbf, scbfwp, fedavg, fedavgwp)");
}

bool is_pruning(Algorithm algorithm) {
  return algorithm == Algorithm::kScbfWithPruning || algorithm == Algorithm::kFedAvgWithPruning;
}

std::string to_string(TransportMode mode) {
  switch (mode) {
    case TransportMode::kInProcess: return "inprocess";
    case TransportMode::kInProcessCodec: return "codec";
    case TransportMode::kLoopback: return "loopback";
  }
  return "unknown";
}

TransportMode parse_transport(const std::string& name) {
  if (name == "inprocess") return TransportMode::kInProcess;
  if (name == "codec") return TransportMode::kInProcessCodec;
  if (name == "loopback") return TransportMode::kLoopback;
  throw ConfigError("unknown transport '" + name + "' (expected inprocess, codec, loopback)");
}

void FederationConfig::validate() const {
  if (num_clients == 0) throw ConfigError("num_clients must be at least 1");
  if (epochs_per_loop == 0) throw ConfigError("epochs_per_loop must be at least 1");
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("decay must be in (0, 1]");
  if (!(download_rate > 0.0 && download_rate <= 1.0)) {
    throw ConfigError("download_rate must be in (0, 1]");
  }
  selection.validate();
  if (is_pruning(algorithm) != prune.has_value()) {
    throw ConfigError("prune settings must be present exactly when the algorithm prunes");
  }
  if (prune) prune->validate();
}

double RoundReport::mean_upload_fraction() const {
  if (upload_fractions.empty()) return 0.0;
  return std::accumulate(upload_fractions.begin(), upload_fractions.end(), 0.0) /
         static_cast<double>(upload_fractions.size());
}

std::uint64_t client_seed(std::uint64_t base, std::size_t client_index) {
  return splitmix64(base + 0x632BE59BD9B4E019ull * (client_index + 1));
}

ServerState make_server(const FederationConfig& config, std::size_t input_dim) {
  MlpConfig model_config = config.model;
  model_config.input_dim = input_dim;
  model_config.seed = config.seed;
  MlpModel model(std::move(model_config));
  const std::size_t hidden = model.hidden_neuron_count();
  return ServerState{std::move(model), 0, 0, hidden};
}

std::vector<ClientState> make_clients(const ServerState& server, const PartitionedDataset& data,
                                      const FederationConfig& config) {
  if (data.client_shards.size() != config.num_clients) {
    throw ConfigError("data has " + std::to_string(data.client_shards.size()) +
                      " shards for " + std::to_string(config.num_clients) + " clients");
  }
  std::vector<ClientState> clients;
  clients.reserve(config.num_clients);
  for (std::size_t k = 0; k < config.num_clients; ++k) {
    MlpModel model = server.model;
    model.reseed(client_seed(config.seed, k));
    clients.push_back(ClientState{k, std::move(model), data.client_shards[k], 0.0});
  }
  return clients;
}

void download(ClientState& client, const wire::DenseParameters& server_params, double rate,
              std::uint64_t seed) {
  MlpModel& model = client.model;
  check_dense_shapes(model, server_params);
  if (rate >= 1.0) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      model.weight(l) = server_params.weights[l];
      model.bias(l) = server_params.biases[l];
    }
    return;
  }
  // Flat parameter order: each layer's weights, then its biases.
  std::size_t total = 0;
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    total += model.weights()[l].size() + model.biases()[l].size();
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto take = static_cast<std::size_t>(std::floor(rate * static_cast<double>(total)));
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t flat = order[i];
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
      const std::size_t wsize = model.weights()[l].size();
      const std::size_t bsize = model.biases()[l].size();
      if (flat < wsize) {
        model.weight(l).data()[flat] = server_params.weights[l].data()[flat];
        break;
      }
      flat -= wsize;
      if (flat < bsize) {
        model.bias(l)[flat] = server_params.biases[l][flat];
        break;
      }
      flat -= bsize;
    }
  }
}

void server_apply(ServerState& server, const std::vector<SparseUpdate>& updates, double decay) {
  MlpModel& model = server.model;
  const auto shapes = weight_shapes(model);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    if (updates[k].source_shapes != shapes) {
      throw ProtocolError("client " + std::to_string(k) +
                          ": update shapes do not match the server model");
    }
    try {
      updates[k].validate();
    } catch (const ShapeError& e) {
      rethrow_for_client(k, e);
    }
  }

  std::vector<DenseMatrix> acc;
  for (const auto& w : model.weights()) acc.emplace_back(w.rows(), w.cols());
  for (const SparseUpdate& update : updates) {
    for (std::size_t l = 0; l < acc.size(); ++l) {
      for (const SparseEntry& e : update.layer_entries[l]) {
        double& a = acc[l](e.row, e.col);
        a = decay * a + e.value;
      }
    }
  }
  for (std::size_t l = 0; l < acc.size(); ++l) {
    auto& w = model.weight(l).data();
    const auto& a = acc[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += a[i];
  }
}

void server_apply_average(ServerState& server, const std::vector<wire::DenseParameters>& deltas) {
  if (deltas.empty()) return;
  MlpModel& model = server.model;
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    try {
      check_dense_shapes(model, deltas[k]);
    } catch (const ProtocolError& e) {
      rethrow_for_client(k, e);
    }
  }
  const double scale = 1.0 / static_cast<double>(deltas.size());
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    std::vector<double> wsum(model.weights()[l].size(), 0.0);
    std::vector<double> bsum(model.biases()[l].size(), 0.0);
    for (const auto& d : deltas) {
      for (std::size_t i = 0; i < wsum.size(); ++i) wsum[i] += d.weights[l].data()[i];
      for (std::size_t i = 0; i < bsum.size(); ++i) bsum[i] += d.biases[l][i];
    }
    auto& w = model.weight(l).data();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += wsum[i] * scale;
    auto& b = model.bias(l);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += bsum[i] * scale;
  }
}

RoundReport run_round_scbf(ServerState& server, std::vector<ClientState>& clients,
                           const PartitionedDataset& data, const FederationConfig& config) {
  InProcessTransport transport(clients, config, false);
  return run_round(server, data, config, transport, true);
}

RoundReport run_round_fedavg(ServerState& server, std::vector<ClientState>& clients,
                             const PartitionedDataset& data, const FederationConfig& config) {
  InProcessTransport transport(clients, config, false);
  return run_round(server, data, config, transport, false);
}

ExperimentResult run_experiment(const FederationConfig& config, const PartitionedDataset& data) {
  config.validate();
  if (data.client_shards.empty()) throw ConfigError("no client shards");
  Stopwatch watch;
  ExperimentResult result{{}, 0.0, make_server(config, data.client_shards.front().num_features()),
                          {}};
  result.clients = make_clients(result.server, data, config);

  const bool selective = uses_selection(config.algorithm);
  std::unique_ptr<RoundTransport> transport;
  if (config.transport == TransportMode::kLoopback) {
    transport = std::make_unique<LoopbackTransport>(result.clients, config);
  } else {
    transport = std::make_unique<InProcessTransport>(
        result.clients, config, config.transport == TransportMode::kInProcessCodec);
  }
  for (std::size_t round = 0; round < config.global_loops; ++round) {
    result.reports.push_back(run_round(result.server, data, config, *transport, selective));
  }
  transport.reset();
  result.total_seconds = watch.seconds();
  return result;
}

}  // namespace scbf
