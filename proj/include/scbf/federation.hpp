#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scbf/channel_selection.hpp"
#include "scbf/data.hpp"
#include "scbf/mlp.hpp"
#include "scbf/pruning.hpp"
#include "scbf/wire.hpp"

namespace scbf {

enum class Algorithm { kScbf, kScbfWithPruning, kFedAvg, kFedAvgWithPruning };

// How client/server messages move.
enum class TransportMode {
  kInProcess,       // direct calls, full double precision
  kInProcessCodec,  // every message round-trips through the wire codec in memory
  kLoopback,        // one TCP connection per client over 127.0.0.1
};

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& name);
bool is_pruning(Algorithm algorithm);
std::string to_string(TransportMode mode);
TransportMode parse_transport(const std::string& name);

struct FederationConfig {
  std::size_t num_clients = 5;
  std::size_t global_loops = 100;
  std::size_t epochs_per_loop = 5;
  std::size_t batch_size = 32;
  SelectionConfig selection;
  double download_rate = 1.0;
  double decay = 0.8;
  Algorithm algorithm = Algorithm::kScbf;
  // Present iff the algorithm prunes.
  std::optional<PruneConfig> prune;
  std::uint64_t seed = 42;
  // input_dim is taken from the data at experiment start.
  MlpConfig model;
  TransportMode transport = TransportMode::kInProcess;
  // Train clients on separate threads (in-process transports).
  bool parallel_clients = false;

  void validate() const;
};

struct ServerState {
  MlpModel model;
  std::size_t round_index = 0;
  std::size_t pruned_count = 0;
  std::size_t initial_neuron_total = 0;
};

struct ClientState {
  std::size_t index = 0;
  MlpModel model;
  Dataset shard;
  double last_upload_fraction = 0.0;
};

struct RoundReport {
  std::size_t round_index = 0;
  std::vector<double> upload_fractions;
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double wall_seconds = 0.0;
  std::size_t neurons_left = 0;

  double mean_upload_fraction() const;
};

struct ExperimentResult {
  std::vector<RoundReport> reports;
  double total_seconds = 0.0;
  ServerState server;
  std::vector<ClientState> clients;
};

std::uint64_t client_seed(std::uint64_t base, std::size_t client_index);

ServerState make_server(const FederationConfig& config, std::size_t input_dim);

// Clients start as copies of the server model with their own dropout/shuffle RNG.
std::vector<ClientState> make_clients(const ServerState& server, const PartitionedDataset& data,
                                      const FederationConfig& config);

// Overwrites a client's parameters with the server's. A rate below 1 overwrites a
// uniformly chosen subset of floor(rate * parameters) entries.
void download(ClientState& client, const wire::DenseParameters& server_params, double rate,
              std::uint64_t seed);

// Per-round accumulator A over weights: for each entry, in update order,
// A <- decay * A + value; then W <- W + A.
void server_apply(ServerState& server, const std::vector<SparseUpdate>& updates, double decay);

// W <- W + (1/K) sum_k delta_k over weights and biases.
void server_apply_average(ServerState& server, const std::vector<wire::DenseParameters>& deltas);

// One SCBF / SCBFwP global loop over the in-process transport.
RoundReport run_round_scbf(ServerState& server, std::vector<ClientState>& clients,
                           const PartitionedDataset& data, const FederationConfig& config);

// One FedAvg (optionally with pruning) global loop over the in-process transport.
RoundReport run_round_fedavg(ServerState& server, std::vector<ClientState>& clients,
                             const PartitionedDataset& data, const FederationConfig& config);

ExperimentResult run_experiment(const FederationConfig& config, const PartitionedDataset& data);

}  // namespace scbf
