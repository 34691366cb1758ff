/**
 * @file gnn.hpp
 * @brief Message-passing network over the complete antenna/user bipartite graph.
 *
 * Every layer updates edge features from the previous edge, antenna and user
 * features, averages edge features into per-antenna and per-user messages, and
 * updates antenna and user node features from their previous value and their
 * message. Activations are leaky ReLU. The output layer computes edges and
 * antenna nodes only; its antenna features are the raw logits, 2^b for the real
 * part followed by 2^b for the imaginary part.
 *
 * All features for a batch of N symbols over one channel are stored row-wise:
 * edge row (n*M + m)*K + k, antenna row n*M + m, user row n*K + k. Neighborhood
 * means sum the values in sorted order, so a result does not depend on the
 * order of antennas or users.
 */
#pragma once

#include "qprec/channel.hpp"
#include "qprec/quantizer.hpp"
#include "qprec/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qprec {

struct GnnConfig {
  int hidden_layers = 4;   // N_h
  int hidden_width = 128;  // d_h
  int bits = 1;            // DAC resolution b
  int antennas = 32;       // M the network was built for
  int users = 1;           // K the network was built for
  double leaky_slope = 0.01;

  int num_layers() const { return hidden_layers + 2; }
  int levels() const { return 1 << bits; }
  int output_width() const { return 2 << bits; }
  /// Feature width entering layer n (d_{n-1}) and leaving it (d_n).
  int in_width(int layer) const { return layer == 0 ? 2 : hidden_width; }
  int out_width(int layer) const { return layer == num_layers() - 1 ? output_width() : hidden_width; }
  bool is_output(int layer) const { return layer == num_layers() - 1; }
  void validate() const;
};

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class WeightFamily { kEdge, kBs, kUe, kSelfBs, kSelfUe, kNeighBs, kNeighUe };
inline constexpr std::array<WeightFamily, 7> kWeightFamilies = {
    WeightFamily::kEdge,   WeightFamily::kBs,      WeightFamily::kUe,     WeightFamily::kSelfBs,
    WeightFamily::kSelfUe, WeightFamily::kNeighBs, WeightFamily::kNeighUe};
std::string family_name(WeightFamily family);

/// One layer's matrices. The output layer has no user update, so its self_ue
/// and neigh_ue are empty.
template <typename T>
struct LayerWeights {
  RowMatrix<T> edge, bs, ue;        // d_n x d_{n-1}
  RowMatrix<T> self_bs, self_ue;    // d_n x d_{n-1}
  RowMatrix<T> neigh_bs, neigh_ue;  // d_n x d_n

  RowMatrix<T>& get(WeightFamily f);
  const RowMatrix<T>& get(WeightFamily f) const;
};

template <typename T>
struct BasicGnnWeights {
  std::vector<LayerWeights<T>> layers;

  static BasicGnnWeights zeros(const GnnConfig& config);

  template <typename U>
  BasicGnnWeights<U> cast() const {
    BasicGnnWeights<U> out;
    out.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (auto f : kWeightFamilies) out.layers[l].get(f) = layers[l].get(f).template cast<U>();
    }
    return out;
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  /// Checks every matrix against the shapes implied by config.
  bool matches(const GnnConfig& config) const;
};

using GnnWeights = BasicGnnWeights<float>;

/// Glorot-uniform initialization, +-sqrt(6 / (fan_in + fan_out)) per matrix.
GnnWeights init_weights(const GnnConfig& config, std::uint64_t seed);

/// Features of a batch of graphs that share one channel.
template <typename T>
struct GraphState {
  RowMatrix<T> edge;  // (N*M*K) x d
  RowMatrix<T> bs;    // (N*M) x d
  RowMatrix<T> ue;    // (N*K) x d
  int symbols = 0;
  int antennas = 0;
  int users = 0;
};

/// Layer-0 features: edges [Re h_mk, Im h_mk], antennas [0, 0], users [Re s_k, Im s_k].
/// symbols is N x K (rows are symbol vectors).
template <typename T>
GraphState<T> init_inputs(const ChannelMatrix& channel, const CMatrix& symbols);

/// Single-symbol convenience overload.
template <typename T>
GraphState<T> init_inputs(const ChannelMatrix& channel, const CVector& symbol);

/// Pre-activations and messages of one layer, kept for the reverse pass.
template <typename T>
struct LayerCache {
  RowMatrix<T> pre_edge, pre_bs, pre_ue;
  RowMatrix<T> msg_bs, msg_ue;  // per-antenna and per-user neighborhood means
};

/// Applies one layer. For the output layer the user features are not computed
/// and the antenna features are left un-activated (logits).
template <typename T>
GraphState<T> layer_forward(const GraphState<T>& state, const LayerWeights<T>& weights,
                            bool is_output, double leaky_slope, LayerCache<T>* cache = nullptr);

/// Everything the reverse pass needs: states[0] are the inputs, states[n+1] the
/// output of layer n.
template <typename T>
struct GnnTape {
  std::vector<GraphState<T>> states;
  std::vector<LayerCache<T>> caches;
};

/// Runs all layers; returns logits, (N*M) x 2^{b+1}.
template <typename T>
RowMatrix<T> forward_logits(const GraphState<T>& inputs, const BasicGnnWeights<T>& weights,
                            const GnnConfig& config, GnnTape<T>* tape = nullptr);

/// Accumulates dLoss/dW into grads given dLoss/dlogits.
template <typename T>
void backward(const GnnTape<T>& tape, const BasicGnnWeights<T>& weights, const GnnConfig& config,
              const RowMatrix<T>& d_logits, BasicGnnWeights<T>& grads);

/// Per-antenna probability vectors for the real and imaginary DAC (M x L each).
struct ProbOutput {
  RMatrix p_re;
  RMatrix p_im;
};

/// Softmax applied independently to each half of every antenna's logits.
std::vector<ProbOutput> probabilities(const RowMatrix<float>& logits, int symbols, int antennas,
                                      int levels);

ProbOutput forward(const ChannelMatrix& channel, const CVector& symbol, const GnnWeights& weights,
                   const GnnConfig& config);

/// y_m = l_i + j l_j with i, j the argmax of p_re, p_im (ties to the lowest index).
CVector infer(const ChannelMatrix& channel, const CVector& symbol, const GnnWeights& weights,
              const GnnConfig& config, const ScalarQuantizer& quantizer);

/// Batched inference: symbols N x K, result M x N (not power-normalized).
CMatrix infer_batch(const ChannelMatrix& channel, const CMatrix& symbols,
                    const GnnWeights& weights, const GnnConfig& config,
                    const ScalarQuantizer& quantizer);

/// Scales a batch of outputs (M x N) so that its mean per-symbol power is total_power.
CMatrix normalize_power(const CMatrix& outputs, double total_power);

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint32_t epoch = 0;  // epochs completed
  std::uint64_t step = 0;   // optimizer steps taken
  double best_val_rate = 0.0;
  double last_val_rate = 0.0;
};

/// Adam first/second moments and step count.
struct OptimizerState {
  GnnWeights first_moment;
  GnnWeights second_moment;
  std::uint64_t step = 0;
};

struct Checkpoint {
  GnnConfig config;
  GnnWeights weights;
  CheckpointMeta meta;
  std::optional<OptimizerState> optimizer;
};

class CheckpointFormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Layout documented in docs/checkpoint_format.md. Written to a temporary file
/// and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace qprec
