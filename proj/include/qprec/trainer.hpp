/**
 * @file trainer.hpp
 * @brief Self-supervised training of the GNN precoder.
 *
 * Per channel the network runs on N_s symbol vectors. Every antenna's real and
 * imaginary logits are perturbed with Gumbel noise; the forward value picks
 * the level at the argmax (a hard sample) while the reverse pass differentiates
 * the tempered softmax of the same perturbed logits (straight-through). The
 * selected outputs are scaled to mean power P_T over the batch and the loss is
 * the negative empirical sum rate of the Bussgang decomposition w.r.t. the
 * symbols.
 */
#pragma once

#include "qprec/channel.hpp"
#include "qprec/gnn.hpp"
#include "qprec/metrics.hpp"
#include "qprec/quantizer.hpp"
#include "qprec/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace qprec {

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double learning_rate = 5e-3;
  int batch_channels = 128;
  int symbols_per_channel = 125;  // N_s
  double temperature = 1.0;       // tau
  int epochs = 20;
  double total_power = 0.0;       // P_T; 0 selects P_T = M
  double snr_train_db = 20.0;
  std::uint64_t seed = 0;
  AdamParams adam;
  int val_symbols = 1000;
  int checkpoint_every_steps = 0;  // 0 = only at epoch ends

  double power_for(int antennas) const { return total_power > 0.0 ? total_power : antennas; }
  void validate(int users) const;
};

/// One standard Gumbel value per logit of one symbol: index ((m*2 + part)*L + i).
struct GumbelDraw {
  std::vector<double> noise;
  int antennas = 0;
  int levels = 0;

  double at(int m, int part, int i) const {
    return noise[static_cast<std::size_t>((m * 2 + part) * levels + i)];
  }
  std::span<const double> slice(int m, int part) const {
    return std::span<const double>(noise).subspan(static_cast<std::size_t>((m * 2 + part) * levels),
                                                  static_cast<std::size_t>(levels));
  }
};

inline constexpr double kGumbelUniformClamp = 1e-12;

/// -ln(-ln(u)) with u clamped to [1e-12, 1 - 1e-12].
double gumbel_from_uniform(double u);

GumbelDraw gumbel_sample(int antennas, int levels, Rng& rng);
GumbelDraw gumbel_sample(int antennas, int levels, std::uint64_t seed);

/// Noise for every symbol of a training batch.
std::vector<GumbelDraw> gumbel_batch(int symbols, int antennas, int levels, std::uint64_t seed);

struct GumbelSelection {
  int hard = 0;              // argmax(logits + g), ties to the lowest index
  std::vector<double> soft;  // softmax((logits + g) / tau)
};

GumbelSelection st_gumbel_softmax(std::span<const double> logits, std::span<const double> noise,
                                  double temperature);

enum class SelectionMode {
  kStraightThrough,  // values from hard samples, gradients through the soft relaxation
  kSoft,             // values and gradients from the soft relaxation
};

template <typename T>
struct TrainForward {
  CMatrix outputs;  // Y_fwd = alpha * selected, M x N
  CMatrix selected;  // selected levels before power scaling
  double alpha = 0.0;
  GnnTape<T> tape;
  std::vector<double> soft;         // index (((n*M + m)*2 + part)*L + i)
  std::vector<double> soft_value;   // sum_i soft_i l_i, index ((n*M + m)*2 + part)
  std::vector<int> hard;            // index ((n*M + m)*2 + part)
};

template <typename T>
TrainForward<T> forward_train(const ChannelMatrix& channel, const SymbolBatch& symbols,
                              const BasicGnnWeights<T>& weights, const GnnConfig& config,
                              const ScalarQuantizer& quantizer,
                              std::span<const GumbelDraw> noise, double temperature,
                              double total_power, SelectionMode mode);

/// Sum rate of (S, Y) and its gradient w.r.t. Y in the convention
/// dR/dRe(y) + j dR/dIm(y). The rate equals sum_rate(channel,
/// estimate_bussgang(S, Y, estimator), noise_variance).
struct RateGradient {
  double rate = 0.0;
  CMatrix d_outputs;
};

RateGradient sum_rate_gradient(const ChannelMatrix& channel, const SymbolBatch& symbols,
                               const CMatrix& outputs, double noise_variance,
                               GainEstimator estimator = GainEstimator::kSampleCovariance);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;  // J = -R_sum
  double rate = 0.0;
  BasicGnnWeights<T> grads;
};

/// J = -R_sum(Y_fwd) at the training SNR and its gradient w.r.t. every weight.
template <typename T>
LossAndGrad<T> loss_and_grad(const ChannelMatrix& channel, const SymbolBatch& symbols,
                             const BasicGnnWeights<T>& weights, const GnnConfig& config,
                             const TrainConfig& train, const ScalarQuantizer& quantizer,
                             std::span<const GumbelDraw> noise,
                             SelectionMode mode = SelectionMode::kStraightThrough);

/// Adam with bias correction; moments are stored in float like the weights.
class AdamOptimizer {
 public:
  AdamOptimizer(const GnnConfig& config, AdamParams params);
  explicit AdamOptimizer(OptimizerState state, AdamParams params);

  void step(GnnWeights& weights, const GnnWeights& grads, double learning_rate);
  const OptimizerState& state() const { return state_; }

 private:
  AdamParams params_;
  OptimizerState state_;
};

struct TrainLogRow {
  int epoch = 0;
  std::uint64_t step = 0;
  double loss = 0.0;
  double val_rate = 0.0;  // NaN on rows without validation
  double wall_ms = 0.0;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;       // latest state
  std::optional<std::filesystem::path> best_checkpoint_path;  // best validation rate
  std::optional<std::filesystem::path> log_path;              // CSV log
  std::optional<Checkpoint> resume;
  std::uint64_t max_steps = 0;  // stop after this many optimizer steps in total (0 = no limit)
  std::function<void(const TrainLogRow&)> on_log;
};

struct TrainResult {
  Checkpoint last;
  Checkpoint best;
  std::vector<TrainLogRow> log;
};

/// Mean validation sum rate of argmax inference (outputs power-normalized per channel).
double validation_rate(const ChannelDataset& channels, const GnnWeights& weights,
                       const GnnConfig& config, const ScalarQuantizer& quantizer,
                       double total_power, double snr_db, int symbols, std::uint64_t seed);

/// Symbols attached to training channel `index`; fixed across epochs.
SymbolBatch training_symbols(const TrainConfig& train, int users, std::uint64_t index);

TrainResult train(const ChannelDataset& train_set, const ChannelDataset& val_set,
                  const GnnConfig& config, const TrainConfig& train_config,
                  const ScalarQuantizer& quantizer, const TrainOptions& options = {});

}  // namespace qprec
