/**
 * @file harness.hpp
 * @brief Experiment configs, seeded sweeps and result files.
 *
 * A config is plain text, one `key = value` per line, `#` starts a comment,
 * lists are comma separated. Every result CSV starts with a `#` header block
 * (git describe, config hash, seed); the body below it depends only on the
 * config, the seed and the input files.
 */
#pragma once

#include "qprec/channel.hpp"
#include "qprec/energy.hpp"
#include "qprec/gnn.hpp"
#include "qprec/metrics.hpp"
#include "qprec/precoders.hpp"
#include "qprec/quantizer.hpp"
#include "qprec/trainer.hpp"

#include <cstdint>
#include <functional>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qprec {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class Scenario { kRateSweep, kRadiation, kNmseTable, kPower, kTrain };

/// Raw key/value pairs after strict validation against the scenario's key set.
class ExperimentConfig {
 public:
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  /// Builds from already split pairs (the CLI path); same validation as parse().
  static ExperimentConfig from_pairs(const std::map<std::string, std::string>& pairs);

  Scenario scenario() const { return scenario_; }
  const std::map<std::string, std::string>& pairs() const { return pairs_; }

  bool has(const std::string& key) const { return pairs_.count(key) != 0; }
  std::string str(const std::string& key) const;
  std::string str_or(const std::string& key, const std::string& fallback) const;
  long long integer(const std::string& key) const;
  long long integer_or(const std::string& key, long long fallback) const;
  double real(const std::string& key) const;
  double real_or(const std::string& key, double fallback) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::string> strings(const std::string& key) const;
  std::uint64_t seed() const;

  /// FNV-1a 64 over the sorted `key=value` lines.
  std::uint64_t hash() const;
  std::string hash_hex() const;
  std::string canonical() const;

 private:
  Scenario scenario_ = Scenario::kRateSweep;
  std::map<std::string, std::string> pairs_;
};

std::string scenario_name(Scenario s);

/// Bits value 0 stands for the unquantized (b = inf) baseline.
std::vector<int> parse_bits_list(const std::vector<std::string>& items);

std::string git_describe();

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

std::string format_number(double v);

/// Header block followed by the CSV body.
std::string render_csv(const ResultTable& table, const ExperimentConfig& config);
std::string csv_body(const ResultTable& table);

void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// JSON run manifest: command, git describe, config hash, seed, config, outputs.
std::string run_manifest(const std::string& command, const ExperimentConfig& config,
                         const std::vector<std::filesystem::path>& outputs,
                         std::size_t rows);
/// Same for commands without a scenario (dataset and quantizer generation).
std::string run_manifest(const std::string& command,
                         const std::map<std::string, std::string>& parameters, std::uint64_t seed,
                         const std::vector<std::filesystem::path>& outputs);

/// FNV-1a 64 of arbitrary text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Test channels for a scenario: loaded from `channels` when set, else generated
/// from `seed` (`n_test_channels` draws, model `channel_model`).
ChannelDataset test_channels(const ExperimentConfig& config);

/// Quantizer for b >= 1 (from `quantizer` file when set for a single b, else Lloyd-Max).
ScalarQuantizer design_for(int bits, const ExperimentConfig& config);

/// Calls fn(i) for i in [0, count) on `threads` workers; fn writes into slot i only.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn);

ResultTable run_rate_sweep(const ExperimentConfig& config);
ResultTable run_radiation(const ExperimentConfig& config);
ResultTable run_nmse_table(const ExperimentConfig& config);
ResultTable run_power(const ExperimentConfig& config);
/// Trains and writes `checkpoint` (plus `best_checkpoint`/`log` when set); returns the log.
ResultTable run_train(const ExperimentConfig& config);

ResultTable run_experiment(const ExperimentConfig& config);

/// Runs the experiment, writes `out` (CSV) and `<out>.manifest.json`; returns the CSV text.
std::string run_and_write(const std::string& command, const ExperimentConfig& config);

}  // namespace qprec
