#include "qprec/harness.hpp"

#include "qprec/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <mutex>
#include <thread>

#ifndef QPREC_GIT_DESCRIBE
#define QPREC_GIT_DESCRIBE "unknown"
#endif

namespace qprec {

namespace {

const std::vector<std::string> kCommonKeys = {"scenario", "seed", "out", "threads"};

struct KeySet {
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

KeySet keys_for(Scenario s) {
  switch (s) {
    case Scenario::kRateSweep:
      return {{"antennas", "users", "precoder", "snr_db"},
              {"bits", "n_test_channels", "channels", "channel_model", "symbols", "total_power",
               "checkpoint", "quantizer", "quantizer_seed"}};
    case Scenario::kRadiation:
      return {{"antennas", "user_angles_deg", "precoder"},
              {"bits", "symbols", "angle_step_deg", "total_power", "checkpoint", "quantizer",
               "quantizer_seed"}};
    case Scenario::kNmseTable:
      return {{"antennas", "users", "precoder"},
              {"bits", "n_test_channels", "channels", "channel_model", "symbols", "total_power",
               "checkpoint", "quantizer_seed"}};
    case Scenario::kPower:
      return {{"dac_mode", "bandwidth_hz", "series", "antennas", "users"},
              {"nyquist_zone", "carrier_hz"}};
    case Scenario::kTrain:
      return {{"antennas", "users", "bits", "hidden_width", "hidden_layers", "epochs", "checkpoint"},
              {"n_train_channels", "n_val_channels", "train_channels", "val_channels",
               "channel_model", "batch_channels", "learning_rate", "temperature", "train_symbols",
               "snr_train_db", "val_symbols", "total_power", "best_checkpoint", "log",
               "quantizer_seed", "max_steps", "resume", "checkpoint_every_steps"}};
  }
  return {};
}

Scenario scenario_from(const std::string& name) {
  if (name == "rate_sweep") return Scenario::kRateSweep;
  if (name == "radiation") return Scenario::kRadiation;
  if (name == "nmse_table") return Scenario::kNmseTable;
  if (name == "power") return Scenario::kPower;
  if (name == "train") return Scenario::kTrain;
  throw ConfigError("unknown scenario '" + name +
                    "' (expected rate_sweep, radiation, nmse_table, power or train)");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double parse_double(const std::string& key, const std::string& text) {
  if (text == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a number");
  }
}

long long parse_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("key '" + key + "': '" + text + "' is not an integer");
  }
}

ChannelModel channel_model_of(const ExperimentConfig& c) {
  const auto m = c.str_or("channel_model", "rayleigh");
  if (m == "rayleigh") return ChannelModel::kRayleigh;
  if (m == "los") return ChannelModel::kLosUla;
  throw ConfigError("channel_model must be rayleigh or los, got '" + m + "'");
}

std::string bits_label(int bits) { return bits == 0 ? "inf" : std::to_string(bits); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Checkpoint checkpoint_for(const std::filesystem::path& path, int antennas, int users) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint not found: " + path.string());
  auto ckpt = load_checkpoint(path);
  if (ckpt.config.antennas != antennas || ckpt.config.users != users) {
    throw ConfigError("checkpoint " + path.string() + " was trained for M=" +
                      std::to_string(ckpt.config.antennas) + ", K=" +
                      std::to_string(ckpt.config.users) + " but the experiment uses M=" +
                      std::to_string(antennas) + ", K=" + std::to_string(users));
  }
  return ckpt;
}

/// Transmit signal of one precoder for one channel and symbol batch.
struct Transmitter {
  std::string precoder;
  int bits = 0;
  std::optional<ScalarQuantizer> quantizer;
  std::optional<Checkpoint> checkpoint;
  double total_power = 0.0;

  CMatrix transmit(const ChannelMatrix& h, const SymbolBatch& s) const {
    if (precoder == "gnn") {
      return normalize_power(infer_batch(h, s.symbols, checkpoint->weights, checkpoint->config,
                                         *quantizer),
                             total_power);
    }
    const auto w = linear_precoder(precoder == "zf" ? LinearPrecoder::kZf : LinearPrecoder::kMrt, h,
                                   total_power);
    return linear_quantized_tx(w, quantizer ? &*quantizer : nullptr, s).outputs;
  }
};

void check_precoder(const std::string& p) {
  if (p != "mrt" && p != "zf" && p != "gnn") {
    throw ConfigError("precoder must be mrt, zf or gnn, got '" + p + "'");
  }
}

std::vector<Transmitter> transmitters(const ExperimentConfig& c, const std::string& precoder,
                                      int antennas, int users) {
  check_precoder(precoder);
  const double power = c.real_or("total_power", antennas);
  std::vector<Transmitter> out;
  if (precoder == "gnn") {
    if (!c.has("checkpoint")) throw ConfigError("precoder gnn needs key 'checkpoint'");
    for (const auto& path : c.strings("checkpoint")) {
      Transmitter t;
      t.precoder = precoder;
      t.checkpoint = checkpoint_for(path, antennas, users);
      t.bits = t.checkpoint->config.bits;
      t.quantizer = design_for(t.bits, c);
      t.total_power = power;
      out.push_back(std::move(t));
    }
    if (c.has("bits")) {
      const auto bits = parse_bits_list(c.strings("bits"));
      for (const auto& t : out) {
        if (std::find(bits.begin(), bits.end(), t.bits) == bits.end()) {
          throw ConfigError("checkpoint resolution b=" + std::to_string(t.bits) +
                            " is not in the requested bits list");
        }
      }
    }
    return out;
  }
  if (!c.has("bits")) throw ConfigError("precoder " + precoder + " needs key 'bits'");
  for (int b : parse_bits_list(c.strings("bits"))) {
    Transmitter t;
    t.precoder = precoder;
    t.bits = b;
    if (b > 0) t.quantizer = design_for(b, c);
    t.total_power = power;
    out.push_back(std::move(t));
  }
  return out;
}

int users_of(const ExperimentConfig& c) { return static_cast<int>(c.integer("users")); }
int antennas_of(const ExperimentConfig& c) { return static_cast<int>(c.integer("antennas")); }
int threads_of(const ExperimentConfig& c) {
  return static_cast<int>(std::max<long long>(1, c.integer_or("threads", 1)));
}

std::uint64_t symbol_seed(const ExperimentConfig& c, std::size_t index) {
  return sub_seed(c.seed(), Stream::kSymbol, index);
}

}  // namespace

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kRateSweep: return "rate_sweep";
    case Scenario::kRadiation: return "radiation";
    case Scenario::kNmseTable: return "nmse_table";
    case Scenario::kPower: return "power";
    case Scenario::kTrain: return "train";
  }
  return "?";
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  std::map<std::string, std::string> pairs;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    if (!pairs.emplace(key, value).second) {
      throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
    }
  }
  return from_pairs(pairs);
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

ExperimentConfig ExperimentConfig::from_pairs(const std::map<std::string, std::string>& pairs) {
  ExperimentConfig c;
  const auto it = pairs.find("scenario");
  if (it == pairs.end()) throw ConfigError("missing required keys: scenario");
  c.scenario_ = scenario_from(it->second);
  const auto keys = keys_for(c.scenario_);
  std::set<std::string> allowed(kCommonKeys.begin(), kCommonKeys.end());
  allowed.insert(keys.required.begin(), keys.required.end());
  allowed.insert(keys.optional.begin(), keys.optional.end());
  for (const auto& [k, v] : pairs) {
    if (!allowed.count(k)) {
      throw ConfigError("unknown key '" + k + "' for scenario " + it->second);
    }
  }
  std::vector<std::string> missing;
  std::vector<std::string> required = keys.required;
  required.push_back("seed");
  for (const auto& k : required) {
    if (!pairs.count(k)) missing.push_back(k);
  }
  if (!missing.empty()) {
    std::string msg = "missing required keys:";
    for (const auto& k : missing) msg += " " + k;
    throw ConfigError(msg);
  }
  c.pairs_ = pairs;
  return c;
}

std::string ExperimentConfig::str(const std::string& key) const {
  const auto it = pairs_.find(key);
  if (it == pairs_.end()) throw ConfigError("missing key '" + key + "'");
  return it->second;
}

std::string ExperimentConfig::str_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? str(key) : fallback;
}

long long ExperimentConfig::integer(const std::string& key) const {
  return parse_integer(key, str(key));
}

long long ExperimentConfig::integer_or(const std::string& key, long long fallback) const {
  return has(key) ? integer(key) : fallback;
}

double ExperimentConfig::real(const std::string& key) const { return parse_double(key, str(key)); }

double ExperimentConfig::real_or(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}

std::vector<double> ExperimentConfig::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : strings(key)) {
    // start:step:count expands to an arithmetic sequence
    const auto a = item.find(':');
    if (a == std::string::npos) {
      out.push_back(parse_double(key, item));
      continue;
    }
    const auto b = item.find(':', a + 1);
    if (b == std::string::npos) throw ConfigError("key '" + key + "': range needs start:step:count");
    const double start = parse_double(key, item.substr(0, a));
    const double step = parse_double(key, item.substr(a + 1, b - a - 1));
    const long long count = parse_integer(key, item.substr(b + 1));
    for (long long i = 0; i < count; ++i) out.push_back(start + static_cast<double>(i) * step);
  }
  if (out.empty()) throw ConfigError("key '" + key + "' is empty");
  return out;
}

std::vector<std::string> ExperimentConfig::strings(const std::string& key) const {
  auto out = split_list(str(key));
  if (out.empty()) throw ConfigError("key '" + key + "' is empty");
  return out;
}

std::uint64_t ExperimentConfig::seed() const {
  const auto v = integer("seed");
  if (v < 0) throw ConfigError("seed must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : pairs_) {
    if (k == "out" || k == "threads") continue;  // do not change results
    out += k + "=" + v + "\n";
  }
  return out;
}

namespace {
std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}
}  // namespace

std::string fnv1a_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a(canonical()); }

std::string ExperimentConfig::hash_hex() const { return fnv1a_hex(canonical()); }

std::vector<int> parse_bits_list(const std::vector<std::string>& items) {
  std::vector<int> out;
  for (const auto& item : items) {
    if (item == "inf") {
      out.push_back(0);
      continue;
    }
    const auto b = parse_integer("bits", item);
    if (b < 1 || b > 8) throw ConfigError("bits must be in 1..8 or inf, got " + item);
    out.push_back(static_cast<int>(b));
  }
  return out;
}

std::string git_describe() { return QPREC_GIT_DESCRIBE; }

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string csv_body(const ResultTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out += (i ? "," : "") + table.columns[i];
  }
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

std::string render_csv(const ResultTable& table, const ExperimentConfig& config) {
  std::string out = "# git_describe: " + git_describe() + "\n";
  out += "# config_hash: " + config.hash_hex() + "\n";
  out += "# seed: " + std::to_string(config.seed()) + "\n";
  out += "# scenario: " + scenario_name(config.scenario()) + "\n";
  return out + csv_body(table);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string run_manifest(const std::string& command, const ExperimentConfig& config,
                         const std::vector<std::filesystem::path>& outputs, std::size_t rows) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["scenario"] = scenario_name(config.scenario());
  j["git_describe"] = git_describe();
  j["config_hash"] = config.hash_hex();
  j["seed"] = config.seed();
  j["config"] = config.pairs();
  std::vector<std::string> paths;
  for (const auto& p : outputs) paths.push_back(p.string());
  j["outputs"] = paths;
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string run_manifest(const std::string& command,
                         const std::map<std::string, std::string>& parameters, std::uint64_t seed,
                         const std::vector<std::filesystem::path>& outputs) {
  std::string canonical;
  for (const auto& [k, v] : parameters) {
    if (k != "out") canonical += k + "=" + v + "\n";
  }
  nlohmann::ordered_json j;
  j["command"] = command;
  j["git_describe"] = git_describe();
  j["config_hash"] = fnv1a_hex(canonical);
  j["seed"] = seed;
  j["config"] = parameters;
  std::vector<std::string> paths;
  for (const auto& p : outputs) paths.push_back(p.string());
  j["outputs"] = paths;
  return j.dump(2) + "\n";
}

ChannelDataset test_channels(const ExperimentConfig& c) {
  const int m = antennas_of(c);
  const int k = users_of(c);
  if (c.has("channels")) return load_dataset(c.str("channels"), m, k);
  if (!c.has("n_test_channels")) throw ConfigError("missing required keys: n_test_channels");
  const auto n = c.integer("n_test_channels");
  if (n < 1) throw ConfigError("n_test_channels must be at least 1");
  return channel_model_of(c) == ChannelModel::kLosUla
             ? gen_los_dataset(m, k, static_cast<int>(n), c.seed())
             : gen_rayleigh_dataset(m, k, static_cast<int>(n), c.seed());
}

ScalarQuantizer design_for(int bits, const ExperimentConfig& c) {
  if (c.has("quantizer")) {
    auto q = load_quantizer(c.str("quantizer"));
    if (q.bits == bits) return q;
  }
  LloydMaxOptions opts;
  opts.seed = static_cast<std::uint64_t>(c.integer_or("quantizer_seed", 0));
  return lloyd_max(bits, opts);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, count); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

ResultTable run_rate_sweep(const ExperimentConfig& c) {
  const int m = antennas_of(c);
  const int k = users_of(c);
  const auto channels = test_channels(c);
  const auto snrs = c.reals("snr_db");
  const int symbols = static_cast<int>(c.integer_or("symbols", 1000));
  ResultTable table{{"precoder", "bits", "snr_db", "rate_mean", "rate_std", "rate_stderr", "n_channels"}, {}};
  const auto precoder = c.str("precoder");
  for (const auto& tx : transmitters(c, precoder, m, k)) {
    // rates[i][j]: channel i at SNR j; the Bussgang estimate does not depend on the SNR
    std::vector<std::vector<double>> rates(channels.channels.size());
    parallel_for(channels.channels.size(), threads_of(c), [&](std::size_t i) {
      const auto& h = channels.channels[i];
      const auto s = gen_symbols(k, symbols, symbol_seed(c, i));
      const auto est = estimate_bussgang(s, tx.transmit(h, s));
      for (double snr : snrs) {
        rates[i].push_back(sum_rate(h, est, noise_variance(tx.total_power, snr)));
      }
    });
    for (std::size_t j = 0; j < snrs.size(); ++j) {
      std::vector<double> col;
      for (const auto& r : rates) col.push_back(r[j]);
      const double mean = mean_of(col);
      const double sd = std_of(col, mean);
      table.rows.push_back({precoder, bits_label(tx.bits), format_number(snrs[j]),
                            format_number(mean), format_number(sd),
                            format_number(sd / std::sqrt(static_cast<double>(col.size()))),
                            std::to_string(col.size())});
    }
  }
  return table;
}

ResultTable run_radiation(const ExperimentConfig& c) {
  const int m = antennas_of(c);
  const auto angles = c.reals("user_angles_deg");
  const int k = static_cast<int>(angles.size());
  const int symbols = static_cast<int>(c.integer_or("symbols", 10000));
  const auto grid = angle_grid(c.real_or("angle_step_deg", 0.5));
  const auto h = gen_los_ula(m, angles);
  const auto precoder = c.str("precoder");
  ResultTable table{{"precoder", "bits", "angle_deg", "p_lin_db", "p_dist_db", "p_sdr_db"}, {}};
  for (const auto& tx : transmitters(c, precoder, m, k)) {
    const auto s = gen_symbols(k, symbols, symbol_seed(c, 0));
    const auto est = estimate_bussgang(s, tx.transmit(h, s));
    for (const auto& p : radiation_pattern(est, grid)) {
      table.rows.push_back({precoder, bits_label(tx.bits), format_number(p.angle_deg),
                            format_number(to_db(p.p_lin)), format_number(to_db(p.p_dist)),
                            format_number(to_db(p.p_sdr))});
    }
  }
  return table;
}

ResultTable run_nmse_table(const ExperimentConfig& c) {
  const int m = antennas_of(c);
  const int k = users_of(c);
  const auto channels = test_channels(c);
  const int symbols = static_cast<int>(c.integer_or("symbols", 1000));
  ResultTable table{{"precoder", "bits", "nmse_db", "n_channels"}, {}};
  for (const auto& precoder : c.strings("precoder")) {
    for (const auto& tx : transmitters(c, precoder, m, k)) {
      std::vector<CMatrix> received(channels.channels.size());
      std::vector<SymbolBatch> sent(channels.channels.size());
      parallel_for(channels.channels.size(), threads_of(c), [&](std::size_t i) {
        const auto& h = channels.channels[i];
        sent[i] = gen_symbols(k, symbols, symbol_seed(c, i));
        received[i] = h.entries.transpose() * tx.transmit(h, sent[i]);
      });
      NmseAccumulator acc;
      for (std::size_t i = 0; i < received.size(); ++i) acc.add(sent[i], received[i]);
      table.rows.push_back({precoder, bits_label(tx.bits), format_number(acc.db()),
                            std::to_string(received.size())});
    }
  }
  return table;
}

ResultTable run_power(const ExperimentConfig& c) {
  const int m = antennas_of(c);
  const int k = users_of(c);
  const auto mode_name = c.str("dac_mode");
  DacMode mode;
  if (mode_name == "baseband") {
    mode = DacMode::kBaseband;
  } else if (mode_name == "rfdac") {
    mode = DacMode::kRfDac;
  } else {
    throw ConfigError("dac_mode must be baseband or rfdac, got '" + mode_name + "'");
  }
  PowerModel model;
  model.carrier = c.real_or("carrier_hz", model.carrier);
  const int zone = static_cast<int>(c.integer_or("nyquist_zone", 2));
  const auto bandwidths = c.reals("bandwidth_hz");
  ResultTable table{
      {"series", "bandwidth_hz", "p_dacs_w", "p_gnn_w", "p_total_w", "req_flops_per_s"}, {}};
  for (const auto& series : c.strings("series")) {
    // mrt:b, zf:b or gnn:b:d_h:N_h
    std::vector<std::string> f;
    std::stringstream ss(series);
    std::string part;
    while (std::getline(ss, part, ':')) f.push_back(part);
    const bool gnn = !f.empty() && f[0] == "gnn";
    if (f.empty() || (gnn ? f.size() != 4 : f.size() != 2) ||
        (!gnn && f[0] != "mrt" && f[0] != "zf")) {
      throw ConfigError("series '" + series + "' must be mrt:b, zf:b or gnn:b:d_h:N_h");
    }
    const int bits = static_cast<int>(parse_integer("series", f[1]));
    std::optional<FlopReport> flops;
    if (gnn) {
      flops = gnn_flops(m, k, static_cast<int>(parse_integer("series", f[2])),
                        static_cast<int>(parse_integer("series", f[3])), bits);
    }
    for (double bw : bandwidths) {
      const double fs = sampling_rate(mode, bw, model.carrier, zone);
      const double dacs = dac_power_total(m, bits, fs, model);
      const auto g = flops ? gnn_power(bw, *flops, model) : GnnPower{};
      table.rows.push_back({series, format_number(bw), format_number(dacs), format_number(g.watts),
                            format_number(dacs + g.watts), format_number(g.flops_per_second)});
    }
  }
  return table;
}

ResultTable run_train(const ExperimentConfig& c) {
  GnnConfig gc;
  gc.antennas = antennas_of(c);
  gc.users = users_of(c);
  gc.bits = static_cast<int>(c.integer("bits"));
  gc.hidden_width = static_cast<int>(c.integer("hidden_width"));
  gc.hidden_layers = static_cast<int>(c.integer("hidden_layers"));
  gc.validate();

  TrainConfig tc;
  tc.seed = c.seed();
  tc.epochs = static_cast<int>(c.integer("epochs"));
  tc.batch_channels = static_cast<int>(c.integer_or("batch_channels", tc.batch_channels));
  tc.learning_rate = c.real_or("learning_rate", tc.learning_rate);
  tc.temperature = c.real_or("temperature", tc.temperature);
  tc.symbols_per_channel = static_cast<int>(c.integer_or("train_symbols", tc.symbols_per_channel));
  tc.snr_train_db = c.real_or("snr_train_db", tc.snr_train_db);
  tc.val_symbols = static_cast<int>(c.integer_or("val_symbols", tc.val_symbols));
  tc.total_power = c.real_or("total_power", 0.0);
  tc.checkpoint_every_steps = static_cast<int>(c.integer_or("checkpoint_every_steps", 0));

  const auto dataset = [&](const char* file_key, const char* count_key, std::uint64_t salt) {
    if (c.has(file_key)) return load_dataset(c.str(file_key), gc.antennas, gc.users);
    if (!c.has(count_key)) {
      throw ConfigError(std::string("missing required keys: ") + count_key + " (or " + file_key + ")");
    }
    const auto n = static_cast<int>(c.integer(count_key));
    const auto seed = sub_seed(c.seed(), Stream::kChannel, salt);
    return channel_model_of(c) == ChannelModel::kLosUla
               ? gen_los_dataset(gc.antennas, gc.users, n, seed)
               : gen_rayleigh_dataset(gc.antennas, gc.users, n, seed);
  };
  const auto train_set = dataset("train_channels", "n_train_channels", 0x7261696eull);
  const auto val_set = dataset("val_channels", "n_val_channels", 0x76616cull);

  TrainOptions opts;
  opts.checkpoint_path = c.str("checkpoint");
  if (c.has("best_checkpoint")) opts.best_checkpoint_path = c.str("best_checkpoint");
  if (c.has("log")) opts.log_path = c.str("log");
  if (c.has("resume")) opts.resume = load_checkpoint(c.str("resume"));
  opts.max_steps = static_cast<std::uint64_t>(c.integer_or("max_steps", 0));

  const auto result = train(train_set, val_set, gc, tc, design_for(gc.bits, c), opts);
  ResultTable table{{"epoch", "step", "loss", "val_rate"}, {}};
  for (const auto& row : result.log) {
    table.rows.push_back({std::to_string(row.epoch), std::to_string(row.step),
                          format_number(row.loss), format_number(row.val_rate)});
  }
  return table;
}

ResultTable run_experiment(const ExperimentConfig& config) {
  switch (config.scenario()) {
    case Scenario::kRateSweep: return run_rate_sweep(config);
    case Scenario::kRadiation: return run_radiation(config);
    case Scenario::kNmseTable: return run_nmse_table(config);
    case Scenario::kPower: return run_power(config);
    case Scenario::kTrain: return run_train(config);
  }
  throw ConfigError("unhandled scenario");
}

std::string run_and_write(const std::string& command, const ExperimentConfig& config) {
  if (!config.has("out")) throw ConfigError("missing required keys: out");
  const std::filesystem::path out = config.str("out");
  const auto table = run_experiment(config);
  const auto text = render_csv(table, config);
  write_text_atomic(out, text);
  auto manifest = out;
  manifest += ".manifest.json";
  write_text_atomic(manifest, run_manifest(command, config, {out}, table.rows.size()));
  return text;
}

}  // namespace qprec
