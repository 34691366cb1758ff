// Command-line front end. Every experiment subcommand turns its flags into the
// same key/value config that `run --config` reads, so both paths share validation.

#include "qprec/harness.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

using Pairs = std::map<std::string, std::string>;

struct Binding {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

class Bound {
 public:
  explicit Bound(CLI::App* app) : app_(app) {}

  void flag(const std::string& name, const std::string& key, const std::string& help,
            bool required = false) {
    bindings_.push_back(std::make_unique<Binding>());
    auto& b = *bindings_.back();
    b.key = key;
    b.option = app_->add_option(name, b.value, help);
    if (required) b.option->required();
  }

  Pairs pairs(const std::string& scenario) const {
    Pairs p{{"scenario", scenario}};
    for (const auto& b : bindings_) {
      if (b->option->count() > 0) p[b->key] = b->value;
    }
    return p;
  }

  std::string get(const std::string& key) const {
    for (const auto& b : bindings_) {
      if (b->key == key && b->option->count() > 0) return b->value;
    }
    return "";
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::unique_ptr<Binding>> bindings_;
};

void common(Bound& b) {
  b.flag("--seed", "seed", "master seed", true);
  b.flag("--out", "out", "output CSV path", true);
  b.flag("--threads", "threads", "worker threads");
}

int run_scenario(const std::string& command, const Pairs& pairs) {
  const auto config = qprec::ExperimentConfig::from_pairs(pairs);
  qprec::run_and_write(command, config);
  std::cerr << command << ": wrote " << config.str("out") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized downlink precoding: baselines, GNN training and energy models"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "run a config file");
  std::string config_path;
  std::vector<std::string> overrides;
  run->add_option("--config", config_path, "key = value config file")->required();
  run->add_option("--set", overrides, "override key=value (repeatable)");

  // gen-channels
  auto* gen = app.add_subcommand("gen-channels", "generate a binary channel dataset");
  int gen_m = 0, gen_k = 0, gen_count = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_model = "rayleigh", gen_out;
  gen->add_option("--m", gen_m, "antennas")->required();
  gen->add_option("--k", gen_k, "users")->required();
  gen->add_option("--count", gen_count, "number of channels")->required();
  gen->add_option("--seed", gen_seed, "seed")->required();
  gen->add_option("--model", gen_model, "rayleigh or los")->check(CLI::IsMember({"rayleigh", "los"}));
  gen->add_option("--out", gen_out, "output file")->required();

  // design-quantizer
  auto* dq = app.add_subcommand("design-quantizer", "Lloyd-Max quantizer for N(0,1)");
  int dq_bits = 1;
  qprec::LloydMaxOptions dq_opts;
  std::string dq_out;
  dq->add_option("--bits", dq_bits, "resolution b")->required();
  dq->add_option("--n-init", dq_opts.n_init, "random initializations");
  dq->add_option("--tol", dq_opts.tol, "convergence tolerance");
  dq->add_option("--max-iter", dq_opts.max_iterations, "iteration cap per start");
  dq->add_option("--seed", dq_opts.seed, "seed for the initializations");
  dq->add_option("--out", dq_out, "output JSON")->required();

  // eval-linear
  Bound lin(app.add_subcommand("eval-linear", "rate sweep of MRT/ZF with quantized DACs"));
  lin.flag("--precoder", "precoder", "mrt or zf", true);
  lin.flag("--bits", "bits", "list, e.g. 1,2,3,4,inf", true);
  lin.flag("--m", "antennas", "antennas", true);
  lin.flag("--k", "users", "users", true);
  lin.flag("--snr-list", "snr_db", "SNRs in dB (list or start:step:count)", true);
  lin.flag("--channels", "channels", "channel dataset file");
  lin.flag("--count", "n_test_channels", "test channels to draw when no file is given");
  lin.flag("--model", "channel_model", "rayleigh or los");
  lin.flag("--symbols", "symbols", "symbols per channel");
  lin.flag("--power", "total_power", "P_T (default M)");
  common(lin);

  // train
  Bound tr(app.add_subcommand("train", "train the GNN precoder"));
  tr.flag("--m", "antennas", "antennas", true);
  tr.flag("--k", "users", "users", true);
  tr.flag("--bits", "bits", "DAC resolution", true);
  tr.flag("--dh", "hidden_width", "hidden width d_h", true);
  tr.flag("--nh", "hidden_layers", "hidden layers N_h", true);
  tr.flag("--epochs", "epochs", "epochs", true);
  tr.flag("--out,--checkpoint", "checkpoint", "checkpoint path (latest state)", true);
  tr.flag("--csv", "out", "result CSV (default <checkpoint>.csv)");
  tr.flag("--best", "best_checkpoint", "best-validation checkpoint path");
  tr.flag("--log", "log", "per-step CSV log with wall-clock times");
  tr.flag("--channels,--train-channels", "train_channels", "training dataset file");
  tr.flag("--val,--val-channels", "val_channels", "validation dataset file");
  tr.flag("--train-count", "n_train_channels", "training channels to draw");
  tr.flag("--val-count", "n_val_channels", "validation channels to draw");
  tr.flag("--batch", "batch_channels", "channels per step");
  tr.flag("--lr", "learning_rate", "Adam learning rate");
  tr.flag("--tau", "temperature", "Gumbel-softmax temperature");
  tr.flag("--ns", "train_symbols", "symbols per training channel");
  tr.flag("--snr-train", "snr_train_db", "training SNR in dB");
  tr.flag("--val-symbols", "val_symbols", "symbols per validation channel");
  tr.flag("--resume", "resume", "checkpoint to resume from");
  tr.flag("--max-steps", "max_steps", "stop after this many optimizer steps");
  tr.flag("--checkpoint-every", "checkpoint_every_steps", "also checkpoint every n steps");
  tr.flag("--seed", "seed", "master seed", true);
  tr.flag("--threads", "threads", "worker threads");

  // eval-gnn
  Bound eg(app.add_subcommand("eval-gnn", "rate sweep of a trained GNN"));
  eg.flag("--checkpoint", "checkpoint", "checkpoint path", true);
  eg.flag("--m", "antennas", "antennas", true);
  eg.flag("--k", "users", "users", true);
  eg.flag("--snr-list", "snr_db", "SNRs in dB", true);
  eg.flag("--channels", "channels", "channel dataset file");
  eg.flag("--count", "n_test_channels", "test channels to draw when no file is given");
  eg.flag("--symbols", "symbols", "symbols per channel");
  common(eg);

  // radiation
  Bound rad(app.add_subcommand("radiation", "radiation pattern of a LOS scenario"));
  rad.flag("--precoder", "precoder", "mrt, zf or gnn", true);
  rad.flag("--bits", "bits", "list of resolutions (not for gnn)");
  rad.flag("--m", "antennas", "antennas", true);
  rad.flag("--angles", "user_angles_deg", "user angles in degrees", true);
  rad.flag("--step", "angle_step_deg", "grid step in degrees");
  rad.flag("--symbols", "symbols", "symbols");
  rad.flag("--checkpoint", "checkpoint", "checkpoint for gnn");
  common(rad);

  // nmse
  Bound nm(app.add_subcommand("nmse", "noiseless NMSE table"));
  nm.flag("--precoder", "precoder", "list of mrt, zf, gnn", true);
  nm.flag("--bits", "bits", "resolutions for linear rows");
  nm.flag("--m", "antennas", "antennas", true);
  nm.flag("--k", "users", "users", true);
  nm.flag("--channels", "channels", "channel dataset file");
  nm.flag("--count", "n_test_channels", "test channels to draw when no file is given");
  nm.flag("--symbols", "symbols", "symbols per channel");
  nm.flag("--checkpoint", "checkpoint", "checkpoints for gnn rows (list)");
  common(nm);

  // power
  auto* pw_app = app.add_subcommand("power", "DAC and GNN power versus bandwidth");
  Bound pw(pw_app);
  pw.flag("--mode", "dac_mode", "baseband or rfdac", true);
  pw.flag("--m", "antennas", "antennas", true);
  pw.flag("--k", "users", "users", true);
  pw.flag("--bandwidth-list", "bandwidth_hz", "bandwidths in Hz", true);
  pw.flag("--zone", "nyquist_zone", "Nyquist zone of the RF-DAC");
  pw.flag("--carrier", "carrier_hz", "carrier frequency in Hz");
  std::string pw_bits, pw_dh, pw_nh, pw_series;
  pw_app->add_option("--bits", pw_bits, "DAC resolution");
  pw_app->add_option("--dh", pw_dh, "GNN hidden width (omit for MRT)");
  pw_app->add_option("--nh", pw_nh, "GNN hidden layers (omit for MRT)");
  pw_app->add_option("--series", pw_series, "explicit series list, e.g. gnn:1:32:8,mrt:3");
  pw.flag("--out", "out", "output CSV path", true);
  std::string pw_seed = "0";
  pw_app->add_option("--seed", pw_seed, "seed (recorded only)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto text_config = qprec::ExperimentConfig::load(config_path);
      auto pairs = text_config.pairs();
      for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw qprec::ConfigError("--set expects key=value, got " + o);
        pairs[o.substr(0, eq)] = o.substr(eq + 1);
      }
      return run_scenario("run", pairs);
    }
    if (gen->parsed()) {
      const auto ds = gen_model == "los" ? qprec::gen_los_dataset(gen_m, gen_k, gen_count, gen_seed)
                                         : qprec::gen_rayleigh_dataset(gen_m, gen_k, gen_count, gen_seed);
      qprec::save_dataset(gen_out, ds);
      const Pairs params{{"antennas", std::to_string(gen_m)}, {"users", std::to_string(gen_k)},
                         {"count", std::to_string(gen_count)}, {"model", gen_model},
                         {"seed", std::to_string(gen_seed)}, {"out", gen_out}};
      qprec::write_text_atomic(gen_out + ".manifest.json",
                               qprec::run_manifest("gen-channels", params, gen_seed, {gen_out}));
      return 0;
    }
    if (dq->parsed()) {
      const auto q = qprec::lloyd_max(dq_bits, dq_opts);
      qprec::save_quantizer(dq_out, q);
      const Pairs params{{"bits", std::to_string(dq_bits)}, {"n_init", std::to_string(dq_opts.n_init)},
                         {"tol", qprec::format_number(dq_opts.tol)},
                         {"max_iterations", std::to_string(dq_opts.max_iterations)},
                         {"seed", std::to_string(dq_opts.seed)}, {"out", dq_out}};
      qprec::write_text_atomic(dq_out + ".manifest.json",
                               qprec::run_manifest("design-quantizer", params, dq_opts.seed, {dq_out}));
      return 0;
    }
    for (auto* b : {&lin, &eg}) {
      if (b->app()->parsed()) {
        auto p = b->pairs("rate_sweep");
        if (b == &eg) p["precoder"] = "gnn";
        return run_scenario(b->app()->get_name(), p);
      }
    }
    if (tr.app()->parsed()) {
      auto p = tr.pairs("train");
      if (!p.count("out")) p["out"] = p["checkpoint"] + ".csv";
      if (!p.count("log")) p["log"] = p["checkpoint"] + ".log.csv";
      return run_scenario("train", p);
    }
    if (rad.app()->parsed()) return run_scenario("radiation", rad.pairs("radiation"));
    if (nm.app()->parsed()) return run_scenario("nmse", nm.pairs("nmse_table"));
    if (pw_app->parsed()) {
      auto p = pw.pairs("power");
      if (!pw_series.empty()) {
        p["series"] = pw_series;
      } else {
        if (pw_bits.empty()) throw qprec::ConfigError("power needs --bits or --series");
        p["series"] = (!pw_dh.empty() && !pw_nh.empty())
                          ? "gnn:" + pw_bits + ":" + pw_dh + ":" + pw_nh
                          : "mrt:" + pw_bits;
      }
      p["seed"] = pw_seed;
      return run_scenario("power", p);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
