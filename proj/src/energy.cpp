#include "qprec/energy.hpp"

#include "qprec/types.hpp"

#include <cmath>

namespace qprec {

std::uint64_t FlopReport::mul() const {
  return input.mul + static_cast<std::uint64_t>(hidden_layers) * hidden.mul + output.mul;
}

std::uint64_t FlopReport::add() const {
  return input.add + static_cast<std::uint64_t>(hidden_layers) * hidden.add + output.add;
}

FlopReport gnn_flops(int antennas, int users, int hidden_width, int hidden_layers, int bits) {
  if (antennas < 1 || users < 1 || hidden_width < 1 || hidden_layers < 1 || bits < 1 || bits > 16) {
    throw InvalidArgument("gnn_flops: all sizes must be positive (and bits <= 16)");
  }
  using u64 = std::uint64_t;
  const u64 M = static_cast<u64>(antennas);
  const u64 K = static_cast<u64>(users);
  const u64 d = static_cast<u64>(hidden_width);
  const u64 L = u64{1} << bits;  // 2^b

  FlopReport r;
  r.hidden_layers = hidden_layers;

  r.input.mul = 6 * M * K * d + K * d + M * d + 2 * M * d + M * d * d + 2 * K * d + K * d * d;
  r.input.add = 5 * M * K * d + K * (M - 1) * d + M * (K - 1) * d + M * d + M * d * d + K * d +
                K * d * d;

  r.hidden.mul = 3 * M * K * d * d + K * d + M * d + 2 * M * d * d + 2 * K * d * d;
  r.hidden.add = 3 * M * K * d * d - M * K * d + K * (M - 1) * d + M * (K - 1) * d +
                 2 * M * d * d - M * d + 2 * K * d * d - K * d;

  r.output.mul = 6 * M * K * d * L + 2 * M * L + 4 * M * L * L + 2 * M * d * L;
  r.output.add = 6 * M * K * d * L - 2 * M * K * L + 2 * M * (K - 1) * L + 4 * M * L * L +
                 2 * M * d * L - 2 * M * L;
  return r;
}

void PowerModel::validate() const {
  if (!(v_dd > 0 && i_0 > 0 && c_p > 0 && efficiency > 0 && roll_off > 0 && carrier > 0)) {
    throw InvalidArgument("power model parameters must be positive");
  }
}

double dac_power(int bits, double sample_rate, const PowerModel& model) {
  if (bits < 1) throw InvalidArgument("DAC resolution must be at least 1 bit");
  if (!(sample_rate >= 0.0)) throw InvalidArgument("sampling rate must be non-negative");
  const double levels = std::ldexp(1.0, bits) - 1.0;
  return 0.5 * model.v_dd * model.i_0 * levels +
         bits * model.c_p * (sample_rate / 2.0) * model.v_dd * model.v_dd;
}

double dac_power_total(int antennas, int bits, double sample_rate, const PowerModel& model) {
  if (antennas < 1) throw InvalidArgument("need at least one antenna");
  return 2.0 * antennas * dac_power(bits, sample_rate, model);
}

double sampling_rate(DacMode mode, double bandwidth, double carrier, int nyquist_zone) {
  if (!(bandwidth > 0.0)) throw InvalidArgument("bandwidth must be positive");
  if (mode == DacMode::kBaseband) return 4.0 * bandwidth;
  if (nyquist_zone < 1) throw InvalidArgument("Nyquist zone must be at least 1");
  if (!(carrier > 0.0)) throw InvalidArgument("carrier frequency must be positive");
  const double fs = 4.0 * carrier / (2.0 * nyquist_zone - 1.0);
  if (fs < bandwidth) {
    throw InvalidArgument("RF-DAC sampling rate is below the signal bandwidth");
  }
  return fs;
}

GnnPower gnn_power(double bandwidth, const FlopReport& flops, const PowerModel& model) {
  if (!(bandwidth >= 0.0)) throw InvalidArgument("bandwidth must be non-negative");
  model.validate();
  GnnPower p;
  p.flops_per_second = bandwidth / (1.0 + model.roll_off) * static_cast<double>(flops.total());
  p.watts = p.flops_per_second / model.efficiency;
  return p;
}

}  // namespace qprec
