/**
 * @file energy.hpp
 * @brief Operation counts of the GNN forward pass and power models for DACs
 * and GNN processing.
 */
#pragma once

#include "qprec/types.hpp"

#include <cstdint>

namespace qprec {

struct OpCount {
  std::uint64_t mul = 0;
  std::uint64_t add = 0;
  std::uint64_t total() const { return mul + add; }
};

/// Real multiplications and additions of one GNN forward pass (one symbol).
/// `hidden` is the cost of one hidden layer; the hidden totals are N_h times that.
struct FlopReport {
  OpCount input;
  OpCount hidden;
  int hidden_layers = 0;
  OpCount output;

  std::uint64_t mul() const;
  std::uint64_t add() const;
  std::uint64_t total() const { return mul() + add(); }
};

FlopReport gnn_flops(int antennas, int users, int hidden_width, int hidden_layers, int bits);

struct PowerModel {
  double v_dd = 3.0;          // volts
  double i_0 = 10e-6;         // amps, unit current source
  double c_p = 1e-12;         // farads, parasitic capacitance
  double efficiency = 646.6e12;  // FLOPs/s per watt
  double roll_off = 0.1;
  double carrier = 3.5e9;     // hertz

  void validate() const;
};

/// Power of one current-steering DAC with b bits at sampling rate f_s.
double dac_power(int bits, double sample_rate, const PowerModel& model = {});

/// Two DACs per antenna.
double dac_power_total(int antennas, int bits, double sample_rate, const PowerModel& model = {});

enum class DacMode { kBaseband, kRfDac };

/// Baseband: 4B. RF-DAC: 4 f_c / (2n - 1), which must not fall below B.
double sampling_rate(DacMode mode, double bandwidth, double carrier, int nyquist_zone = 2);

struct GnnPower {
  double watts = 0.0;
  double flops_per_second = 0.0;
};

GnnPower gnn_power(double bandwidth, const FlopReport& flops, const PowerModel& model = {});

}  // namespace qprec
