/**
 * @file channel.hpp
 * @brief Channel matrices, symbol batches and the binary dataset format.
 */
#pragma once

#include "qprec/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace qprec {

enum class ChannelModel : std::uint32_t { kRayleigh = 0, kLosUla = 1 };

/// Downlink channel H (M antennas x K users). Column k is user k's channel.
struct ChannelMatrix {
  CMatrix entries;
  ChannelModel model = ChannelModel::kRayleigh;

  int antennas() const { return static_cast<int>(entries.rows()); }
  int users() const { return static_cast<int>(entries.cols()); }
};

/// N_s x K matrix of i.i.d. CN(0,1) symbols; row n is the symbol vector s_n.
struct SymbolBatch {
  CMatrix symbols;
  std::uint64_t seed = 0;

  int size() const { return static_cast<int>(symbols.rows()); }
  int users() const { return static_cast<int>(symbols.cols()); }
};

/// i.i.d. CN(0,1) entries; a pure function of (M, K, seed).
ChannelMatrix gen_rayleigh(int antennas, int users, std::uint64_t seed);

/// Line-of-sight ULA channel with half-wavelength spacing:
/// h_{m,k} = exp(-j m pi cos(phi_k)). Angles in degrees, within [0, 180].
ChannelMatrix gen_los_ula(int antennas, std::span<const double> angles_deg);

SymbolBatch gen_symbols(int users, int count, std::uint64_t seed);

/// A persisted set of equally-shaped channels.
struct ChannelDataset {
  int antennas = 0;
  int users = 0;
  std::uint64_t seed = 0;
  ChannelModel model = ChannelModel::kRayleigh;
  std::vector<ChannelMatrix> channels;
};

/// Rayleigh dataset; channel i is gen_rayleigh with a sub-seed of (seed, i).
ChannelDataset gen_rayleigh_dataset(int antennas, int users, int count, std::uint64_t seed);

/// LOS dataset with user angles drawn from the discrete uniform U{0, ..., 180}.
/// Co-located users (equal angles) are allowed.
ChannelDataset gen_los_dataset(int antennas, int users, int count, std::uint64_t seed);

/// Sub-seed used for the i-th element of a seeded collection.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

class DatasetVersionError : public IoError {
 public:
  using IoError::IoError;
};
class DatasetTruncatedError : public IoError {
 public:
  using IoError::IoError;
};
class DatasetDimensionError : public IoError {
 public:
  using IoError::IoError;
};

/// Binary layout, little-endian:
///   magic "QPCH" | u32 version (=1) | u32 dtype (=1, complex128) | u32 model
///   | u64 M | u64 K | u64 count | u64 seed
///   | count * M * K * (f64 re, f64 im), channel-major then row-major (m, k).
void save_dataset(const std::filesystem::path& path, const ChannelDataset& dataset);

/// Throws DatasetVersionError on bad magic/version/dtype, DatasetTruncatedError
/// when the payload is short, DatasetDimensionError on invalid or unexpected
/// dimensions (expected_* of 0 means "any").
ChannelDataset load_dataset(const std::filesystem::path& path, int expected_antennas = 0,
                            int expected_users = 0);

}  // namespace qprec
