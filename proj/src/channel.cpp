#include "qprec/channel.hpp"

#include "qprec/rng.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

namespace qprec {

namespace {

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'Q', 'P', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kDtypeComplex128 = 1;

void check_dims(int antennas, int users) {
  if (antennas < 1 || users < 1) {
    throw InvalidArgument("channel dimensions must be >= 1, got M=" + std::to_string(antennas) +
                          " K=" + std::to_string(users));
  }
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
bool read_pod(std::istream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return sub_seed(seed, Stream::kChannel, index);
}

ChannelMatrix gen_rayleigh(int antennas, int users, std::uint64_t seed) {
  check_dims(antennas, users);
  Rng rng(seed, Stream::kChannel);
  ChannelMatrix h;
  h.model = ChannelModel::kRayleigh;
  h.entries.resize(antennas, users);
  for (int m = 0; m < antennas; ++m) {
    for (int k = 0; k < users; ++k) h.entries(m, k) = rng.complex_normal();
  }
  return h;
}

ChannelMatrix gen_los_ula(int antennas, std::span<const double> angles_deg) {
  check_dims(antennas, static_cast<int>(angles_deg.size()));
  ChannelMatrix h;
  h.model = ChannelModel::kLosUla;
  h.entries.resize(antennas, static_cast<Eigen::Index>(angles_deg.size()));
  for (std::size_t k = 0; k < angles_deg.size(); ++k) {
    const double phi = angles_deg[k];
    if (!(phi >= 0.0 && phi <= 180.0)) {
      throw InvalidArgument("user angle " + std::to_string(phi) + " outside [0, 180] degrees");
    }
    const double c = std::cos(phi * std::numbers::pi / 180.0);
    for (int m = 0; m < antennas; ++m) {
      h.entries(m, static_cast<Eigen::Index>(k)) = std::polar(1.0, -m * std::numbers::pi * c);
    }
  }
  return h;
}

SymbolBatch gen_symbols(int users, int count, std::uint64_t seed) {
  if (users < 1 || count < 1) {
    throw InvalidArgument("symbol batch needs K >= 1 and N_s >= 1");
  }
  Rng rng(seed, Stream::kSymbol);
  SymbolBatch batch;
  batch.seed = seed;
  batch.symbols.resize(count, users);
  for (int n = 0; n < count; ++n) {
    for (int k = 0; k < users; ++k) batch.symbols(n, k) = rng.complex_normal();
  }
  return batch;
}

ChannelDataset gen_rayleigh_dataset(int antennas, int users, int count, std::uint64_t seed) {
  check_dims(antennas, users);
  ChannelDataset ds{antennas, users, seed, ChannelModel::kRayleigh, {}};
  ds.channels.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    ds.channels.push_back(gen_rayleigh(antennas, users, derive_seed(seed, i)));
  }
  return ds;
}

ChannelDataset gen_los_dataset(int antennas, int users, int count, std::uint64_t seed) {
  check_dims(antennas, users);
  ChannelDataset ds{antennas, users, seed, ChannelModel::kLosUla, {}};
  ds.channels.reserve(static_cast<std::size_t>(count));
  std::vector<double> angles(static_cast<std::size_t>(users));
  for (int i = 0; i < count; ++i) {
    Rng rng(seed, Stream::kAngle, static_cast<std::uint64_t>(i));
    for (auto& a : angles) a = static_cast<double>(rng.uniform_index(181));
    ds.channels.push_back(gen_los_ula(antennas, angles));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const ChannelDataset& dataset) {
  for (const auto& h : dataset.channels) {
    if (h.antennas() != dataset.antennas || h.users() != dataset.users) {
      throw DatasetDimensionError("channel shape does not match dataset header");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  write_pod(out, kVersion);
  write_pod(out, kDtypeComplex128);
  write_pod(out, static_cast<std::uint32_t>(dataset.model));
  write_pod(out, static_cast<std::uint64_t>(dataset.antennas));
  write_pod(out, static_cast<std::uint64_t>(dataset.users));
  write_pod(out, static_cast<std::uint64_t>(dataset.channels.size()));
  write_pod(out, dataset.seed);
  for (const auto& h : dataset.channels) {
    for (int m = 0; m < dataset.antennas; ++m) {
      for (int k = 0; k < dataset.users; ++k) {
        write_pod(out, h.entries(m, k).real());
        write_pod(out, h.entries(m, k).imag());
      }
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ChannelDataset load_dataset(const std::filesystem::path& path, int expected_antennas,
                            int expected_users) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size())) {
    throw DatasetTruncatedError("dataset header truncated: " + path.string());
  }
  std::uint32_t version = 0, dtype = 0, model = 0;
  if (magic != kMagic) throw DatasetVersionError("bad dataset magic in " + path.string());
  if (!read_pod(in, version)) throw DatasetTruncatedError("dataset header truncated");
  if (version != kVersion) {
    throw DatasetVersionError("unsupported dataset version " + std::to_string(version));
  }
  std::uint64_t antennas = 0, users = 0, count = 0, seed = 0;
  if (!read_pod(in, dtype) || !read_pod(in, model) || !read_pod(in, antennas) ||
      !read_pod(in, users) || !read_pod(in, count) || !read_pod(in, seed)) {
    throw DatasetTruncatedError("dataset header truncated");
  }
  if (dtype != kDtypeComplex128) {
    throw DatasetVersionError("unsupported dataset dtype " + std::to_string(dtype));
  }
  if (model > 1) throw DatasetVersionError("unknown channel model tag " + std::to_string(model));
  if (antennas < 1 || users < 1 || antennas > (1u << 20) || users > (1u << 20)) {
    throw DatasetDimensionError("invalid dataset dimensions");
  }
  if ((expected_antennas > 0 && antennas != static_cast<std::uint64_t>(expected_antennas)) ||
      (expected_users > 0 && users != static_cast<std::uint64_t>(expected_users))) {
    throw DatasetDimensionError("dataset is " + std::to_string(antennas) + "x" +
                                std::to_string(users) + ", expected " +
                                std::to_string(expected_antennas) + "x" +
                                std::to_string(expected_users));
  }

  ChannelDataset ds;
  ds.antennas = static_cast<int>(antennas);
  ds.users = static_cast<int>(users);
  ds.seed = seed;
  ds.model = static_cast<ChannelModel>(model);
  ds.channels.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  std::vector<double> buf(2 * antennas * users);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != buf.size() * sizeof(double)) {
      throw DatasetTruncatedError("dataset payload truncated at channel " + std::to_string(i) +
                                  " of " + std::to_string(count));
    }
    ChannelMatrix h;
    h.model = ds.model;
    h.entries.resize(ds.antennas, ds.users);
    std::size_t p = 0;
    for (int m = 0; m < ds.antennas; ++m) {
      for (int k = 0; k < ds.users; ++k, p += 2) h.entries(m, k) = {buf[p], buf[p + 1]};
    }
    ds.channels.push_back(std::move(h));
  }
  return ds;
}

}  // namespace qprec
