#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "odim/mlp.hpp"

namespace odim {

// Parameter snapshot file: one JSON header line (shapes, seed, clamp bounds)
// followed by the flat little-endian f64 blob in tensor order.

namespace detail {

inline double to_little_endian(double v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    u = __builtin_bswap64(u);
    std::memcpy(&v, &u, 8);
    return v;
  }
}

}  // namespace detail

inline void save_params(const MlpParams& p, std::uint64_t seed,
                        const std::string& path) {
  nlohmann::json header;
  header["format"] = "odim-params";
  header["version"] = 1;
  header["input_dim"] = p.cfg.input_dim;
  header["latent_dim"] = p.cfg.latent_dim;
  header["hidden_dim"] = p.cfg.hidden_dim;
  header["output"] = p.cfg.output == OutputAct::Sigmoid ? "sigmoid" : "identity";
  header["seed"] = seed;
  header["logvar_min"] = kLogvarMin;
  header["logvar_max"] = kLogvarMax;
  header["values"] = p.param_count();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_params: cannot open " + path);
  out << header.dump() << '\n';
  p.for_each([&](std::span<const double> t) {
    for (double v : t) {
      const double le = detail::to_little_endian(v);
      out.write(reinterpret_cast<const char*>(&le), 8);
    }
  });
  if (!out) throw DataError("save_params: write failed for " + path);
}

inline std::pair<MlpParams, std::uint64_t> load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_params: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_params: missing header");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "odim-params")
    throw DataError("load_params: not an odim parameter file");

  MlpConfig cfg;
  cfg.input_dim = header.at("input_dim").get<std::size_t>();
  cfg.latent_dim = header.at("latent_dim").get<std::size_t>();
  cfg.hidden_dim = header.at("hidden_dim").get<std::size_t>();
  cfg.output = header.value("output", "sigmoid") == "identity" ? OutputAct::Identity
                                                               : OutputAct::Sigmoid;
  MlpParams p(cfg);
  if (header.at("values").get<std::size_t>() != p.param_count())
    throw DataError("load_params: value count does not match shapes");

  p.for_each([&](std::span<double> t) {
    for (auto& v : t) {
      double le;
      in.read(reinterpret_cast<char*>(&le), 8);
      v = detail::to_little_endian(le);
    }
  });
  if (!in) throw DataError("load_params: truncated blob in " + path);
  return {std::move(p), header.value("seed", std::uint64_t{0})};
}

}  // namespace odim
