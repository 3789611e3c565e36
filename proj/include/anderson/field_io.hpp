#pragma once

#include <string>
#include <vector>

#include "anderson/error.hpp"
#include "anderson/hash.hpp"
#include "anderson/io.hpp"
#include "anderson/potential.hpp"

namespace anderson {

/// Occupancy packed LSB-first: cell i is bit (i % 8) of byte i / 8, bytes
/// written as lowercase hex in increasing order.
inline std::string pack_occupancy(const std::vector<std::uint8_t>& occ) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (std::size_t byte = 0; byte * 8 < occ.size(); ++byte) {
    unsigned v = 0;
    for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < occ.size(); ++bit)
      if (occ[byte * 8 + bit]) v |= 1u << bit;
    out += hex[v >> 4];
    out += hex[v & 0xf];
  }
  return out;
}

inline std::vector<std::uint8_t> unpack_occupancy(const std::string& packed, std::size_t cells) {
  require(packed.size() == 2 * ((cells + 7) / 8), "field json: occupancy length does not match the grid");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    throw InvalidArgument(std::string("field json: invalid hex digit '") + c + "'");
  };
  std::vector<std::uint8_t> occ(cells, 0);
  for (std::size_t i = 0; i < cells; ++i) {
    const unsigned v = nibble(packed[2 * (i / 8)]) << 4 | nibble(packed[2 * (i / 8) + 1]);
    occ[i] = (v >> (i % 8)) & 1u;
  }
  return occ;
}

inline json field_to_json(const PotentialField& f) {
  json j;
  j["d"] = f.grid.d;
  j["inv_eps"] = f.grid.inv_eps;
  j["alpha"] = f.alpha;
  j["beta"] = f.beta;
  j["seed"] = f.grid.seed;
  j["kind"] = to_string(f.kind);
  j["byte_order"] = "lsb-first: cell i is bit i%8 of byte i/8; axis 0 fastest";
  j["occupancy"] = pack_occupancy(f.occupancy);
  json valleys = json::array();
  for (const auto& v : f.valleys) {
    json box;
    box["anchor"] = std::vector<int>(v.anchor.begin(), v.anchor.begin() + f.grid.d);
    box["extent"] = std::vector<int>(v.extent.begin(), v.extent.begin() + f.grid.d);
    valleys.push_back(box);
  }
  j["valleys"] = valleys;
  return j;
}

inline PotentialField field_from_json(const json& j) {
  try {
    PotentialField f;
    f.grid = GridSpec{j.at("d").get<int>(), j.at("inv_eps").get<int>(), j.at("seed").get<std::uint64_t>()};
    f.grid.validate();
    f.alpha = j.at("alpha").get<double>();
    f.beta = j.at("beta").get<double>();
    Amplitudes{f.alpha, f.beta}.validate();
    f.kind = field_kind_from_string(j.at("kind").get<std::string>());
    f.occupancy = unpack_occupancy(j.at("occupancy").get<std::string>(), f.grid.num_cells());
    if (j.contains("valleys"))
      for (const auto& box : j.at("valleys")) {
        Cuboid c;
        const auto a = box.at("anchor").get<std::vector<int>>();
        const auto e = box.at("extent").get<std::vector<int>>();
        require(static_cast<int>(a.size()) == f.grid.d && static_cast<int>(e.size()) == f.grid.d,
                "field json: valley dimension mismatch");
        for (int i = 0; i < f.grid.d; ++i) {
          c.anchor[i] = a[static_cast<std::size_t>(i)];
          c.extent[i] = e[static_cast<std::size_t>(i)];
        }
        f.valleys.push_back(c);
      }
    return f;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("field json: ") + e.what());
  }
}

inline std::string field_hash(const PotentialField& f) { return content_hash(field_to_json(f).dump()); }

}  // namespace anderson
