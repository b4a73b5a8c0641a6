#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lungseg/nn/network.hpp"
#include "lungseg/nn/params.hpp"

namespace lungseg::nn {

/// Binary layout (all integers u32 little-endian):
///   "LSW1" | record count | per record: name length, UTF-8 name, rank,
///   rank x dim, product(dims) x float32 little-endian.
struct WeightRecord {
  std::string name;
  Dims dims;
  std::vector<float> values;
};

struct WeightContainer {
  std::vector<WeightRecord> records;
};

inline constexpr char kWeightMagic[4] = {'L', 'S', 'W', '1'};

/// BadMagic on a wrong signature, DimMismatch when a payload is short,
/// NameMismatch on duplicate names.
WeightContainer read_container(const std::filesystem::path& path);
void write_container(const WeightContainer& container, const std::filesystem::path& path);

std::vector<std::uint8_t> encode_container(const WeightContainer& container);
WeightContainer decode_container(const std::vector<std::uint8_t>& bytes);

struct LoadReport {
  std::vector<std::string> unmatched;  // container records with no tensor of that name
  std::vector<std::string> missing;    // network tensors absent from the container
  std::size_t loaded = 0;
};

using ParamFilter = std::function<bool(const std::string& name)>;

template <typename T>
WeightContainer to_container(const ParameterStore<T>& store, const ParamFilter& keep = {});

/// Strict: names must match exactly both ways (NameMismatch). Non-strict: only
/// matching names are copied. Dims must agree for every copied tensor
/// (DimMismatch). Nothing is modified when an error is raised.
template <typename T>
LoadReport load_into(ParameterStore<T>& store, const WeightContainer& container, bool strict);

template <typename T>
void save_weights(const Network<T>& net, const std::filesystem::path& path) {
  write_container(to_container(net.parameters()), path);
}

template <typename T>
LoadReport load_weights(Network<T>& net, const std::filesystem::path& path, bool strict) {
  return load_into(net.parameters(), read_container(path), strict);
}

}  // namespace lungseg::nn
