#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include "lungseg/volume.hpp"

namespace lungseg::io {

/// Parsed `Key = Value` lines of a MetaImage header.
using MhdHeader = std::map<std::string, std::string>;

MhdHeader parse_mhd_header(const std::filesystem::path& path);

/// Reads a MetaImage volume. MET_SHORT yields a CtVolume, MET_UCHAR a ByteVolume.
std::variant<CtVolume, ByteVolume> read_mhd(const std::filesystem::path& path);

/// Like read_mhd but requires MET_SHORT (UnsupportedType otherwise).
CtVolume read_ct(const std::filesystem::path& path);

/// Reads a MET_UCHAR volume and attaches a label map.
LabelVolume read_labels(const std::filesystem::path& path, const LabelMap& map, bool strict);

/// Writes `<stem>.mhd` plus `<stem>.raw` next to it. `path` must end in .mhd.
void write_mhd(const CtVolume& volume, const std::filesystem::path& path);
void write_mhd(const ByteVolume& volume, const std::filesystem::path& path);

/// Left and right lung become 1; trachea and everything else become 0.
BinaryMask to_binary_lung(const LabelVolume& labels);

}  // namespace lungseg::io
