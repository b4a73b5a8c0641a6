#include "lungseg/volume_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lungseg::io {
namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

const std::string& require(const MhdHeader& header, const std::string& key) {
  auto it = header.find(key);
  if (it == header.end()) fail(ErrorCode::MissingKey, "MetaImage header lacks " + key);
  return it->second;
}

bool is_true(const std::string& value) {
  std::string v;
  std::transform(value.begin(), value.end(), std::back_inserter(v),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return v == "true" || v == "1";
}

template <typename N>
std::vector<N> parse_numbers(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  std::vector<N> out;
  std::string token;
  while (in >> token) {
    N value{};
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size()) {
      fail(ErrorCode::UnsupportedType, "cannot parse " + key + " value '" + token + "'");
    }
    out.push_back(value);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <std::size_t N>
std::string join(const std::array<double, N>& values) {
  std::string out;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ' ';
    out += format_double(values[i]);
  }
  return out;
}

struct Decoded {
  Geometry geometry;
  std::string element_type;
  std::vector<unsigned char> payload;
};

Decoded load(const fs::path& path) {
  MhdHeader header = parse_mhd_header(path);

  auto single = [&](const char* key, const std::string& text) {
    auto v = parse_numbers<long>(key, text);
    if (v.size() != 1) fail(ErrorCode::UnsupportedType, std::string(key) + " must be a single integer");
    return v.front();
  };
  if (single("NDims", require(header, "NDims")) != 3) {
    fail(ErrorCode::UnsupportedType, "only 3-D MetaImage volumes are supported");
  }
  for (const char* key : {"ElementByteOrderMSB", "BinaryDataByteOrderMSB"}) {
    auto it = header.find(key);
    if (it != header.end() && is_true(it->second)) {
      fail(ErrorCode::UnsupportedType, "big-endian payloads are not supported");
    }
  }
  if (auto it = header.find("CompressedData"); it != header.end() && is_true(it->second)) {
    fail(ErrorCode::UnsupportedType, "compressed payloads are not supported");
  }
  if (auto it = header.find("ElementNumberOfChannels");
      it != header.end() && single("ElementNumberOfChannels", it->second) != 1) {
    fail(ErrorCode::UnsupportedType, "multi-channel volumes are not supported");
  }
  if (auto it = header.find("HeaderSize"); it != header.end() && single("HeaderSize", it->second) != 0) {
    fail(ErrorCode::UnsupportedType, "payload header skipping is not supported");
  }

  Decoded out;
  auto dims = parse_numbers<std::size_t>("DimSize", require(header, "DimSize"));
  if (dims.size() != 3) fail(ErrorCode::DimMismatch, "DimSize must list three values");
  std::copy(dims.begin(), dims.end(), out.geometry.dims.begin());

  if (auto it = header.find("ElementSpacing"); it != header.end()) {
    auto sp = parse_numbers<double>("ElementSpacing", it->second);
    if (sp.size() != 3) fail(ErrorCode::DimMismatch, "ElementSpacing must list three values");
    std::copy(sp.begin(), sp.end(), out.geometry.spacing.begin());
  }
  for (const char* key : {"Offset", "Origin", "Position"}) {
    auto it = header.find(key);
    if (it == header.end()) continue;
    auto o = parse_numbers<double>(key, it->second);
    if (o.size() != 3) fail(ErrorCode::DimMismatch, std::string(key) + " must list three values");
    std::copy(o.begin(), o.end(), out.geometry.origin.begin());
    break;
  }
  out.geometry.validate();

  out.element_type = require(header, "ElementType");
  std::size_t bytes_per_voxel = 0;
  if (out.element_type == "MET_SHORT") {
    bytes_per_voxel = 2;
  } else if (out.element_type == "MET_UCHAR") {
    bytes_per_voxel = 1;
  } else {
    fail(ErrorCode::UnsupportedType, "element type " + out.element_type + " is not supported");
  }

  const std::string& data_file = require(header, "ElementDataFile");
  if (data_file == "LOCAL" || data_file.rfind("LIST", 0) == 0 || data_file.find('%') != std::string::npos) {
    fail(ErrorCode::UnsupportedType, "ElementDataFile must name a single raw file");
  }
  fs::path raw = path.parent_path() / data_file;
  std::ifstream in(raw, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open payload " + raw.string());
  out.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());

  const std::size_t expected = out.geometry.voxel_count() * bytes_per_voxel;
  if (out.payload.size() != expected) {
    fail(ErrorCode::DimMismatch, "payload " + raw.string() + " has " +
                                     std::to_string(out.payload.size()) + " bytes, header implies " +
                                     std::to_string(expected));
  }
  return out;
}

CtVolume decode_short(Decoded d) {
  std::vector<std::int16_t> voxels(d.geometry.voxel_count());
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    auto lo = static_cast<std::uint16_t>(d.payload[2 * i]);
    auto hi = static_cast<std::uint16_t>(d.payload[2 * i + 1]);
    voxels[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
  }
  return CtVolume(d.geometry, std::move(voxels));
}

ByteVolume decode_uchar(Decoded d) {
  return ByteVolume(d.geometry, std::vector<std::uint8_t>(d.payload.begin(), d.payload.end()));
}

void write_header(const Geometry& g, const char* element_type, const fs::path& path) {
  if (path.extension() != ".mhd") {
    fail(ErrorCode::IoError, "MetaImage header path must end in .mhd: " + path.string());
  }
  fs::path raw = path;
  raw.replace_extension(".raw");

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << "NDims = 3\n"
      << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << '\n'
      << "ElementSpacing = " << join(g.spacing) << '\n'
      << "Offset = " << join(g.origin) << '\n'
      << "ElementType = " << element_type << '\n'
      << "ElementByteOrderMSB = False\n"
      << "ElementDataFile = " << raw.filename().string() << '\n';
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

void write_payload(const fs::path& path, const std::vector<char>& bytes) {
  fs::path raw = path;
  raw.replace_extension(".raw");
  std::ofstream out(raw, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + raw.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + raw.string());
}

}  // namespace

MhdHeader parse_mhd_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  MhdHeader header;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    header[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  return header;
}

std::variant<CtVolume, ByteVolume> read_mhd(const fs::path& path) {
  Decoded d = load(path);
  if (d.element_type == "MET_SHORT") return decode_short(std::move(d));
  return decode_uchar(std::move(d));
}

CtVolume read_ct(const fs::path& path) {
  auto v = read_mhd(path);
  if (auto* ct = std::get_if<CtVolume>(&v)) return std::move(*ct);
  fail(ErrorCode::UnsupportedType, path.string() + " is not a MET_SHORT CT volume");
}

LabelVolume read_labels(const fs::path& path, const LabelMap& map, bool strict) {
  auto v = read_mhd(path);
  if (auto* raw = std::get_if<ByteVolume>(&v)) return LabelVolume(std::move(*raw), map, strict);
  fail(ErrorCode::UnsupportedType, path.string() + " is not a MET_UCHAR label volume");
}

void write_mhd(const CtVolume& volume, const fs::path& path) {
  write_header(volume.geometry(), "MET_SHORT", path);
  auto vs = volume.voxels();
  std::vector<char> bytes(vs.size() * 2);
  for (std::size_t i = 0; i < vs.size(); ++i) {
    auto u = static_cast<std::uint16_t>(vs[i]);
    bytes[2 * i] = static_cast<char>(u & 0xFF);
    bytes[2 * i + 1] = static_cast<char>(u >> 8);
  }
  write_payload(path, bytes);
}

void write_mhd(const ByteVolume& volume, const fs::path& path) {
  write_header(volume.geometry(), "MET_UCHAR", path);
  auto vs = volume.voxels();
  write_payload(path, std::vector<char>(vs.begin(), vs.end()));
}

BinaryMask to_binary_lung(const LabelVolume& labels) {
  auto vs = labels.voxels();
  std::vector<std::uint8_t> out(vs.size());
  const LabelMap& map = labels.label_map();
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (labels.strict() && vs[i] != 0 && !map.maps(vs[i])) {
      fail(ErrorCode::UnmappedLabel, "label value " + std::to_string(vs[i]) + " is not in the label map");
    }
    out[i] = map.is_lung(vs[i]) ? 1 : 0;
  }
  return BinaryMask(labels.geometry(), std::move(out));
}

}  // namespace lungseg::io
