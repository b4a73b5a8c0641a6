#include "lungseg/nn/weights.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

namespace lungseg::nn {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n) {
    need(n, "record name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  float f32() {
    return std::bit_cast<float>(u32("tensor payload"));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (!has(n)) fail(ErrorCode::DimMismatch, std::string("weight container truncated in ") + what);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(const WeightContainer& container) {
  std::vector<std::uint8_t> out(std::begin(kWeightMagic), std::end(kWeightMagic));
  put_u32(out, static_cast<std::uint32_t>(container.records.size()));
  for (const auto& r : container.records) {
    if (r.values.size() != element_count(r.dims)) {
      fail(ErrorCode::DimMismatch, "record " + r.name + " payload does not match its dims");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (std::size_t d : r.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

WeightContainer decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kWeightMagic, 4) != 0) {
    fail(ErrorCode::BadMagic, "not a weight container (expected LSW1 signature)");
  }
  std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader in(body);
  const std::uint32_t count = in.u32("record count");
  WeightContainer c;
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    WeightRecord r;
    r.name = in.text(in.u32("name length"));
    if (!seen.insert(r.name).second) fail(ErrorCode::NameMismatch, "duplicate record " + r.name);
    const std::uint32_t rank = in.u32("rank");
    for (std::uint32_t d = 0; d < rank; ++d) r.dims.push_back(in.u32("dims"));
    const std::size_t n = element_count(r.dims);
    if (in.remaining() / 4 < n) {
      fail(ErrorCode::DimMismatch, "record " + r.name + " payload shorter than " + format_dims(r.dims));
    }
    r.values.resize(n);
    for (float& v : r.values) v = in.f32();
    c.records.push_back(std::move(r));
  }
  if (in.remaining() != 0) fail(ErrorCode::DimMismatch, "trailing bytes after the last record");
  return c;
}

WeightContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

void write_container(const WeightContainer& container, const std::filesystem::path& path) {
  auto bytes = encode_container(container);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "failed writing " + path.string());
}

template <typename T>
WeightContainer to_container(const ParameterStore<T>& store, const ParamFilter& keep) {
  WeightContainer c;
  for (const auto& p : store) {
    if (keep && !keep(p.name)) continue;
    auto v = p.value.values();
    c.records.push_back({p.name, p.value.dims(), std::vector<float>(v.begin(), v.end())});
  }
  return c;
}

template <typename T>
LoadReport load_into(ParameterStore<T>& store, const WeightContainer& container, bool strict) {
  LoadReport report;
  std::vector<std::pair<ParamId, const WeightRecord*>> plan;
  std::unordered_set<std::string> present;
  for (const auto& r : container.records) {
    present.insert(r.name);
    auto id = store.find(r.name);
    if (!id) {
      report.unmatched.push_back(r.name);
      continue;
    }
    if (store[*id].value.dims() != r.dims) {
      fail(ErrorCode::DimMismatch, "tensor " + r.name + " is " + format_dims(store[*id].value.dims()) +
                                       " in the network but " + format_dims(r.dims) + " in the container");
    }
    plan.emplace_back(*id, &r);
  }
  for (const auto& p : store) {
    if (!present.count(p.name)) report.missing.push_back(p.name);
  }
  if (strict && (!report.unmatched.empty() || !report.missing.empty())) {
    const std::string first = !report.unmatched.empty() ? report.unmatched.front() : report.missing.front();
    fail(ErrorCode::NameMismatch, "weight container does not match the network (first difference: " + first + ")");
  }
  for (auto [id, r] : plan) {
    auto& dst = store[id].value.storage();
    std::copy(r->values.begin(), r->values.end(), dst.begin());
  }
  report.loaded = plan.size();
  return report;
}

template WeightContainer to_container(const ParameterStore<float>&, const ParamFilter&);
template WeightContainer to_container(const ParameterStore<double>&, const ParamFilter&);
template LoadReport load_into(ParameterStore<float>&, const WeightContainer&, bool);
template LoadReport load_into(ParameterStore<double>&, const WeightContainer&, bool);

}  // namespace lungseg::nn
