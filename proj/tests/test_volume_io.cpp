#include <gtest/gtest.h>

#include <numeric>

#include "lungseg/volume_io.hpp"
#include "support.hpp"

using namespace lungseg;
using lungseg::testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::BadWeights;
}

void write_header(const std::filesystem::path& path, const std::string& body) {
  lungseg::testing::write_text(path, body);
}

const char* kMinimalHeader =
    "NDims = 3\nDimSize = 1 1 1\nElementSpacing = 1 1 1\nElementType = MET_SHORT\nElementDataFile = x.raw\n";

}  // namespace

TEST(MhdRead, SingleVoxelLittleEndian) {
  TempDir dir;
  write_header(dir / "x.mhd", kMinimalHeader);
  lungseg::testing::write_bytes(dir / "x.raw", {0x18, 0xFC});
  const CtVolume v = io::read_ct(dir / "x.mhd");
  ASSERT_EQ(v.voxels().size(), 1u);
  EXPECT_EQ(v.voxels()[0], -1000);
  EXPECT_EQ(v.geometry().dims, (std::array<std::size_t, 3>{1, 1, 1}));
}

TEST(MhdRead, OriginDefaultsToZeroAndSpacingIsParsed) {
  TempDir dir;
  write_header(dir / "x.mhd",
               "NDims = 3\nDimSize = 2 1 1\nElementSpacing = 0.78 0.78 1.25\nElementType = MET_SHORT\n"
               "ElementDataFile = x.raw\n");
  lungseg::testing::write_bytes(dir / "x.raw", {1, 0, 2, 0});
  const CtVolume v = io::read_ct(dir / "x.mhd");
  EXPECT_EQ(v.geometry().spacing, (std::array<double, 3>{0.78, 0.78, 1.25}));
  EXPECT_EQ(v.geometry().origin, (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(v.at(1, 0, 0), 2);
}

TEST(MhdRead, MissingRequiredKey) {
  TempDir dir;
  write_header(dir / "x.mhd", "NDims = 3\nElementType = MET_SHORT\nElementDataFile = x.raw\n");
  lungseg::testing::write_bytes(dir / "x.raw", {0, 0});
  EXPECT_EQ(code_of([&] { io::read_mhd(dir / "x.mhd"); }), ErrorCode::MissingKey);
}

TEST(MhdRead, PayloadLengthMustMatchHeader) {
  TempDir dir;
  write_header(dir / "x.mhd", kMinimalHeader);
  lungseg::testing::write_bytes(dir / "x.raw", {0x18});
  EXPECT_EQ(code_of([&] { io::read_mhd(dir / "x.mhd"); }), ErrorCode::DimMismatch);
  lungseg::testing::write_bytes(dir / "x.raw", {0x18, 0xFC, 0x00});
  EXPECT_EQ(code_of([&] { io::read_mhd(dir / "x.mhd"); }), ErrorCode::DimMismatch);
}

TEST(MhdRead, RejectsUnsupportedLayouts) {
  TempDir dir;
  lungseg::testing::write_bytes(dir / "x.raw", {0, 0, 0, 0});
  const std::vector<std::string> bad = {
      "NDims = 3\nDimSize = 1 1 1\nElementType = MET_FLOAT\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 1 1 1\nElementType = MET_SHORT\nElementByteOrderMSB = True\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 1 1 1\nElementType = MET_SHORT\nCompressedData = True\nElementDataFile = x.raw\n",
      "NDims = 2\nDimSize = 1 1\nElementType = MET_SHORT\nElementDataFile = x.raw\n",
      "NDims = 3\nDimSize = 1 1 1\nElementType = MET_SHORT\nElementDataFile = LOCAL\n",
      "NDims = three\nDimSize = 1 1 1\nElementType = MET_SHORT\nElementDataFile = x.raw\n",
  };
  for (const auto& h : bad) {
    write_header(dir / "x.mhd", h);
    EXPECT_EQ(code_of([&] { io::read_mhd(dir / "x.mhd"); }), ErrorCode::UnsupportedType) << h;
  }
}

TEST(MhdRead, ReadCtRejectsByteVolumes) {
  TempDir dir;
  io::write_mhd(ByteVolume(lungseg::testing::make_geometry(1, 1, 1), {7}), dir / "m.mhd");
  EXPECT_EQ(code_of([&] { io::read_ct(dir / "m.mhd"); }), ErrorCode::UnsupportedType);
}

TEST(MhdWrite, GoldenHeaderAndPayload) {
  TempDir dir;
  Geometry g;
  g.dims = {1, 1, 1};
  g.spacing = {1, 1, 1};
  g.origin = {0, 0, 0};
  io::write_mhd(CtVolume(g, {0}), dir / "zero.mhd");
  EXPECT_EQ(lungseg::testing::read_text(dir / "zero.mhd"),
            "NDims = 3\n"
            "DimSize = 1 1 1\n"
            "ElementSpacing = 1 1 1\n"
            "Offset = 0 0 0\n"
            "ElementType = MET_SHORT\n"
            "ElementByteOrderMSB = False\n"
            "ElementDataFile = zero.raw\n");
  EXPECT_EQ(lungseg::testing::read_bytes(dir / "zero.raw"), (std::vector<std::uint8_t>{0x00, 0x00}));
}

TEST(MhdWrite, ShortestRoundTripDecimals) {
  TempDir dir;
  io::write_mhd(CtVolume(lungseg::testing::make_geometry(1, 1, 1), {-1000}), dir / "v.mhd");
  const auto text = lungseg::testing::read_text(dir / "v.mhd");
  EXPECT_NE(text.find("ElementSpacing = 0.78 0.78 1.25\n"), std::string::npos);
  EXPECT_NE(text.find("Offset = -200.5 10 -312.25\n"), std::string::npos);
  EXPECT_EQ(lungseg::testing::read_bytes(dir / "v.raw"), (std::vector<std::uint8_t>{0x18, 0xFC}));
}

TEST(MhdWrite, RampRoundTrip) {
  TempDir dir;
  std::vector<std::int16_t> ramp(4 * 3 * 2);
  std::iota(ramp.begin(), ramp.end(), std::int16_t{0});
  const CtVolume v(lungseg::testing::make_geometry(4, 3, 2), ramp);
  io::write_mhd(v, dir / "ramp.mhd");
  const CtVolume back = io::read_ct(dir / "ramp.mhd");
  EXPECT_EQ(back, v);
  EXPECT_EQ(back.at(3, 2, 1), 23);
}

TEST(MhdWrite, RequiresMhdExtension) {
  TempDir dir;
  EXPECT_EQ(code_of([&] { io::write_mhd(CtVolume(lungseg::testing::make_geometry(1, 1, 1), {0}), dir / "x.raw"); }),
            ErrorCode::IoError);
}

TEST(MhdProperty, RandomVolumesRoundTripBitExactly) {
  TempDir dir;
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> dim(1, 9), hu(-32768, 32767), byte(0, 255);
  std::uniform_real_distribution<double> spacing(0.1, 5.0), origin(-500, 500);
  for (int trial = 0; trial < 60; ++trial) {
    Geometry g;
    g.dims = {std::size_t(dim(rng)), std::size_t(dim(rng)), std::size_t(dim(rng))};
    g.spacing = {spacing(rng), spacing(rng), spacing(rng)};
    g.origin = {origin(rng), origin(rng), origin(rng)};
    std::vector<std::int16_t> ct(g.voxel_count());
    for (auto& x : ct) x = static_cast<std::int16_t>(hu(rng));
    std::vector<std::uint8_t> lab(g.voxel_count());
    for (auto& x : lab) x = static_cast<std::uint8_t>(byte(rng));

    const CtVolume v(g, ct);
    io::write_mhd(v, dir / "ct.mhd");
    const CtVolume back = io::read_ct(dir / "ct.mhd");
    ASSERT_EQ(back, v);
    ASSERT_EQ(back.geometry(), g);

    const ByteVolume b(g, lab);
    io::write_mhd(b, dir / "lab.mhd");
    const auto read = io::read_mhd(dir / "lab.mhd");
    ASSERT_TRUE(std::holds_alternative<ByteVolume>(read));
    ASSERT_EQ(std::get<ByteVolume>(read), b);
  }
}

TEST(Labels, TracheaAndBackgroundAreNotLung) {
  LabelMap map{3, 4, 5};
  const Geometry g = lungseg::testing::make_geometry(5, 4, 1);
  std::vector<std::uint8_t> v(20, 0);
  for (int i = 0; i < 10; ++i) v[i] = 3;
  for (int i = 10; i < 17; ++i) v[i] = 4;
  for (int i = 17; i < 20; ++i) v[i] = 5;
  const BinaryMask m = io::to_binary_lung(LabelVolume(ByteVolume(g, v), map, true));
  EXPECT_EQ(m.count(), 17u);

  const BinaryMask only_trachea =
      io::to_binary_lung(LabelVolume(ByteVolume(g, std::vector<std::uint8_t>(20, 5)), map, true));
  EXPECT_EQ(only_trachea.count(), 0u);
  const BinaryMask zeros = io::to_binary_lung(LabelVolume(ByteVolume(g, std::vector<std::uint8_t>(20, 0)), map, true));
  EXPECT_EQ(zeros.count(), 0u);
}

TEST(Labels, StrictModeRejectsUnmappedValues) {
  LabelMap map{3, 4, 5};
  const Geometry g = lungseg::testing::make_geometry(2, 1, 1);
  EXPECT_EQ(code_of([&] { LabelVolume(ByteVolume(g, {3, 9}), map, true); }), ErrorCode::UnmappedLabel);
  const LabelVolume lenient(ByteVolume(g, {3, 9}), map, false);
  EXPECT_EQ(io::to_binary_lung(lenient).count(), 1u);
}

TEST(Labels, LungLabelsMustBeConfigured) {
  const Geometry g = lungseg::testing::make_geometry(1, 1, 1);
  EXPECT_EQ(code_of([&] { LabelVolume(ByteVolume(g, {0}), LabelMap{}, true); }), ErrorCode::InvalidConfig);
}

TEST(Labels, FileRoundTripPreservesEveryValue) {
  TempDir dir;
  const Geometry g = lungseg::testing::make_geometry(16, 16, 1);
  std::vector<std::uint8_t> all(256);
  std::iota(all.begin(), all.end(), std::uint8_t{0});
  io::write_mhd(ByteVolume(g, all), dir / "l.mhd");
  const LabelVolume back = io::read_labels(dir / "l.mhd", LabelMap{1, 2, 3}, false);
  EXPECT_TRUE(std::equal(back.voxels().begin(), back.voxels().end(), all.begin()));
}

TEST(Volume, VoxelCountMustMatchDims) {
  EXPECT_EQ(code_of([] { CtVolume(lungseg::testing::make_geometry(2, 2, 2), std::vector<std::int16_t>(7)); }),
            ErrorCode::DimMismatch);
  EXPECT_EQ(code_of([] { BinaryMask(lungseg::testing::make_geometry(1, 1, 1), {2}); }), ErrorCode::UnsupportedType);
}
