#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "wsrad/manifest.hpp"
#include "wsrad/nifti.hpp"
#include "wsrad/region.hpp"

namespace fs = std::filesystem;
using namespace wsrad;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "wsrad_io_test";
  fs::create_directories(dir);
  return dir / name;
}

struct Reference {
  Dims3 dims{};
  Spacing3 zooms{};
  std::vector<double> voxels;
};

// Values reported by nibabel for the fixtures in tests/data.
Reference load_reference(const std::string& file) {
  std::ifstream in(fs::path(WSRAD_TEST_DATA_DIR) / "reference_values.txt");
  std::string line;
  Reference ref;
  bool active = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      active = line.substr(2) == file;
      continue;
    }
    if (!active) continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "dims") ss >> ref.dims[0] >> ref.dims[1] >> ref.dims[2];
    if (key == "zooms") ss >> ref.zooms[0] >> ref.zooms[1] >> ref.zooms[2];
    if (key == "voxels")
      for (double v; ss >> v;) ref.voxels.push_back(v);
  }
  return ref;
}

}  // namespace

TEST(Nifti, RoundTripFloat32Ramp) {
  std::vector<double> ramp(64);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 0.25 * static_cast<double>(i) - 3.0;
  Volume v({4, 4, 4}, {1.0, 1.5, 2.0}, ramp);
  const auto p = temp_path("ramp.nii");
  nifti::write_volume(v, p);
  const auto back = nifti::read_volume(p);
  EXPECT_EQ(back, v);
}

TEST(Nifti, RoundTripIsBitExactForFloat32Values) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> nd(0.0f, 1000.0f);
  std::vector<double> vals(3 * 5 * 7);
  for (auto& x : vals) x = static_cast<double>(nd(rng));
  Volume v({3, 5, 7}, {0.5, 0.75, 3.0}, vals);
  const auto p = temp_path("distinct.nii");
  nifti::write_volume(v, p);
  EXPECT_EQ(nifti::read_volume(p), v);
}

TEST(Nifti, ConstantZeroAndSingleVoxel) {
  Volume zeros({2, 2, 2});
  nifti::write_volume(zeros, temp_path("zeros.nii"));
  const auto zeros_back = nifti::read_volume(temp_path("zeros.nii"));
  for (double x : zeros_back.values()) EXPECT_EQ(x, 0.0);

  Volume one({1, 1, 1}, {1, 1, 1}, std::vector<double>{42.5});
  nifti::write_volume(one, temp_path("one.nii"), nifti::Datatype::Float64);
  const auto back = nifti::read_volume(temp_path("one.nii"));
  EXPECT_EQ(back.dims(), (Dims3{1, 1, 1}));
  EXPECT_EQ(back.values()[0], 42.5);
}

TEST(Nifti, MatchesReferenceToolOutput) {
  for (const std::string file : {"ref_int16_scaled.nii", "ref_float32.nii", "ref_labels_uint8.nii"}) {
    SCOPED_TRACE(file);
    const auto ref = load_reference(file);
    ASSERT_FALSE(ref.voxels.empty());
    const auto v = nifti::read_volume(fs::path(WSRAD_TEST_DATA_DIR) / file);
    EXPECT_EQ(v.dims(), ref.dims);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(v.spacing()[i], ref.zooms[i], 1e-12);
    ASSERT_EQ(v.size(), ref.voxels.size());
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v.values()[i], ref.voxels[i], 1e-4) << "voxel " << i;
  }
}

TEST(Nifti, LabelsReadAsIntegers) {
  const auto labels = nifti::read_labels(fs::path(WSRAD_TEST_DATA_DIR) / "ref_labels_uint8.nii");
  EXPECT_EQ(labels(1, 1, 0), 1);
  EXPECT_EQ(labels(0, 0, 1), 4);
  EXPECT_EQ(labels(3, 3, 1), 2);
  EXPECT_THROW(nifti::read_labels(fs::path(WSRAD_TEST_DATA_DIR) / "ref_float32.nii"), FormatError);
}

TEST(Nifti, TruncatedPayloadIsReported) {
  Volume v({4, 4, 4});
  const auto p = temp_path("trunc.nii");
  nifti::write_volume(v, p);
  fs::resize_file(p, fs::file_size(p) - 10);
  try {
    nifti::read_volume(p);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
  }
}

TEST(Nifti, MalformedHeaderFieldsAreNamed) {
  Volume v({2, 2, 2});
  const auto p = temp_path("bad.nii");
  auto corrupt = [&](std::size_t offset, std::int16_t value, const std::string& field) {
    nifti::write_volume(v, p);
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(reinterpret_cast<const char*>(&value), 2);
    f.close();
    try {
      nifti::read_volume(p);
      ADD_FAILURE() << "expected error for " << field;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
    }
  };
  corrupt(70, 32, "datatype");  // complex64 is unsupported
  corrupt(72, 17, "bitpix");
  corrupt(42, 0, "dim[1]");
  corrupt(344, 0x6e69, "magic");
  EXPECT_THROW(nifti::read_volume(temp_path("does_not_exist.nii")), IoError);
}

TEST(Nifti, UnwritablePath) {
  EXPECT_THROW(nifti::write_volume(Volume({1, 1, 1}), "/nonexistent_dir/x.nii"), IoError);
}

// ---------------------------------------------------------------------------

TEST(Manifest, ParsesRowsPerModalityAndCountsGrades) {
  std::ostringstream os;
  os << "patient_id\tgrade\tmodality\timage_path\tmask_path\tage\n";
  for (int i = 0; i < 285; ++i) {
    const std::string id = "P" + std::to_string(i);
    const char* grade = i < 210 ? "HGG" : "LGG";
    for (const char* mod : {"T1", "T2"})
      os << id << '\t' << grade << '\t' << mod << '\t' << id << "_" << mod << ".nii\t" << id << "_seg.nii\t60\n";
  }
  std::istringstream in(os.str());
  const auto m = parse_manifest(in, "/data");
  EXPECT_EQ(m.entries.size(), 285u);
  EXPECT_EQ(m.count(Grade::HGG), 210u);
  EXPECT_EQ(m.count(Grade::LGG), 75u);
  EXPECT_EQ(m.entries[0].images.size(), 2u);
  EXPECT_EQ(m.entries[0].images.at("T2"), fs::path("/data/P0_T2.nii"));
  EXPECT_EQ(m.entries[0].extra.at("age"), "60");
}

TEST(Manifest, Errors) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_manifest(in);
  };
  const std::string header = "patient_id,grade,modality,image_path,mask_path\n";
  EXPECT_THROW(parse(header), FormatError);
  try {
    parse(header + "A,HGG,T1,a.nii,m.nii\nA,HGG,T1,b.nii,m.nii\n");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("'A'"), std::string::npos);
  }
  EXPECT_THROW(parse(header + "A,GBM,T1,a.nii,m.nii\n"), FormatError);
  EXPECT_THROW(parse("patient_id,grade,image_path,mask_path\nA,HGG,a.nii,m.nii\n"), FormatError);
  EXPECT_THROW(parse(header + "A,HGG,DWI,a.nii,m.nii\n"), FormatError);
}

// ---------------------------------------------------------------------------

TEST(Region, VoxelCountMatchesDirectCount) {
  std::mt19937_64 rng(3);
  const std::uint16_t palette[] = {0, 1, 2, 4};
  LabelVolume mask({20, 17, 6});
  for (auto& l : mask.storage()) l = palette[rng() % 4];
  Volume vol({20, 17, 6});
  for (auto& v : vol.storage()) v = static_cast<double>(rng() % 1000) + 1.0;

  const auto intra = extract_region(vol, mask, RegionSpec::intratumoral(), 1);
  const auto peri = extract_region(vol, mask, RegionSpec::peritumoral(), 1);
  std::size_t n14 = 0, n2 = 0;
  for (auto l : mask.values()) {
    n14 += (l == 1 || l == 4);
    n2 += (l == 2);
  }
  EXPECT_EQ(intra.pixel_count(), n14);
  EXPECT_EQ(peri.pixel_count(), n2);

  // Disjoint pixel sets, image zeroed outside the region mask.
  for (std::size_t s = 0; s < intra.slices.size(); ++s) {
    const auto& a = intra.slices[s];
    const auto& b = peri.slices[s];
    ASSERT_EQ(a.slice_index, b.slice_index);
    for (std::size_t r = 0; r < a.mask.rows(); ++r)
      for (std::size_t c = 0; c < a.mask.cols(); ++c) {
        if (!a.mask(r, c)) {
          EXPECT_EQ(a.image(r, c), 0.0);
          continue;
        }
        const long br = static_cast<long>(a.row0 + r) - static_cast<long>(b.row0);
        const long bc = static_cast<long>(a.col0 + c) - static_cast<long>(b.col0);
        if (br >= 0 && bc >= 0 && br < static_cast<long>(b.mask.rows()) && bc < static_cast<long>(b.mask.cols())) {
          EXPECT_EQ(b.mask(static_cast<std::size_t>(br), static_cast<std::size_t>(bc)), 0);
        }
      }
  }
}

TEST(Region, EmptyRegionError) {
  LabelVolume mask({5, 5, 2});
  mask(2, 2, 1) = 1;
  Volume vol({5, 5, 2});
  EXPECT_THROW(extract_region(vol, mask, RegionSpec::peritumoral()), EmptyRegionError);
  EXPECT_THROW(extract_region(vol, LabelVolume({4, 5, 2}), RegionSpec::peritumoral()), InvalidArgument);
}

TEST(Region, PaddedBoundingBox) {
  LabelVolume mask({30, 30, 1});
  for (std::size_t y = 5; y < 16; ++y)
    for (std::size_t x = 5; x < 16; ++x) mask(x, y, 0) = 1;
  Volume vol({30, 30, 1}, {1, 1, 1}, 3.0);
  const auto r = extract_region(vol, mask, RegionSpec::intratumoral(), 2);
  ASSERT_EQ(r.slices.size(), 1u);
  EXPECT_EQ(r.slices[0].mask.rows(), 15u);
  EXPECT_EQ(r.slices[0].mask.cols(), 15u);
  EXPECT_EQ(r.slices[0].row0, 3u);

  // Clipped at the slice border.
  LabelVolume corner({12, 12, 1});
  for (std::size_t y = 0; y < 11; ++y)
    for (std::size_t x = 0; x < 11; ++x) corner(x, y, 0) = 4;
  const auto rc = extract_region(Volume({12, 12, 1}), corner, RegionSpec::intratumoral(), 2);
  EXPECT_EQ(rc.slices[0].mask.rows(), 12u);
  EXPECT_EQ(rc.slices[0].row0, 0u);
}

TEST(Region, OverlappingSpecsRejected) {
  EXPECT_THROW(check_disjoint(RegionSpec{RegionKind::Intratumoral, {1, 2}}, RegionSpec::peritumoral()),
               InvalidArgument);
  EXPECT_NO_THROW(check_disjoint(RegionSpec::intratumoral(), RegionSpec::peritumoral()));
}
