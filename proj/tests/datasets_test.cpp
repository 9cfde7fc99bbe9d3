#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "kgnn/datasets.hpp"
#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

using namespace kgnn;
using namespace kgnn::data;

namespace {

const std::string kDataDir = KGNN_TEST_DATA_DIR;

std::vector<std::string> fixture_labels() {
  std::ifstream in(kDataDir + "/roadsign_labels.txt");
  std::vector<std::string> out;
  for (std::string s; in >> s;) out.push_back(s);
  return out;
}

std::vector<ClassDef> fixture_defs() {
  return class_defs_from_kg(kg::load_triples_file(kDataDir + "/roadsign.nt"), fixture_labels());
}

LabeledDataset toy_dataset(const std::vector<std::size_t>& per_class, std::uint64_t seed) {
  LabeledDataset ds;
  Rng rng(seed);
  for (std::size_t c = 0; c < per_class.size(); ++c) ds.label_names.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      Image img(kImagePixels);
      for (float& v : img) v = static_cast<float>(rng.uniform());
      ds.add(img, c);
    }
  return ds;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("kgnn_datasets_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::vector<std::size_t> class_counts(const LabeledDataset& ds) {
  std::vector<std::size_t> n(ds.label_names.size());
  for (std::size_t l : ds.labels) ++n[l];
  return n;
}

}  // namespace

TEST(ClassDefs, ReadFromFixtureKg) {
  const auto defs = fixture_defs();
  ASSERT_EQ(defs.size(), 20u);
  const auto stop = std::find_if(defs.begin(), defs.end(), [](const ClassDef& d) { return d.label == "stop"; });
  ASSERT_NE(stop, defs.end());
  EXPECT_EQ(stop->shape, "octagon");
  EXPECT_EQ(stop->fill, "red");
  EXPECT_EQ(stop->border, "white");
  EXPECT_EQ(stop->icon, "bar_h");
  // Every class has a distinct attribute tuple.
  std::set<std::string> tuples;
  for (const ClassDef& d : defs) tuples.insert(d.shape + d.fill + d.border + d.icon);
  EXPECT_EQ(tuples.size(), defs.size());
}

TEST(ClassDefs, MissingLinkIsMappingError) {
  const auto kg = kg::load_triples_file(kDataDir + "/roadsign.nt");
  EXPECT_THROW(class_defs_from_kg(kg, {"no_such_sign"}), MappingError);
}

TEST(GenerateSynthetic, EmptyKeepsLabelNames) {
  const auto ds = generate_synthetic(fixture_defs(), 0, 1);
  EXPECT_EQ(ds.size(), 0u);
  EXPECT_EQ(ds.label_names, fixture_labels());
}

TEST(GenerateSynthetic, DeterministicAndInRange) {
  const auto a = generate_synthetic(fixture_defs(), 3, 7), b = generate_synthetic(fixture_defs(), 3, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 60u);
  EXPECT_TRUE(std::all_of(a.pixels.begin(), a.pixels.end(), [](float v) { return v >= 0 && v <= 1; }));
  EXPECT_NE(a, generate_synthetic(fixture_defs(), 3, 8));
}

TEST(GenerateSynthetic, UnknownGlyph) {
  auto defs = fixture_defs();
  defs[0].shape = "hexagon";
  EXPECT_THROW(generate_synthetic(defs, 1, 1), ConfigError);
  defs = fixture_defs();
  defs[0].icon = "smiley";
  EXPECT_THROW(generate_synthetic(defs, 1, 1), ConfigError);
  defs = fixture_defs();
  defs[0].fill = "mauve";
  EXPECT_THROW(generate_synthetic(defs, 1, 1), ConfigError);
}

TEST(GenerateSynthetic, ClassHistogramsStableAcrossSeeds) {
  // 8 bins per channel; total variation distance between per-class histograms.
  auto hist = [](const LabeledDataset& ds, std::size_t c) {
    std::vector<double> h(24, 0.0);
    double n = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] != c) continue;
      const auto img = ds.image(i);
      for (std::size_t p = 0; p < kImagePixels; ++p) {
        h[(p / (kImageSide * kImageSide)) * 8 + std::min<std::size_t>(7, static_cast<std::size_t>(img[p] * 8))] += 1;
        n += 1;
      }
    }
    for (double& v : h) v /= n;
    return h;
  };
  const auto defs = fixture_defs();
  const auto a = generate_synthetic(defs, 40, 1), b = generate_synthetic(defs, 40, 2), c = generate_synthetic(defs, 40, 3);
  for (std::size_t cls = 0; cls < defs.size(); ++cls) {
    const auto ha = hist(a, cls), hb = hist(b, cls), hc = hist(c, cls);
    double tv_ab = 0, tv_ac = 0;
    for (std::size_t i = 0; i < ha.size(); ++i) {
      tv_ab += std::abs(ha[i] - hb[i]);
      tv_ac += std::abs(ha[i] - hc[i]);
    }
    // Three channels of distributions summing to 1 each.
    EXPECT_LE(tv_ab / 2 / 3, 0.05) << defs[cls].label;
    EXPECT_LE(tv_ac / 2 / 3, 0.05) << defs[cls].label;
  }
}

TEST(ShiftDomain, ZeroSpecIsIdentity) {
  const auto ds = generate_synthetic(fixture_defs(), 2, 3);
  const auto out = shift_domain(ds, {}, 5, "target");
  EXPECT_EQ(out.pixels, ds.pixels);
  EXPECT_EQ(out.labels, ds.labels);
  EXPECT_EQ(out.domain_tag, "target");
}

TEST(ShiftDomain, NoiseMagnitude) {
  LabeledDataset ds;
  ds.label_names = {"gray"};
  ds.add(Image(kImagePixels, 0.5f), 0);
  DomainShiftSpec spec;
  spec.noise_sigma = 0.1;
  const auto out = shift_domain(ds, spec, 9, "noisy");
  double mad = 0;
  for (std::size_t p = 0; p < 1000; ++p) mad += std::abs(out.pixels[p] - 0.5);
  mad /= 1000;
  EXPECT_GE(mad, 0.05);
  EXPECT_LE(mad, 0.12);
}

TEST(ShiftDomain, LabelsUnchangedAndRangeKept) {
  const auto ds = generate_synthetic(fixture_defs(), 2, 4);
  DomainShiftSpec spec{0.2, 2, 90, 0.3};
  const auto out = shift_domain(ds, spec, 1, "t");
  EXPECT_EQ(out.labels, ds.labels);
  EXPECT_EQ(out.label_names, ds.label_names);
  EXPECT_TRUE(std::all_of(out.pixels.begin(), out.pixels.end(), [](float v) { return v >= 0 && v <= 1; }));
  EXPECT_EQ(out, shift_domain(ds, spec, 1, "t"));
}

TEST(ShiftDomain, HueRotationKeepsGray) {
  LabeledDataset ds;
  ds.label_names = {"g"};
  ds.add(Image(kImagePixels, 0.25f), 0);
  DomainShiftSpec spec;
  spec.hue_degrees = 120;
  const auto out = shift_domain(ds, spec, 0, "t");
  for (float v : out.pixels) EXPECT_NEAR(v, 0.25f, 1e-6);
}

TEST(AugmentPair, ZeroStrengthIsIdentity) {
  const auto ds = generate_synthetic(fixture_defs(), 1, 5);
  const AugmentationSpec none{0, 0, 0, 0};
  const auto [a, b] = augment_pair(ds.image(0), none, 3);
  const Image orig(ds.image(0).begin(), ds.image(0).end());
  EXPECT_EQ(a, orig);
  EXPECT_EQ(b, orig);
}

TEST(AugmentPair, SeededAndShapeKept) {
  const auto ds = generate_synthetic(fixture_defs(), 1, 6);
  const AugmentationSpec spec;
  const auto p1 = augment_pair(ds.image(0), spec, 11), p2 = augment_pair(ds.image(0), spec, 11);
  const auto p3 = augment_pair(ds.image(0), spec, 12);
  EXPECT_EQ(p1, p2);
  EXPECT_NE(p1, p3);
  EXPECT_EQ(p1.first.size(), kImagePixels);
  EXPECT_NE(p1.first, p1.second);
  EXPECT_TRUE(std::all_of(p1.first.begin(), p1.first.end(), [](float v) { return v >= 0 && v <= 1; }));
}

TEST(AugmentPair, CropShiftsContent) {
  // Pure crop: the view is the input translated by at most pad pixels with zero fill.
  Image img(kImagePixels);
  for (std::size_t i = 0; i < kImagePixels; ++i) img[i] = static_cast<float>(i % 97) / 97.0f;
  const AugmentationSpec crop{4, 0, 0, 0};
  const auto [a, b] = augment_pair(img, crop, 21);
  bool matched = false;
  for (long dy = -4; dy <= 4 && !matched; ++dy)
    for (long dx = -4; dx <= 4 && !matched; ++dx) {
      bool ok = true;
      for (long y = 0; y < 32 && ok; ++y)
        for (long x = 0; x < 32 && ok; ++x) {
          const long sx = x + dx, sy = y + dy;
          const float want = (sx >= 0 && sx < 32 && sy >= 0 && sy < 32) ? img[static_cast<std::size_t>(sy * 32 + sx)] : 0.0f;
          ok = a[static_cast<std::size_t>(y * 32 + x)] == want;
        }
      matched = ok;
    }
  EXPECT_TRUE(matched);
}

TEST(ContrastiveBatch, PairingAndMultiset) {
  const auto ds = toy_dataset({5, 5, 5, 5}, 1);
  const auto b = make_contrastive_batch(ds, 6, AugmentationSpec{}, 3);
  ASSERT_EQ(b.labels.size(), 12u);
  EXPECT_EQ(b.images.shape(), (Shape{12, 3, 32, 32}));
  for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(b.labels[2 * j], b.labels[2 * j + 1]);
}

TEST(ContrastiveBatch, StratifiedDraw) {
  const auto ds = toy_dataset({10, 10, 10, 10}, 2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = make_contrastive_batch(ds, 8, AugmentationSpec{}, seed);
    std::map<std::size_t, std::size_t> n;
    for (std::size_t l : b.labels) ++n[l];
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(n[c], 4u);
  }
}

TEST(ContrastiveBatch, OriginalsDistinctAndViewsFromSameImage) {
  const auto ds = toy_dataset({3, 3, 3}, 3);
  const AugmentationSpec none{0, 0, 0, 0};
  const auto b = make_contrastive_batch(ds, 9, none, 4);
  std::set<std::vector<double>> seen;
  for (std::size_t j = 0; j < 9; ++j) {
    const auto v1 = b.images.row(2 * j), v2 = b.images.row(2 * j + 1);
    EXPECT_EQ(v1, v2);
    seen.insert(std::vector<double>(v1.data().begin(), v1.data().end()));
  }
  EXPECT_EQ(seen.size(), 9u);
}

TEST(ContrastiveBatch, Errors) {
  const auto ds = toy_dataset({2, 2}, 4);
  EXPECT_THROW(make_contrastive_batch(ds, 5, AugmentationSpec{}, 1), SamplingError);
  EXPECT_THROW(make_contrastive_batch(ds, 0, AugmentationSpec{}, 1), SamplingError);
  EXPECT_EQ(make_contrastive_batch(ds, 1, AugmentationSpec{}, 1).labels.size(), 2u);
}

TEST(Subsets, OneShotAndFiveShotOverManyClasses) {
  const auto ds = toy_dataset(std::vector<std::size_t>(58, 6), 5);
  const auto one = kshot_subset(ds, 1, 1);
  EXPECT_EQ(one.size(), 58u);
  for (std::size_t n : class_counts(one)) EXPECT_EQ(n, 1u);
  const auto five = kshot_subset(ds, 5, 1);
  EXPECT_EQ(five.size(), 290u);
  for (std::size_t n : class_counts(five)) EXPECT_EQ(n, 5u);
}

TEST(Subsets, KShotShortClassNamed) {
  const auto ds = toy_dataset({4, 2, 4}, 6);
  try {
    kshot_subset(ds, 3, 1);
    FAIL();
  } catch (const SamplingError& e) {
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
  }
}

TEST(Subsets, FullFractionIsPermutation) {
  const auto ds = toy_dataset({3, 4, 5}, 7);
  const auto all = fraction_subset(ds, 1.0, 3);
  ASSERT_EQ(all.size(), ds.size());
  std::multiset<std::vector<float>> a, b;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    a.insert(std::vector<float>(ds.image(i).begin(), ds.image(i).end()));
    b.insert(std::vector<float>(all.image(i).begin(), all.image(i).end()));
  }
  EXPECT_EQ(a, b);
  EXPECT_NE(all.labels, ds.labels);
}

TEST(Subsets, FractionRemainderRule) {
  // n = 30, 10% -> 3; per-class floors (0.5, 0.9, 1.6) -> 0, 0, 1; remainder 2 to
  // the two largest classes in size order (16 then 9).
  const auto ds = toy_dataset({5, 9, 16}, 8);
  const auto sub = fraction_subset(ds, 0.1, 2);
  EXPECT_EQ(sub.size(), 3u);
  EXPECT_EQ(class_counts(sub), (std::vector<std::size_t>{0, 1, 2}));
  // Ties go to the lowest class index.
  const auto tie = fraction_subset(toy_dataset({5, 5, 5, 5}, 9), 0.5, 2);
  EXPECT_EQ(class_counts(tie), (std::vector<std::size_t>{3, 3, 2, 2}));
  EXPECT_THROW(fraction_subset(ds, 0.0, 1), ConfigError);
  EXPECT_THROW(fraction_subset(ds, 1.5, 1), ConfigError);
}

TEST(Subsets, FilterClassesReindexes) {
  const auto ds = toy_dataset({2, 3, 4}, 10);
  const auto f = filter_classes(ds, {"c2", "c0"});
  EXPECT_EQ(f.label_names, (std::vector<std::string>{"c2", "c0"}));
  EXPECT_EQ(class_counts(f), (std::vector<std::size_t>{4, 2}));
}

TEST(DatasetIo, RoundTripAndFileSize) {
  auto ds = generate_synthetic(fixture_defs(), 2, 11, "source");
  const auto dir = temp_dir("io");
  save_dataset(ds, dir / "d.kgnd");
  const auto back = load_dataset(dir / "d.kgnd");
  EXPECT_EQ(back, ds);
  std::size_t header = 4 + 4 + 2 + 2 + ds.domain_tag.size();
  for (const auto& n : ds.label_names) header += 2 + n.size();
  EXPECT_EQ(std::filesystem::file_size(dir / "d.kgnd"), header + ds.size() * (3 * 32 * 32 * 4 + 2));
}

TEST(DatasetIo, ManifestRoundTripAndMismatch) {
  const auto ds = toy_dataset({1, 2}, 12);
  const auto dir = temp_dir("manifest");
  save_manifest(ds, dir);
  EXPECT_EQ(load_manifest(dir), ds);
  std::ofstream(dir / "labels.txt") << "c1\nc0\n";
  EXPECT_THROW(load_manifest(dir), FormatError);
}

TEST(DatasetIo, MalformedInputs) {
  const Bytes good = encode_dataset(toy_dataset({1, 1}, 13));
  std::vector<Bytes> bad{{}, Bytes(good.begin(), good.begin() + 3)};
  Bytes magic = good;
  magic[1] = 'Z';
  bad.push_back(magic);
  for (std::size_t cut : {6, 9, 14, 100}) bad.push_back(Bytes(good.begin(), good.begin() + cut));
  bad.push_back(Bytes(good.begin(), good.end() - 1));
  Bytes extra = good;
  extra.push_back(0);
  bad.push_back(extra);
  Bytes label = good;
  label[label.size() - 1] = 0x7f;
  bad.push_back(label);
  Bytes nan = good;
  const std::size_t first_pixel = good.size() - 2 * (kImagePixels * 4 + 2);
  nan[first_pixel + 3] = 0x7f;
  nan[first_pixel + 2] = 0xc0;
  bad.push_back(nan);
  for (const Bytes& b : bad) EXPECT_THROW(decode_dataset(b), FormatError) << b.size();
  EXPECT_THROW(load_dataset("/nonexistent/x.kgnd"), FormatError);
}
