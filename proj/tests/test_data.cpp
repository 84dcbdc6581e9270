#include <gtest/gtest.h>

#include <jpeglib.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cnnf/data/dataset.hpp"
#include "cnnf/data/image_io.hpp"
#include "cnnf/data/manifest.hpp"
#include "support/gradcheck.hpp"

using namespace cnnf;
namespace fs = std::filesystem;
using testkit::bitwise_equal;

namespace {

Image pattern_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Image img({1, h, w, 3});
  Rng rng(seed);
  for (auto& v : img.data()) v = static_cast<float>(rng.index(256));
  return img;
}

void write_jpeg(const fs::path& path, const Image& img) {
  std::vector<unsigned char> px(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) px[i] = static_cast<unsigned char>(img[i]);
  jpeg_compress_struct c;
  jpeg_error_mgr err;
  c.err = jpeg_std_error(&err);
  jpeg_create_compress(&c);
  FILE* f = std::fopen(path.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  jpeg_stdio_dest(&c, f);
  c.image_width = static_cast<JDIMENSION>(img.w());
  c.image_height = static_cast<JDIMENSION>(img.h());
  c.input_components = 3;
  c.in_color_space = JCS_RGB;
  jpeg_set_defaults(&c);
  jpeg_set_quality(&c, 95, TRUE);
  jpeg_start_compress(&c, TRUE);
  while (c.next_scanline < c.image_height) {
    JSAMPROW row = px.data() + c.next_scanline * img.w() * 3;
    jpeg_write_scanlines(&c, &row, 1);
  }
  jpeg_finish_compress(&c);
  jpeg_destroy_compress(&c);
  std::fclose(f);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("cnnf_test_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Dataset synthetic(const std::vector<std::size_t>& per_class, std::size_t side = 1) {
  Dataset ds;
  std::uint64_t seed = 0;
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i) {
      const std::string id = ds.class_names[c] + "/" + std::to_string(i) + ".png";
      ds.samples.push_back({id, id, int(c), Provenance::original, Transform::none, pattern_image(side, side, ++seed)});
    }
  return ds;
}

}  // namespace

TEST(Image, RotateFourTimesIsIdentity) {
  const auto img = pattern_image(5, 7, 1);
  auto r = img;
  for (int i = 0; i < 4; ++i) r = rotate(r, 90);
  EXPECT_TRUE(bitwise_equal(r, img));
  EXPECT_TRUE(bitwise_equal(rotate(rotate(img, 90), 90), rotate(img, 180)));
  EXPECT_TRUE(bitwise_equal(rotate(rotate(img, 180), 90), rotate(img, 270)));
  EXPECT_EQ(rotate(img, 90).shape(), (Shape4{1, 7, 5, 3}));
  EXPECT_THROW(rotate(img, 45), InvalidArgument);
}

TEST(Image, RotateClockwise) {
  Image img({1, 2, 3, 1}, std::vector<float>{1, 2, 3, 4, 5, 6});
  // 1 2 3      4 1
  // 4 5 6  ->  5 2
  //            6 3
  EXPECT_EQ(rotate(img, 90).buffer(), (std::vector<float>{4, 1, 5, 2, 6, 3}));
  EXPECT_EQ(flip_h(img).buffer(), (std::vector<float>{3, 2, 1, 6, 5, 4}));
  EXPECT_EQ(flip_v(img).buffer(), (std::vector<float>{4, 5, 6, 1, 2, 3}));
}

TEST(Image, FlipTwiceIsIdentity) {
  const auto img = pattern_image(6, 4, 2);
  EXPECT_TRUE(bitwise_equal(flip_h(flip_h(img)), img));
  EXPECT_TRUE(bitwise_equal(flip_v(flip_v(img)), img));
  EXPECT_TRUE(bitwise_equal(flip_v(flip_h(img)), rotate(img, 180)));
}

TEST(Image, ResizeSameSizeIsIdentity) {
  const auto img = pattern_image(9, 11, 3);
  EXPECT_TRUE(bitwise_equal(resize_bicubic(img, 9, 11), img));
}

TEST(Image, ResizeConstantStaysConstant) {
  Image img({1, 13, 17, 3}, 77.0f);
  for (auto [h, w] : {std::pair{224, 224}, std::pair{5, 3}, std::pair{26, 34}}) {
    const auto out = resize_bicubic(img, h, w);
    EXPECT_EQ(out.shape(), (Shape4{1, std::size_t(h), std::size_t(w), 3}));
    for (float v : out.data()) EXPECT_EQ(v, 77.0f);
  }
}

TEST(Image, ResizeCommutesWithFlip) {
  const auto img = pattern_image(10, 14, 4);
  EXPECT_TRUE(bitwise_equal(resize_bicubic(flip_h(img), 23, 31), flip_h(resize_bicubic(img, 23, 31))));
}

TEST(Image, ResizeOutputIsClampedIntegers) {
  Image img({1, 4, 4, 3}, 0.0f);
  for (std::size_t k = 0; k < 3; ++k) img(0, 1, 1, k) = 255.0f;  // sharp peak makes the cubic overshoot
  const auto out = resize_to_224(img);
  EXPECT_EQ(out.shape(), (Shape4{1, 224, 224, 3}));
  for (float v : out.data()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 255.0f);
    EXPECT_EQ(v, std::round(v));
  }
}

TEST(ImageIo, PngRoundTripIsExact) {
  TempDir dir("png");
  const auto img = pattern_image(7, 5, 5);
  write_png(dir.path / "a.png", img);
  EXPECT_TRUE(bitwise_equal(read_image(dir.path / "a.png"), img));
}

TEST(ImageIo, JpegDecodes) {
  TempDir dir("jpg");
  Image img({1, 16, 16, 3}, 128.0f);
  write_jpeg(dir.path / "a.jpg", img);
  const auto back = read_image(dir.path / "a.jpg");
  EXPECT_EQ(back.shape(), img.shape());
  for (float v : back.data()) EXPECT_NEAR(v, 128.0f, 2.0f);
}

TEST(ImageIo, BadFiles) {
  TempDir dir("bad");
  std::ofstream(dir.path / "text.png") << "not an image";
  EXPECT_THROW(read_image(dir.path / "text.png"), InvalidImageError);
  write_png(dir.path / "ok.png", pattern_image(8, 8, 1));
  fs::resize_file(dir.path / "ok.png", 40);
  EXPECT_THROW(read_image(dir.path / "ok.png"), InvalidImageError);
  std::ofstream(dir.path / "empty.jpg").close();
  EXPECT_THROW(read_image(dir.path / "empty.jpg"), InvalidImageError);
  EXPECT_THROW(read_image(dir.path / "missing.png"), InvalidImageError);
}

TEST(LoadDataset, ReadsClassDirectoriesSkipsBadFiles) {
  TempDir dir("load");
  fs::create_directories(dir.path / "creamy");
  fs::create_directories(dir.path / "whole");
  write_png(dir.path / "creamy" / "b.png", pattern_image(10, 12, 1));
  write_jpeg(dir.path / "creamy" / "a.jpg", pattern_image(20, 8, 2));
  write_png(dir.path / "whole" / "x.png", pattern_image(5, 5, 3));
  std::ofstream(dir.path / "whole" / "broken.png") << "garbage";
  LoadReport rep;
  const auto ds = load_dataset(dir.path, LoadOptions{food_state_names(), 16}, &rep);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(rep.loaded, 3u);
  ASSERT_EQ(rep.skipped.size(), 1u);
  EXPECT_NE(rep.skipped[0].find("broken.png"), std::string::npos);
  EXPECT_EQ(ds.samples[0].id, "creamy/a.jpg");  // sorted order
  EXPECT_EQ(ds.samples[1].id, "creamy/b.png");
  EXPECT_EQ(ds.samples[2].label, int(ClassLabel::whole));
  for (const auto& s : ds.samples) EXPECT_EQ(s.image.shape(), (Shape4{1, 16, 16, 3}));
  EXPECT_EQ(rep.warnings.size(), 5u);  // five classes without a directory
}

TEST(LoadDataset, UnknownClassDirectory) {
  TempDir dir("unknown");
  fs::create_directories(dir.path / "boiled");
  EXPECT_THROW(load_dataset(dir.path), LabelError);
  EXPECT_THROW(load_dataset(dir.path / "nope"), DataError);
}

TEST(Labels, ClassIndex) {
  EXPECT_EQ(food_state_names().size(), 7u);
  EXPECT_EQ(class_index(food_state_names(), "julienne"), 4);
  EXPECT_THROW(class_index(food_state_names(), "boiled"), LabelError);
}

TEST(Augment, ExactTargetSize) {
  // one tiny image per sample keeps this cheap; only counts matter here
  const auto ds = synthetic({854, 854, 854, 854, 854, 854, 854});
  ASSERT_EQ(ds.size(), 5978u);
  AugmentConfig cfg;
  cfg.target_size = 10547;
  cfg.seed = 5;
  const auto out = augment(ds, cfg);
  EXPECT_EQ(out.size(), 10547u);
  std::size_t originals = 0;
  std::set<std::string> ids;
  for (const auto& s : out.samples) {
    originals += s.provenance == Provenance::original;
    EXPECT_TRUE(ids.insert(s.id).second);
  }
  EXPECT_EQ(originals, 5978u);
  const auto again = augment(ds, cfg);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.samples[i].id, again.samples[i].id);
  cfg.target_size = 5978 * 5 + 1;
  EXPECT_THROW(augment(ds, cfg), InvalidArgument);
  cfg.target_size = 100;
  EXPECT_THROW(augment(ds, cfg), InvalidArgument);
}

TEST(Augment, AllTransformsByDefault) {
  const auto ds = synthetic({2, 1, 1, 1, 1, 1, 1}, 3);
  const auto out = augment(ds, AugmentConfig{});
  EXPECT_EQ(out.size(), ds.size() * 5);
  EXPECT_EQ(out.samples[1].transform, Transform::flip_h);
  EXPECT_TRUE(bitwise_equal(out.samples[1].image, flip_h(ds.samples[0].image)));
  EXPECT_TRUE(bitwise_equal(out.samples[3].image, rotate(ds.samples[0].image, 180)));
  EXPECT_EQ(out.samples[4].source, ds.samples[0].source);
}

TEST(Oversample, EqualizesClassCounts) {
  const auto ds = synthetic({5, 2, 9, 1, 3, 9, 4});
  const auto out = oversample_balance(ds, 3);
  for (auto c : out.class_counts()) EXPECT_EQ(c, 9u);
  for (std::size_t i = ds.size(); i < out.size(); ++i) EXPECT_EQ(out.samples[i].provenance, Provenance::oversampled);
  const auto again = oversample_balance(ds, 3);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.samples[i].id, again.samples[i].id);
  EXPECT_THROW(oversample_balance(synthetic({5, 0, 1, 1, 1, 1, 1}), 1), BalanceError);
}

TEST(Split, NinetyTenPerClassWithoutLeakage) {
  const auto ds = synthetic({100, 50, 31, 10, 7, 2, 20});
  const auto m = split(ds, 0.9, 11);
  std::vector<std::size_t> tr(7, 0), va(7, 0);
  for (const auto& e : m.train) ++tr[std::size_t(class_index(ds.class_names, e.label))];
  for (const auto& e : m.val) ++va[std::size_t(class_index(ds.class_names, e.label))];
  const std::vector<std::size_t> counts{100, 50, 31, 10, 7, 2, 20};
  for (std::size_t c = 0; c < 7; ++c) {
    EXPECT_EQ(tr[c] + va[c], counts[c]);
    EXPECT_EQ(tr[c], std::size_t(std::lround(0.9 * double(counts[c])))) << c;
  }
  EXPECT_NO_THROW(check_no_leakage(m));
  EXPECT_EQ(split(ds, 0.9, 11), m);
  EXPECT_FALSE(split(ds, 0.9, 12) == m);
}

TEST(Split, SingletonClassWarns) {
  const auto m = split(synthetic({1, 3, 3, 3, 3, 3, 3}), 0.9, 0);
  EXPECT_EQ(m.warnings.size(), 1u);
  EXPECT_THROW(split(Dataset{}, 0.9, 0), DataError);
}

TEST(Split, LeakageDetected) {
  const auto ds = synthetic({3, 3, 3, 3, 3, 3, 3});
  auto m = split(ds, 0.7, 1);
  auto bad = m;
  bad.val.push_back(bad.train.front());
  EXPECT_THROW(check_no_leakage(bad), DataError);
  bad = m;
  auto copy = bad.train.front();
  copy.id += "#flip_h";
  copy.provenance = Provenance::augmented;
  bad.val.push_back(copy);
  EXPECT_THROW(check_no_leakage(bad), DataError);
  bad = m;
  auto sibling = bad.train.front();
  sibling.id = "other";
  bad.val.push_back(sibling);
  EXPECT_THROW(check_no_leakage(bad), DataError);
}

TEST(Split, AugmentOnlyTrainAfterSplit) {
  const auto ds = synthetic({10, 10, 10, 10, 10, 10, 10});
  auto m = split(ds, 0.9, 2);
  auto train = augment(select(ds, m.train), AugmentConfig{});
  m.train = entries_of(train);
  EXPECT_NO_THROW(check_no_leakage(m));
  EXPECT_EQ(m.train.size(), 63u * 5);
}

TEST(Manifest, JsonRoundTrip) {
  auto m = split(synthetic({3, 3, 3, 3, 3, 3, 3}), 0.6, 9);
  m.train.back().provenance = Provenance::oversampled;
  m.train.back().transform = Transform::rot270;
  const auto text = manifest_to_string(m);
  EXPECT_EQ(manifest_from_string(text), m);
  EXPECT_NE(text.find("\"oversampled-copy\""), std::string::npos);
  EXPECT_THROW(manifest_from_string("{"), ParseError);
  EXPECT_THROW(manifest_from_string("{\"seed\": 1}"), ParseError);
}

TEST(Mean, PerPixelAndPerChannel) {
  auto ds = synthetic({2, 1, 0, 0, 0, 0, 0}, 2);
  const auto mean = compute_mean(ds.samples);
  for (std::size_t i = 0; i < mean.size(); ++i)
    EXPECT_FLOAT_EQ(mean[i], (ds.samples[0].image[i] + ds.samples[1].image[i] + ds.samples[2].image[i]) / 3.0f);
  const auto ch = compute_mean(ds.samples, MeanMode::per_channel);
  EXPECT_EQ(ch.shape(), (Shape4{1, 1, 1, 3}));
  double s0 = 0;
  for (const auto& smp : ds.samples)
    for (std::size_t i = 0; i < smp.image.size(); i += 3) s0 += smp.image[i];
  EXPECT_NEAR(ch[0], s0 / 12.0, 1e-4);
  subtract_mean(ds, mean);
  const auto zero = compute_mean(ds.samples);
  for (float v : zero.data()) EXPECT_NEAR(v, 0.0f, 1e-4);
  EXPECT_THROW(compute_mean({}), DataError);
}

TEST(Batches, OrderIsSeededPermutation) {
  const auto b = batch_order(103, 50, 7, 1);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[2].size(), 3u);
  std::vector<std::size_t> all;
  for (const auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 103; ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(batch_order(103, 50, 7, 1), b);
  EXPECT_NE(batch_order(103, 50, 7, 2), b);
  EXPECT_THROW(batch_order(3, 0, 1, 1), InvalidArgument);
}

TEST(Batches, AssembleStacksSamples) {
  const auto ds = synthetic({1, 1, 1, 0, 0, 0, 0}, 2);
  const auto b = assemble_batch<double>(ds.samples, {2, 0});
  EXPECT_EQ(b.images.shape(), (Shape4{2, 2, 2, 3}));
  EXPECT_EQ(b.labels, (std::vector<int>{2, 0}));
  EXPECT_EQ(b.images(0, 1, 1, 2), double(ds.samples[2].image(0, 1, 1, 2)));
  EXPECT_THROW(assemble_batch<float>(ds.samples, {}), DataError);
}
