#include "vrn/encoding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "vrn/rng.hpp"

using vrn::Image;
using vrn::Landmark;
using vrn::LandmarkSet;
using vrn::Mask;
using vrn::Rng;
using vrn::Sample;
using vrn::Variant;
using vrn::VoxelGrid;
using Tensor = vrn::Tensor<float>;

namespace {

std::string temp_path(const char* name) {
  return std::string(::testing::TempDir()) + name;
}

// A small sample whose mask is the target's silhouette by construction.
Sample make_sample(int w, int h, int d, uint64_t seed) {
  Sample s;
  s.image = Image(w, h, 3);
  s.target = VoxelGrid(w, h, d);
  Rng rng(seed);
  for (auto& v : s.image.data) v = static_cast<float>(rng.uniform());
  for (int k = 0; k < 5; ++k) {
    // Axis-aligned blobs keep the projection trivially exact.
    const int x0 = static_cast<int>(rng.uniform_int(8, w - 16));
    const int y0 = static_cast<int>(rng.uniform_int(8, h - 16));
    const int z0 = static_cast<int>(rng.uniform_int(0, d - 8));
    for (int z = z0; z < z0 + 7; ++z)
      for (int y = y0; y < y0 + 6; ++y)
        for (int x = x0; x < x0 + 6; ++x) s.target.at(x, y, z) = 1.0f;
  }
  s.mask = vrn::project_silhouette(s.target);
  for (int j = 0; j < vrn::kNumLandmarks; ++j)
    s.landmarks[static_cast<size_t>(j)] = {
        static_cast<double>(rng.uniform_int(10, w - 11)),
        static_cast<double>(rng.uniform_int(10, h - 11)), true};
  return s;
}

double channel_sum(const Tensor& t, int j) {
  const int h = t.extent(1), w = t.extent(2);
  double s = 0.0;
  for (int i = 0; i < h * w; ++i) s += t.data()[j * h * w + i];
  return s;
}

TEST(Heatmaps, PeakOneAtLandmarkPixelAndHalfAtRadiusThree) {
  LandmarkSet lm{};
  lm[0] = {10.0, 12.0, true};
  Tensor hm = vrn::render_landmark_heatmaps<float>(lm, 64, 64);
  ASSERT_EQ(hm.shape(), (std::vector<int>{16, 64, 64}));
  const auto at = [&](int j, int y, int x) {
    return hm.data()[(j * 64 + y) * 64 + x];
  };
  EXPECT_FLOAT_EQ(at(0, 12, 10), 1.0f);
  float mx = 0.0f;
  for (int i = 0; i < 64 * 64; ++i) mx = std::max(mx, hm.data()[i]);
  EXPECT_FLOAT_EQ(mx, 1.0f);
  // sigma makes radius 3 the half-maximum exactly.
  EXPECT_NEAR(at(0, 12, 13), 0.5f, 1e-6);
  EXPECT_NEAR(at(0, 15, 10), 0.5f, 1e-6);
}

TEST(Heatmaps, InvisibleLandmarkYieldsZeroChannel) {
  LandmarkSet lm{};
  lm[0] = {10.0, 10.0, true};
  lm[1] = {20.0, 20.0, false};
  Tensor hm = vrn::render_landmark_heatmaps<float>(lm, 32, 32);
  EXPECT_GT(channel_sum(hm, 0), 0.0);
  EXPECT_EQ(channel_sum(hm, 1), 0.0);
}

TEST(Heatmaps, SubpixelPositionsRoundToNearestPixel) {
  LandmarkSet lm{};
  lm[3] = {10.4, 9.6, true};
  Tensor hm = vrn::render_landmark_heatmaps<float>(lm, 32, 32);
  EXPECT_FLOAT_EQ(hm.data()[(3 * 32 + 10) * 32 + 10], 1.0f);
}

TEST(Heatmaps, ChannelSumIsTranslationInvariantForInteriorLandmarks) {
  LandmarkSet a{}, b{};
  a[5] = {20.0, 20.0, true};
  b[5] = {25.0, 28.0, true};
  Tensor ha = vrn::render_landmark_heatmaps<float>(a, 64, 64);
  Tensor hb = vrn::render_landmark_heatmaps<float>(b, 64, 64);
  EXPECT_NEAR(channel_sum(ha, 5), channel_sum(hb, 5), 1e-3);
}

TEST(Heatmaps, BadDimsRejected) {
  LandmarkSet lm{};
  EXPECT_THROW(vrn::render_landmark_heatmaps<float>(lm, 0, 32), vrn::UsageError);
}

TEST(FlipPairs, LeftRightSwapIsAnInvolution) {
  for (int j = 0; j < vrn::kNumLandmarks; ++j) {
    EXPECT_EQ(vrn::flipped_landmark(vrn::flipped_landmark(j)), j);
    const std::string name = vrn::landmark_names()[static_cast<size_t>(j)];
    const std::string other =
        vrn::landmark_names()[static_cast<size_t>(vrn::flipped_landmark(j))];
    if (name.rfind("l_", 0) == 0)
      EXPECT_EQ(other, "r_" + name.substr(2));
    else if (name.rfind("r_", 0) == 0)
      EXPECT_EQ(other, "l_" + name.substr(2));
    else
      EXPECT_EQ(other, name);
  }
}

TEST(Assemble, GuidedStacksImageAndHeatmaps) {
  Sample s = make_sample(64, 64, 32, 7);
  Tensor x = vrn::assemble_input<float>(Variant::kMultistack, s);
  ASSERT_EQ(x.shape(), (std::vector<int>{19, 64, 64}));
  EXPECT_FLOAT_EQ(x.data()[0], s.image.data[0]);
  Tensor hm = vrn::render_landmark_heatmaps<float>(s.landmarks, 64, 64);
  EXPECT_FLOAT_EQ(x.data()[3 * 64 * 64], hm.data()[0]);
  Tensor g = vrn::assemble_input<float>(Variant::kVrnGuided, s);
  ASSERT_EQ(g.shape(), (std::vector<int>{19, 64, 64}));
}

TEST(Assemble, AblationVariantsTakeTheirSingleCue) {
  Sample s = make_sample(48, 48, 16, 8);
  Tensor img = vrn::assemble_input<float>(Variant::kImageOnly, s);
  ASSERT_EQ(img.shape(), (std::vector<int>{3, 48, 48}));
  Tensor msk = vrn::assemble_input<float>(Variant::kMaskOnly, s);
  ASSERT_EQ(msk.shape(), (std::vector<int>{1, 48, 48}));
  for (int i = 0; i < 48 * 48; ++i)
    EXPECT_EQ(msk.data()[i], static_cast<float>(s.mask.data[i]));

  Tensor lmk = vrn::assemble_input<float>(Variant::kLandmarksOnly, s);
  ASSERT_EQ(lmk.shape(), (std::vector<int>{16, 48, 48}));
  Sample blank = s;
  std::fill(blank.image.data.begin(), blank.image.data.end(), 0.0f);
  Tensor lmk2 = vrn::assemble_input<float>(Variant::kLandmarksOnly, blank);
  for (long long i = 0; i < lmk.numel(); ++i)
    ASSERT_EQ(lmk.data()[i], lmk2.data()[i]);
}

TEST(Assemble, MismatchedSampleRejected) {
  Sample s = make_sample(32, 32, 16, 9);
  s.mask = Mask(16, 32);
  EXPECT_THROW(vrn::assemble_input<float>(Variant::kMultistack, s),
               vrn::UsageError);
  Sample t = make_sample(32, 32, 16, 9);
  t.target = VoxelGrid(32, 24, 16);
  EXPECT_THROW(vrn::assemble_input<float>(Variant::kMaskOnly, t),
               vrn::UsageError);
}

TEST(Silhouette, SingleVoxelProjectsToSinglePixel) {
  VoxelGrid g(8, 8, 8);
  g.at(3, 5, 2) = 1.0f;
  Mask m = vrn::project_silhouette(g);
  int on = 0;
  for (auto v : m.data) on += v;
  EXPECT_EQ(on, 1);
  EXPECT_EQ(m.at(5, 3), 1);
}

TEST(Silhouette, FullGridProjectsToFullMask) {
  VoxelGrid g(4, 6, 2);
  std::fill(g.values.begin(), g.values.end(), 1.0f);
  Mask m = vrn::project_silhouette(g);
  for (auto v : m.data) EXPECT_EQ(v, 1);
}

TEST(Silhouette, MaskIouCountsAndRejectsMismatch) {
  Mask a(4, 4), b(4, 4);
  EXPECT_EQ(vrn::mask_iou(a, b), 1.0);
  a.at(0, 0) = 1;
  b.at(0, 0) = 1;
  b.at(1, 1) = 1;
  EXPECT_DOUBLE_EQ(vrn::mask_iou(a, b), 0.5);
  EXPECT_THROW(vrn::mask_iou(a, Mask(4, 5)), vrn::UsageError);
}

TEST(Augment, ZeroTranslationIsIdentity) {
  Sample s = make_sample(48, 48, 24, 11);
  Sample t = vrn::translate_sample(s, 0, 0);
  EXPECT_EQ(t.image.data, s.image.data);
  EXPECT_EQ(t.mask.data, s.mask.data);
  EXPECT_EQ(t.target.values, s.target.values);
  for (int j = 0; j < vrn::kNumLandmarks; ++j) {
    EXPECT_EQ(t.landmarks[j].x, s.landmarks[j].x);
    EXPECT_EQ(t.landmarks[j].visible, s.landmarks[j].visible);
  }
}

TEST(Augment, TranslationMovesEveryFieldTogether) {
  Sample s = make_sample(48, 48, 24, 12);
  Sample t = vrn::translate_sample(s, 5, -3);
  EXPECT_EQ(t.image.at(0, 10, 20), s.image.at(0, 13, 15));
  EXPECT_EQ(t.mask.at(10, 20), s.mask.at(13, 15));
  EXPECT_EQ(t.target.at(20, 10, 7), s.target.at(15, 13, 7));
  // Zero fill on the uncovered strip.
  EXPECT_EQ(t.image.at(1, 20, 2), 0.0f);
  EXPECT_EQ(t.target.at(2, 20, 3), 0.0f);
  EXPECT_EQ(t.landmarks[0].x, s.landmarks[0].x + 5);
  EXPECT_EQ(t.landmarks[0].y, s.landmarks[0].y - 3);
}

TEST(Augment, LandmarksPushedOutOfFrameGoInvisible) {
  Sample s = make_sample(32, 32, 16, 13);
  s.landmarks[2] = {30.0, 16.0, true};
  Sample t = vrn::translate_sample(s, 4, 0);
  EXPECT_FALSE(t.landmarks[2].visible);
  EXPECT_TRUE(t.landmarks[3].visible);
}

TEST(Augment, DoubleFlipIsIdentity) {
  Sample s = make_sample(40, 40, 20, 14);
  s.landmarks[4].visible = false;  // one hidden joint survives relabeling
  Sample f = vrn::flip_sample(s);
  EXPECT_NE(f.image.data, s.image.data);
  EXPECT_EQ(f.landmarks[4].x, 40.0 - 1.0 - s.landmarks[5].x);
  EXPECT_EQ(f.landmarks[4].visible, s.landmarks[5].visible);
  EXPECT_EQ(f.landmarks[0].x, 40.0 - 1.0 - s.landmarks[0].x);
  Sample ff = vrn::flip_sample(f);
  EXPECT_EQ(ff.image.data, s.image.data);
  EXPECT_EQ(ff.mask.data, s.mask.data);
  EXPECT_EQ(ff.target.values, s.target.values);
  for (int j = 0; j < vrn::kNumLandmarks; ++j) {
    EXPECT_EQ(ff.landmarks[j].x, s.landmarks[j].x);
    EXPECT_EQ(ff.landmarks[j].y, s.landmarks[j].y);
    EXPECT_EQ(ff.landmarks[j].visible, s.landmarks[j].visible);
  }
}

TEST(Augment, ColorScalingClampsToUnitRange) {
  Image img(8, 8, 3);
  std::fill(img.data.begin(), img.data.end(), 0.9f);
  vrn::scale_colors(img, {1.3, 0.7, 1.0});
  EXPECT_FLOAT_EQ(img.at(0, 0, 0), 1.0f);
  EXPECT_NEAR(img.at(1, 0, 0), 0.63f, 1e-6);
  EXPECT_FLOAT_EQ(img.at(2, 0, 0), 0.9f);
}

TEST(Augment, DeterministicGivenSeedAndAlignmentPreserved) {
  Sample s = make_sample(64, 64, 48, 15);
  ASSERT_EQ(vrn::mask_iou(vrn::project_silhouette(s.target), s.mask), 1.0);
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng r1(seed), r2(seed);
    Sample a = vrn::augment_sample(s, r1);
    Sample b = vrn::augment_sample(s, r2);
    EXPECT_EQ(a.image.data, b.image.data);
    EXPECT_EQ(a.target.values, b.target.values);
    // Integer shifts and flips commute with the orthographic projection.
    const double iou = vrn::mask_iou(vrn::project_silhouette(a.target), a.mask);
    EXPECT_GE(iou, 0.99);
    EXPECT_DOUBLE_EQ(iou, 1.0);
  }
  Rng r3(1), r4(2);
  EXPECT_NE(vrn::augment_sample(s, r3).image.data,
            vrn::augment_sample(s, r4).image.data);
}

TEST(RasterIo, PpmRoundTripIsLossless) {
  Rng rng(21);
  Image img(13, 9, 3);
  for (auto& v : img.data)
    v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
  const std::string path = temp_path("enc.ppm");
  vrn::save_ppm(img, path);
  Image back = vrn::load_ppm(path);
  ASSERT_EQ(back.w, 13);
  ASSERT_EQ(back.h, 9);
  EXPECT_EQ(back.data, img.data);
  // Header is the plain three-field form.
  const std::string raw = vrn::detail::read_file(path);
  EXPECT_EQ(raw.substr(0, 11), "P6\n13 9\n255");
  EXPECT_EQ(raw.size(), 12u + 13u * 9u * 3u);
}

TEST(RasterIo, PgmRoundTripAndCommentsAccepted) {
  Mask m(6, 4);
  m.at(0, 0) = m.at(3, 5) = m.at(2, 2) = 1;
  const std::string path = temp_path("enc.pgm");
  vrn::save_pgm(m, path);
  Mask back = vrn::load_pgm(path);
  EXPECT_EQ(back.data, m.data);

  std::string raw = vrn::detail::read_file(path);
  raw.insert(3, "# a comment\n");
  vrn::detail::write_file(path, raw);
  EXPECT_EQ(vrn::load_pgm(path).data, m.data);
}

TEST(RasterIo, MalformedRastersRejected) {
  const std::string path = temp_path("bad.pgm");
  Mask m(4, 4);
  vrn::save_pgm(m, path);
  std::string raw = vrn::detail::read_file(path);

  vrn::detail::write_file(path, "P4\n4 4\n255\n" + raw.substr(11));
  EXPECT_THROW(vrn::load_pgm(path), vrn::ParseError);
  vrn::detail::write_file(path, raw.substr(0, raw.size() - 1));
  EXPECT_THROW(vrn::load_pgm(path), vrn::ParseError);
  vrn::detail::write_file(path, raw + "x");
  EXPECT_THROW(vrn::load_pgm(path), vrn::ParseError);
  vrn::detail::write_file(path, "P5\n4 4\n65535\n" + raw.substr(11));
  EXPECT_THROW(vrn::load_pgm(path), vrn::ParseError);
  EXPECT_THROW(vrn::load_pgm(temp_path("missing.pgm")), vrn::IoError);
}

TEST(LandmarkIo, RoundTripIsExact) {
  Rng rng(22);
  LandmarkSet lm{};
  for (auto& l : lm)
    l = {rng.uniform(0.0, 63.0), rng.uniform(0.0, 63.0), rng.bernoulli(0.8)};
  const std::string path = temp_path("enc.lmk");
  vrn::save_landmarks(lm, path);
  LandmarkSet back = vrn::load_landmarks(path);
  for (int j = 0; j < vrn::kNumLandmarks; ++j) {
    EXPECT_EQ(back[j].x, lm[j].x);
    EXPECT_EQ(back[j].y, lm[j].y);
    EXPECT_EQ(back[j].visible, lm[j].visible);
  }
}

TEST(LandmarkIo, WrongNameOrCountRejected) {
  LandmarkSet lm{};
  const std::string path = temp_path("bad.lmk");
  vrn::save_landmarks(lm, path);
  std::string raw = vrn::detail::read_file(path);

  vrn::detail::write_file(path, "skull" + raw.substr(4));
  EXPECT_THROW(vrn::load_landmarks(path), vrn::ParseError);
  vrn::detail::write_file(path, raw + "extra 0 0 1\n");
  EXPECT_THROW(vrn::load_landmarks(path), vrn::ParseError);
  vrn::detail::write_file(path, raw.substr(0, raw.find('\n') + 1));
  EXPECT_THROW(vrn::load_landmarks(path), vrn::ParseError);
  vrn::detail::write_file(path, std::string("head 1 2 7\n") + raw.substr(raw.find('\n') + 1));
  EXPECT_THROW(vrn::load_landmarks(path), vrn::ParseError);
}

}  // namespace
