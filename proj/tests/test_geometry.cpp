#include "sdfa/geometry.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace sdfa;
using sdfa::test::random_tensor;

TEST_CASE("quantize_disparities endpoints and midpoint") {
  const auto lv = quantize_disparities(2, 300, 49);
  REQUIRE(lv.count() == 49);
  CHECK(lv[0] == 300.0);
  CHECK(lv[48] == 2.0);
  // Geometric midpoint of [2, 300] is sqrt(2 * 300).
  const long double oracle = std::sqrt(600.0L);
  CHECK(lv[24] == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));
  CHECK(lv[24] == doctest::Approx(24.494897).epsilon(1e-7));
  for (Index n = 1; n < lv.count(); ++n) CHECK(lv[n] < lv[n - 1]);
}

TEST_CASE("quantize_disparities degenerate and invalid ranges") {
  const auto eq = quantize_disparities(5, 5, 3);
  CHECK(eq.values() == std::vector<double>{5, 5, 5});
  const auto one = quantize_disparities(5, 5, 1);
  CHECK(one.values() == std::vector<double>{5});
  CHECK_THROWS_AS(quantize_disparities(0, 10, 4), std::invalid_argument);
  CHECK_THROWS_AS(quantize_disparities(-1, 10, 4), std::invalid_argument);
  CHECK_THROWS_AS(quantize_disparities(10, 2, 4), std::invalid_argument);
  CHECK_THROWS_AS(quantize_disparities(2, 10, 1), std::invalid_argument);
  CHECK_THROWS_AS(quantize_disparities(2, 10, 0), std::invalid_argument);
}

TEST_CASE("bilinear_sample on the integer grid copies the input") {
  Rng rng(1);
  Var<float> f(random_tensor(Shape{2, 3, 5, 7}, rng));
  Var<float> grid(pixel_grid<float>(2, 5, 7));
  CHECK(sdfa::test::max_abs_diff(bilinear_sample(f, grid).value(), f.value()) == 0);
}

TEST_CASE("bilinear_sample hand cases") {
  Tensor<float> patch(Shape{1, 1, 2, 2});
  patch(0, 0, 0, 0) = 0;
  patch(0, 0, 0, 1) = 1;
  patch(0, 0, 1, 0) = 2;
  patch(0, 0, 1, 1) = 3;
  Tensor<float> c(Shape{1, 2, 1, 1});
  c(0, 0, 0, 0) = 0.5f;
  c(0, 1, 0, 0) = 0.5f;
  CHECK(bilinear_sample(Var<float>(patch), Var<float>(c)).value()[0] == doctest::Approx(1.5));

  // Far outside: the clamped border value.
  Tensor<float> far(Shape{1, 2, 1, 2});
  far(0, 0, 0, 0) = -10;
  far(0, 1, 0, 0) = 0;
  far(0, 0, 0, 1) = 11;
  far(0, 1, 0, 1) = 11;
  const auto out = bilinear_sample(Var<float>(patch), Var<float>(far)).value();
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 3.0f);

  CHECK_THROWS_AS(bilinear_sample(Var<float>(patch), Var<float>(Tensor<float>(Shape{1, 3, 1, 1}))),
                  std::invalid_argument);
}

TEST_CASE("bilinear_sample reproduces affine functions at interior points") {
  Rng rng(2);
  const Index h = 9, w = 13;
  std::uniform_real_distribution<double> coef(-2, 2);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = coef(rng), b = coef(rng), c = coef(rng);
    Tensor<double> f(Shape{1, 1, h, w});
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) f(0, 0, y, x) = a * x + b * y + c;
    Tensor<double> coords = random_tensor<double>(Shape{1, 2, 6, 6}, rng, 0, static_cast<double>(w - 1));
    for (Index q = 0; q < 36; ++q) coords.plane(0, 1)[q] = coords.plane(0, 1)[q] * (h - 1) / (w - 1);
    const auto out = bilinear_sample(Var<double>(f), Var<double>(coords)).value();
    for (Index q = 0; q < 36; ++q) {
      const double x = coords.plane(0, 0)[q], y = coords.plane(0, 1)[q];
      CHECK(out[q] == doctest::Approx(a * x + b * y + c).epsilon(1e-12));
    }
  }
}

TEST_CASE("refine with zero offsets is the identity") {
  Rng rng(3);
  Var<float> f(random_tensor(Shape{2, 4, 6, 10}, rng, -3, 3));
  Var<float> zero(Tensor<float>(Shape{2, 2, 6, 10}));
  CHECK(sdfa::test::max_abs_diff(refine(f, zero).value(), f.value()) <= 1e-6);
}

TEST_CASE("refine with a unit offset matches an integer shift") {
  Rng rng(4);
  const Index h = 6, w = 10;
  Var<float> f(random_tensor(Shape{1, 2, h, w}, rng));
  Tensor<float> d(Shape{1, 2, h, w});
  for (Index q = 0; q < h * w; ++q) d.plane(0, 0)[q] = 1.0f;
  const auto out = refine(f, Var<float>(d)).value();
  for (Index c = 0; c < 2; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x + 1 < w; ++x) CHECK(out(0, c, y, x) == f.value()(0, c, y, x + 1));
}

TEST_CASE("refine by half a pixel on a ramp") {
  const Index h = 4, w = 8;
  Tensor<double> ramp(Shape{1, 1, h, w});
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) ramp(0, 0, y, x) = static_cast<double>(x);
  Tensor<double> d(Shape{1, 2, h, w});
  d.vec().head(h * w).setConstant(0.5);
  const auto out = refine(Var<double>(ramp), Var<double>(d)).value();
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x + 1 < w; ++x) CHECK(out(0, 0, y, x) == doctest::Approx(x + 0.5));
  CHECK_THROWS_AS(refine(Var<double>(ramp), Var<double>(Tensor<double>(Shape{1, 2, h, w + 1}))),
                  std::invalid_argument);
}

TEST_CASE("volume_to_disparity examples") {
  DisparityLevels lv = quantize_disparities(2.5, 10, 3);
  REQUIRE(lv[1] == doctest::Approx(5.0));
  Tensor<float> uniform(Shape{1, 3, 2, 2});
  const auto mean_d = volume_to_disparity(Var<float>(uniform), lv).value();
  for (Index i = 0; i < 4; ++i) CHECK(mean_d[i] == doctest::Approx(17.5 / 3).epsilon(1e-6));

  Tensor<float> peaked(Shape{1, 3, 2, 2});
  for (Index q = 0; q < 4; ++q) peaked.plane(0, 1)[q] = 50;
  const auto peak_d = volume_to_disparity(Var<float>(peaked), lv).value();
  for (Index i = 0; i < 4; ++i) CHECK(std::abs(peak_d[i] - 5.0f) <= 1e-6);

  const auto single = quantize_disparities(7, 7, 1);
  Rng rng(5);
  const auto one = volume_to_disparity(Var<float>(random_tensor(Shape{1, 1, 3, 3}, rng)), single).value();
  for (Index i = 0; i < one.size(); ++i) CHECK(one[i] == 7.0f);
  CHECK_THROWS_AS(volume_to_disparity(Var<float>(Tensor<float>(Shape{1, 4, 2, 2})), lv), std::invalid_argument);
}

TEST_CASE("softmax sums to one and disparity stays inside the level range") {
  Rng rng(6);
  const auto lv = quantize_disparities(2, 40, 17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto logits = random_tensor(Shape{2, 17, 5, 7}, rng, -30, 30);
    const auto p = softmax_channels(logits);
    for (Index i = 0; i < 2; ++i)
      for (Index q = 0; q < 35; ++q) {
        double s = 0;
        for (Index k = 0; k < 17; ++k) s += p.plane(i, k)[q];
        CHECK(std::abs(s - 1) <= 1e-5);
      }
    const auto d = volume_to_disparity(Var<float>(logits), lv).value();
    for (Index i = 0; i < d.size(); ++i) {
      CHECK(d[i] >= 2.0f - 1e-5f);
      CHECK(d[i] <= 40.0f + 1e-5f);
    }
  }
}

TEST_CASE("disparity_to_depth") {
  CameraRig rig{0.5, 200};
  Tensor<float> d(Shape{1, 1, 1, 3});
  d[0] = 100;
  d[1] = 4;
  d[2] = 40;
  const auto depth = disparity_to_depth(Var<float>(d), rig).value();
  CHECK(depth[0] == doctest::Approx(1.0));
  CHECK(depth[1] == doctest::Approx(25.0));
  CHECK(depth[2] == doctest::Approx(2.5));
  d[1] = 0;
  CHECK_THROWS_AS(disparity_to_depth(Var<float>(d), rig), std::invalid_argument);
  d[1] = -1;
  CHECK_THROWS_AS(disparity_to_depth(Var<float>(d), rig), std::invalid_argument);
}

TEST_CASE("synthesize_right keeps a constant image") {
  Rng rng(7);
  const auto lv = quantize_disparities(2, 6, 5);
  Tensor<float> img(Shape{1, 3, 4, 12});
  for (Index c = 0; c < 3; ++c)
    for (Index q = 0; q < 48; ++q) img.plane(0, c)[q] = 0.2f + 0.3f * static_cast<float>(c);
  const auto out = synthesize_right(Var<float>(random_tensor(Shape{1, 5, 4, 12}, rng, -4, 4)), Var<float>(img), lv);
  CHECK(sdfa::test::max_abs_diff(out.value(), img) <= 1e-6);
}

TEST_CASE("synthesize_right with a one-hot integer level is an exact shift") {
  Rng rng(8);
  const auto lv = quantize_disparities(2, 8, 3);  // {8, 4, 2}
  const Index h = 5, w = 16;
  const auto img = random_tensor(Shape{2, 3, h, w}, rng);
  for (Index k = 0; k < 3; ++k) {
    Tensor<float> logits(Shape{2, 3, h, w});
    for (Index i = 0; i < 2; ++i)
      for (Index q = 0; q < h * w; ++q) logits.plane(i, k)[q] = 50;
    const auto out = synthesize_right(Var<float>(logits), Var<float>(img), lv).value();
    const auto shift = static_cast<Index>(lv[k]);
    for (Index i = 0; i < 2; ++i)
      for (Index c = 0; c < 3; ++c)
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x + shift < w; ++x) CHECK(out(i, c, y, x) == img(i, c, y, x + shift));
  }
}

TEST_CASE("synthesize_right near zero disparity returns the left image") {
  Rng rng(9);
  const auto lv = quantize_disparities(1e-6, 1e-6, 1);
  const auto img = random_tensor(Shape{1, 3, 4, 8}, rng);
  const auto out = synthesize_right(Var<float>(random_tensor(Shape{1, 1, 4, 8}, rng)), Var<float>(img), lv);
  CHECK(sdfa::test::max_abs_diff(out.value(), img) <= 1e-5);
  CHECK_THROWS_AS(synthesize_right(Var<float>(Tensor<float>(Shape{1, 1, 4, 9})), Var<float>(img), lv),
                  std::invalid_argument);
}

TEST_CASE("reproject_left examples") {
  Rng rng(10);
  CameraRig rig{0.5, 120};
  const Index h = 4, w = 12;
  const auto right = random_tensor(Shape{1, 3, h, w}, rng);
  Tensor<float> far(Shape{1, 1, h, w}, 1e9f);
  CHECK(sdfa::test::max_abs_diff(reproject_left(Var<float>(right), Var<float>(far), rig).value(), right) <= 1e-6);

  Tensor<float> three(Shape{1, 1, h, w}, static_cast<float>(rig.bf() / 3));
  const auto out = reproject_left(Var<float>(right), Var<float>(three), rig).value();
  for (Index c = 0; c < 3; ++c)
    for (Index y = 0; y < h; ++y)
      for (Index x = 3; x < w; ++x) CHECK(out(0, c, y, x) == doctest::Approx(right(0, c, y, x - 3)).epsilon(1e-5));
  Tensor<float> bad(Shape{1, 1, h, w}, 1.0f);
  bad[5] = 0;
  CHECK_THROWS_AS(reproject_left(Var<float>(right), Var<float>(bad), rig), std::invalid_argument);
}

TEST_CASE("gradients match central differences") {
  Rng rng(11);
  const Index h = 8, w = 8;

  SUBCASE("refine") {
    Var<double> f(random_tensor<double>(Shape{1, 2, h, w}, rng), true);
    Var<double> d(sdfa::test::off_grid_tensor(Shape{1, 2, h, w}, rng, -2, 1), true);
    Var<double> weights(random_tensor<double>(Shape{1, 2, h, w}, rng, -1, 1));
    auto fn = [&] { return sum(mul(refine(f, d), weights)); };
    CHECK(sdfa::test::gradient_error(fn, {f, d}) < 1e-3);
  }
  SUBCASE("synthesize_right") {
    const auto lv = quantize_disparities(1.3, 5.7, 4);
    Var<double> logits(random_tensor<double>(Shape{1, 4, h, w}, rng, -2, 2), true);
    Var<double> img(random_tensor<double>(Shape{1, 3, h, w}, rng), true);
    Var<double> weights(random_tensor<double>(Shape{1, 3, h, w}, rng, -1, 1));
    auto fn = [&] { return sum(mul(synthesize_right(logits, img, lv), weights)); };
    CHECK(sdfa::test::gradient_error(fn, {logits, img}) < 1e-3);
  }
  SUBCASE("reproject_left") {
    CameraRig rig{0.5, 10};
    Var<double> right(random_tensor<double>(Shape{1, 3, h, w}, rng), true);
    Tensor<double> disp = sdfa::test::off_grid_tensor(Shape{1, 1, h, w}, rng, 0, 4);
    Tensor<double> depth(disp.shape());
    depth.vec() = (rig.bf() / disp.vec().array()).matrix();
    Var<double> dv(depth, true);
    Var<double> weights(random_tensor<double>(Shape{1, 3, h, w}, rng, -1, 1));
    auto fn = [&] { return sum(mul(reproject_left(right, dv, rig), weights)); };
    CHECK(sdfa::test::gradient_error(fn, {right, dv}) < 1e-3);
  }
  SUBCASE("disparity_to_depth and volume_to_disparity") {
    const auto lv = quantize_disparities(2, 20, 5);
    Var<double> logits(random_tensor<double>(Shape{1, 5, h, w}, rng, -2, 2), true);
    auto fn = [&] { return sum(disparity_to_depth(volume_to_disparity(logits, lv), CameraRig{0.5, 40})); };
    CHECK(sdfa::test::gradient_error(fn, {logits}) < 1e-3);
  }
}
