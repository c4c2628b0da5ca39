#include "sdfa/network.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <set>

using namespace sdfa;
using sdfa::test::random_tensor;

namespace {

NetworkConfig small_config(Index levels = 9) {
  NetworkConfig c;
  c.backbone.stage_channels = {8, 8, 16, 16};
  c.decoder_widths = {8, 8, 16};
  c.restoration_channels = {8, 8};
  c.d_min = 2;
  c.d_max = 30;
  c.levels = levels;
  c.seed = 3;
  return c;
}

Var<float>* find(ParameterSet<float>& set, const std::string& name) {
  for (auto& p : set.params)
    if (p.name == name) return p.var;
  return nullptr;
}

void randomize_params(DepthNet<float>& net, const std::string& needle, Rng& rng) {
  auto set = net.parameters();
  for (auto& p : set.params)
    if (p.name.find(needle) != std::string::npos)
      p.var->mutable_value() = random_tensor(p.var->shape(), rng, -0.2, 0.2);
}

void tie(DepthNet<float>& net, const std::string& from, const std::string& to) {
  auto set = net.parameters();
  for (auto& p : set.params) {
    const auto pos = p.name.find(from);
    if (pos == std::string::npos) continue;
    std::string target = p.name;
    target.replace(pos, from.size(), to);
    Var<float>* dst = find(set, target);
    REQUIRE(dst != nullptr);
    dst->mutable_value() = p.var->value();
  }
}

std::set<std::string> touched(DepthNet<float>& net, const Var<float>& volume) {
  auto set = net.parameters();
  for (auto& p : set.params) p.var->zero_grad();
  backward(sum(volume));
  std::set<std::string> names;
  for (auto& p : set.params)
    if (p.var->has_grad()) names.insert(p.name);
  return names;
}

}  // namespace

TEST_CASE("encoder honors the resolution contract") {
  DepthNet<float> net(small_config());
  Rng rng(1);
  std::uniform_int_distribution<int> mult(1, 6);
  for (int trial = 0; trial < 6; ++trial) {
    const Index h = 16 * mult(rng), w = 16 * mult(rng);
    const auto f = net.encode(Var<float>(random_tensor(Shape{1, 3, h, w}, rng)));
    for (std::size_t i = 0; i < 4; ++i) {
      const Index factor = Index{2} << i;
      CHECK(f[i].shape().h == h / factor);
      CHECK(f[i].shape().w == w / factor);
      CHECK(f[i].shape().c == net.config().backbone.stage_channels[i]);
    }
  }
  const auto f = net.encode(Var<float>(Tensor<float>(Shape{1, 3, 96, 320})));
  CHECK(f[0].shape().h == 48);
  CHECK(f[0].shape().w == 160);
  CHECK(f[1].shape().h == 24);
  CHECK(f[2].shape().w == 40);
  CHECK(f[3].shape().h == 6);
  CHECK(f[3].shape().w == 20);
  CHECK_THROWS_AS(net.encode(Var<float>(Tensor<float>(Shape{1, 3, 100, 320}))), std::invalid_argument);
  CHECK_THROWS_AS(net.encode(Var<float>(Tensor<float>(Shape{1, 1, 96, 320}))), std::invalid_argument);
}

TEST_CASE("large input follows the same contract") {
  NetworkConfig c = small_config();
  c.backbone.stage_channels = {2, 2, 2, 2};
  DepthNet<float> net(c);
  const auto f = net.encode(Var<float>(Tensor<float>(Shape{1, 3, 384, 1280})));
  CHECK(f[0].shape() == Shape{1, 2, 192, 640});
  CHECK(f[1].shape() == Shape{1, 2, 96, 320});
  CHECK(f[2].shape() == Shape{1, 2, 48, 160});
  CHECK(f[3].shape() == Shape{1, 2, 24, 80});
}

TEST_CASE("decoder emits a full-resolution volume") {
  NetworkConfig c = small_config(49);
  DepthNet<float> net(c);
  Rng rng(2);
  const auto out = net.forward_raw(Var<float>(random_tensor(Shape{1, 3, 96, 320}, rng)));
  CHECK(out.volume.shape() == Shape{1, 49, 96, 320});
  CHECK(out.path == PathSelector::raw);
  const auto dist = net.forward_distilled_flipped(Var<float>(random_tensor(Shape{2, 3, 32, 48}, rng)));
  CHECK(dist.volume.shape() == Shape{2, 49, 32, 48});
  CHECK(dist.path == PathSelector::distilled);
}

TEST_CASE("tied branches and heads make the two paths identical") {
  DepthNet<float> net(small_config());
  Rng rng(3);
  randomize_params(net, "branch_c1.out", rng);
  randomize_params(net, "branch_f.out", rng);
  tie(net, "branch_c1", "branch_c2");
  tie(net, "head_raw", "head_distilled");
  const auto features = net.encode(Var<float>(random_tensor(Shape{1, 3, 32, 64}, rng)));
  const auto raw = net.decode(features, PathSelector::raw).value();
  const auto dist = net.decode(features, PathSelector::distilled).value();
  CHECK(raw.vec() == dist.vec());
}

TEST_CASE("copying the raw path ties the two decoder paths") {
  DepthNet<float> net(small_config());
  Rng rng(10);
  randomize_params(net, "branch_c1.out", rng);
  randomize_params(net, "branch_c2.out", rng);
  net.copy_raw_path_to_distilled();
  const auto features = net.encode(Var<float>(random_tensor(Shape{1, 3, 32, 64}, rng)));
  CHECK(net.decode(features, PathSelector::raw).value().vec() ==
        net.decode(features, PathSelector::distilled).value().vec());
  NetworkConfig c = small_config();
  c.decoder = DecoderKind::oa;
  DepthNet<float> oa(c);
  CHECK_NOTHROW(oa.copy_raw_path_to_distilled());
}

TEST_CASE("untied heads give different volumes") {
  DepthNet<float> net(small_config());
  Rng rng(4);
  const auto features = net.encode(Var<float>(random_tensor(Shape{1, 3, 32, 64}, rng)));
  const auto raw = net.decode(features, PathSelector::raw).value();
  const auto dist = net.decode(features, PathSelector::distilled).value();
  CHECK(sdfa::test::max_abs_diff(raw, dist) > 1e-4);
}

TEST_CASE("parameter census: only heads and skip branches are path specific") {
  DepthNet<float> net(small_config());
  Rng rng(5);
  Var<float> image(random_tensor(Shape{1, 3, 32, 32}, rng));
  const auto raw = touched(net, net.forward_raw(image).volume);
  const auto dist = touched(net, net.forward_distilled_flipped(image).volume);
  std::set<std::string> only_raw, only_dist, all;
  for (const auto& n : raw)
    if (!dist.count(n)) only_raw.insert(n);
  for (const auto& n : dist)
    if (!raw.count(n)) only_dist.insert(n);
  for (auto& p : net.parameters().params) all.insert(p.name);

  for (const auto& n : only_raw)
    CHECK_MESSAGE((n.find("head_raw") != std::string::npos || n.find("branch_c1") != std::string::npos), n);
  for (const auto& n : only_dist)
    CHECK_MESSAGE((n.find("head_distilled") != std::string::npos || n.find("branch_c2") != std::string::npos), n);
  CHECK(only_raw.size() == 2 + 3 * 4);
  CHECK(only_dist.size() == 2 + 3 * 4);
  // Every parameter is used by at least one path.
  for (const auto& n : all) CHECK_MESSAGE((raw.count(n) || dist.count(n)), n);
  CHECK(raw.size() + only_dist.size() == all.size());
}

TEST_CASE("distilled flipped pass is the mirrored decode of mirrored features") {
  DepthNet<float> net(small_config());
  net.set_training(false);
  Rng rng(6);
  randomize_params(net, "branch_c2.out", rng);
  Var<float> image(random_tensor(Shape{1, 3, 32, 48}, rng));
  const auto out = net.forward_distilled_flipped(image).volume.value();
  auto features = net.encode(image);
  for (auto& f : features) f = flip_width(f);
  const auto inner = net.decode(features, PathSelector::distilled).value();
  REQUIRE(out.shape() == inner.shape());
  const Index w = out.w();
  for (Index c = 0; c < out.c(); ++c)
    for (Index y = 0; y < out.h(); ++y)
      for (Index x = 0; x < w; ++x) CHECK(out(0, c, y, x) == inner(0, c, y, w - 1 - x));
  CHECK(flip_width(flip_width(out)).vec() == out.vec());
}

TEST_CASE("width-symmetric features and kernels give a symmetric answer") {
  DepthNet<float> net(small_config());
  net.set_training(false);
  auto set = net.parameters();
  for (auto& p : set.params) {
    auto& v = p.var->mutable_value();
    if (v.w() != 3) continue;
    Tensor<float> mirrored = flip_width(v);
    v.vec() = 0.5f * (v.vec() + mirrored.vec());
  }
  Rng rng(7);
  EncoderFeatures<float> features;
  for (std::size_t i = 0; i < 4; ++i) {
    const Index h = 16 >> i, w = 32 >> i;
    Tensor<float> f = random_tensor(Shape{1, net.config().backbone.stage_channels[i], h, w}, rng, -1, 1);
    for (Index c = 0; c < f.c(); ++c)
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w / 2; ++x) f(0, c, y, w - 1 - x) = f(0, c, y, x);
    features[i] = Var<float>(f);
  }
  const auto plain = net.decode(features, PathSelector::distilled).value();
  const auto flipped = net.decode_flipped(features, PathSelector::distilled).value();
  CHECK(sdfa::test::max_abs_diff(plain, flipped) <= 1e-4);
}

TEST_CASE("infer_depth is bounded, positive and deterministic") {
  DepthNet<float> net(small_config());
  Rng rng(8);
  randomize_params(net, "head", rng);
  const auto image = random_tensor(Shape{1, 3, 32, 64}, rng);
  CameraRig rig{0.54, 185.6};
  const auto a = net.infer_depth(image, rig);
  const auto b = net.infer_depth(image, rig);
  CHECK(a.vec() == b.vec());
  const double lo = rig.bf() / 30, hi = rig.bf() / 2;
  for (Index i = 0; i < a.size(); ++i) {
    CHECK(a[i] > 0);
    CHECK(a[i] >= lo * (1 - 1e-5));
    CHECK(a[i] <= hi * (1 + 1e-5));
  }
  CHECK(a.shape() == Shape{1, 1, 32, 64});
}

TEST_CASE("inference without loaded weights is a state error") {
  DepthNet<float> net(small_config(), DepthNet<float>::Init::none);
  CHECK(!net.loaded());
  CHECK_THROWS_AS(net.infer_depth(Tensor<float>(Shape{1, 3, 32, 32}), CameraRig{}), StateError);
  net.mark_loaded();
  CHECK_NOTHROW(net.infer_depth(Tensor<float>(Shape{1, 3, 32, 32}), CameraRig{}));
}

TEST_CASE("network construction is seed deterministic") {
  DepthNet<float> a(small_config()), b(small_config());
  auto pa = a.parameters(), pb = b.parameters();
  REQUIRE(pa.params.size() == pb.params.size());
  for (std::size_t i = 0; i < pa.params.size(); ++i) CHECK(pa.params[i].var->value().vec() == pb.params[i].var->value().vec());
  NetworkConfig other = small_config();
  other.seed = 4;
  DepthNet<float> c(other);
  CHECK(c.parameters().params[0].var->value().vec() != pa.params[0].var->value().vec());
}

TEST_CASE("decoder variants") {
  NetworkConfig c = small_config();
  c.decoder = DecoderKind::oa;
  DepthNet<float> oa(c);
  CHECK(!oa.has_distilled_path());
  c.decoder = DecoderKind::concat;
  DepthNet<float> concat(c);
  Rng rng(9);
  Var<float> image(random_tensor(Shape{1, 3, 32, 32}, rng));
  CHECK(oa.forward_raw(image).volume.shape() == Shape{1, 9, 32, 32});
  CHECK(concat.forward_raw(image).volume.shape() == Shape{1, 9, 32, 32});
  CHECK(decoder_kind_from_string("oa") == DecoderKind::oa);
  CHECK(to_string(DecoderKind::sdfa) == "sdfa");
  CHECK_THROWS_AS(decoder_kind_from_string("swin"), std::invalid_argument);
}
