// tests/fusion_test.cc

// Copyright 2026  avsr-lab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "avsr/fusion.hpp"
#include "avsr/gradcheck.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

NetworkDims small_dims() {
  NetworkDims d = gradcheck_dims(5);
  d.hidden = 6;
  return d;
}

NetworkParams<double> randomized(const Architecture &a, std::uint64_t seed) {
  auto net = build_network<double>(a, small_dims(), seed);
  Rng rng(seed + 100);
  for (auto *p : net.parameters())
    for (auto &v : p->values) v += 0.3 * gaussian(rng);
  return net;
}

struct Inputs {
  MatD x, v;
};
Inputs inputs(int frames, std::uint64_t seed) {
  Rng rng(seed);
  const NetworkDims d = small_dims();
  return {testing::random_matrix(frames, d.acoustic_dim, rng), testing::random_matrix(frames, d.visual_dim, rng)};
}

TEST(Fusion, InitialPosteriorsAreUniform) {
  for (const auto &arch : gradcheck_architectures()) {
    auto net = build_network<double>(arch, small_dims(), 1);
    Tape<double> tp;
    auto in = inputs(4, 2);
    const MatD lp = forward(net, tp.constant(in.x), tp.constant(in.v)).log_post.value();
    ASSERT_EQ(lp.rows(), 4);
    ASSERT_EQ(lp.cols(), 5);
    for (Eigen::Index i = 0; i < lp.size(); ++i) EXPECT_NEAR(lp.data()[i], std::log(0.2), 1e-12) << arch.label();
  }
}

TEST(Fusion, PosteriorsNormalize) {
  for (const auto &arch : gradcheck_architectures()) {
    auto net = randomized(arch, 3);
    Tape<double> tp;
    auto in = inputs(7, 4);
    const MatD lp = forward(net, tp.constant(in.x), tp.constant(in.v)).log_post.value();
    for (int t = 0; t < 7; ++t) EXPECT_NEAR(lp.row(t).array().exp().sum(), 1.0, 1e-12) << arch.label();
  }
}

TEST(Fusion, VGateTraceIsConsistent) {
  auto net = randomized({FusionMode::kVGate, false}, 5);
  Tape<double> tp;
  auto in = inputs(6, 6);
  auto out = forward_vgate(net, tp.constant(in.x), tp.constant(in.v));
  ASSERT_TRUE(out.trace && out.visual_net && out.frontend);
  const auto &tr = *out.trace;
  EXPECT_EQ(tr.m, *out.visual_net);
  for (Eigen::Index i = 0; i < tr.m.size(); ++i) {
    EXPECT_NEAR(tr.g.data()[i], 1.0 / (1.0 + std::exp(-tr.m.data()[i])), 1e-15);
    EXPECT_NEAR(tr.h.data()[i], tr.audio.data()[i] * tr.g.data()[i], 1e-15);
  }
  // The gate pre-activation takes both signs (no ReLU before the sigmoid).
  EXPECT_LT(tr.m.minCoeff(), 0.0);
  EXPECT_GT(tr.m.maxCoeff(), 0.0);
}

TEST(Fusion, AVGateUsesBothStreams) {
  auto net = randomized({FusionMode::kAVGate, false}, 7);
  auto in = inputs(6, 8);
  Tape<double> tp;
  auto out = forward_avgate(net, tp.constant(in.x), tp.constant(in.v));
  // Recompute m = FusionNet([VisualNet(VF(v)), AudioNet(x)]) directly.
  Tape<double> t2;
  auto vf = subnet_forward(net.frontend, t2.constant(in.v));
  auto vn = subnet_forward(net.visual_net, vf);
  auto a = subnet_forward(net.audio_net, t2.constant(in.x));
  auto m = subnet_forward(net.fusion_net, ad::concat(vn, a));
  EXPECT_TRUE(out.trace->m.isApprox(m.value(), 1e-14));
  // Changing only the audio changes the gate.
  Inputs in2 = in;
  in2.x *= -1.0;
  Tape<double> t3;
  auto out2 = forward_avgate(net, t3.constant(in2.x), t3.constant(in2.v));
  EXPECT_GT((out2.trace->m - out.trace->m).norm(), 1e-6);
  // For vgate the gate depends on vision alone.
  auto vnet = randomized({FusionMode::kVGate, false}, 7);
  Tape<double> t4, t5;
  auto g1 = forward_vgate(vnet, t4.constant(in.x), t4.constant(in.v)).trace->m;
  auto g2 = forward_vgate(vnet, t5.constant(in2.x), t5.constant(in2.v)).trace->m;
  EXPECT_EQ(g1, g2);
}

TEST(Fusion, GateOverrideOpensAndCloses) {
  auto net = randomized({FusionMode::kVGate, false}, 9);
  auto in = inputs(5, 10);
  Tape<double> tp;
  auto open = forward(net, tp.constant(in.x), tp.constant(in.v), {false, 60.0});
  EXPECT_TRUE(open.trace->h.isApprox(open.trace->audio, 1e-12));
  // A closed gate blocks the acoustic stream entirely.
  Inputs in2 = in;
  in2.x.setRandom();
  Tape<double> t1, t2;
  auto c1 = forward(net, t1.constant(in.x), t1.constant(in.v), {false, -800.0});
  auto c2 = forward(net, t2.constant(in2.x), t2.constant(in2.v), {false, -800.0});
  EXPECT_TRUE(c1.trace->h.isZero());
  EXPECT_EQ(c1.log_post.value(), c2.log_post.value());
}

TEST(Fusion, SingleModalitySystemsIgnoreOtherStream) {
  auto in = inputs(5, 11);
  auto audio = randomized({FusionMode::kAudioOnly, false}, 12);
  Tape<double> t1, t2;
  auto a1 = forward(audio, t1.constant(in.x), t1.constant(in.v)).log_post.value();
  auto a2 = forward(audio, t2.constant(in.x), t2.constant(MatD(0, 0))).log_post.value();
  EXPECT_EQ(a1, a2);
  auto visual = randomized({FusionMode::kVisualOnly, false}, 13);
  Tape<double> t3, t4;
  auto v1 = forward(visual, t3.constant(in.x), t3.constant(in.v)).log_post.value();
  auto v2 = forward(visual, t4.constant(MatD(0, 0)), t4.constant(in.v)).log_post.value();
  EXPECT_EQ(v1, v2);
}

TEST(Fusion, PlusConcatFeedsFrontendToRecogNet) {
  auto net = randomized({FusionMode::kVGate, true}, 14);
  EXPECT_EQ(net.recog_net[0].cfg.in_dim, 2 * small_dims().hidden);
  auto in = inputs(5, 15);
  Tape<double> tp;
  auto out = forward(net, tp.constant(in.x), tp.constant(in.v));
  Tape<double> t2;
  auto h = t2.constant(out.trace->h);
  auto vf = t2.constant(*out.frontend);
  auto r = subnet_forward(net.recog_net, ad::concat(h, vf));
  auto lp = ad::log_softmax(ad::affine(r, t2.param(net.output_weight), t2.param(net.output_bias)));
  EXPECT_TRUE(lp.value().isApprox(out.log_post.value(), 1e-14));
}

TEST(Fusion, Errors) {
  auto net = randomized({FusionMode::kVGate, false}, 16);
  Tape<double> tp;
  auto in = inputs(5, 17);
  EXPECT_THROW(forward(net, tp.constant(in.x), tp.constant(MatD(in.v.topRows(4)))), Error);
  EXPECT_THROW(forward_avgate(net, tp.constant(in.x), tp.constant(in.v)), Error);
  EXPECT_THROW(forward_concat(net, tp.constant(in.x), tp.constant(in.v)), Error);
}

TEST(Fusion, GradientsThroughGates) {
  for (const auto &arch : gradcheck_architectures()) {
    auto [e64, e32] = check_network(arch, 21);
    EXPECT_LT(e64, kGradTol64) << arch.label();
    EXPECT_LT(e32, kGradTol32) << arch.label();
  }
}

}  // namespace
}  // namespace avsr
