// tests/tdnn_test.cc

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

#include "avsr/tdnn.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

template <typename T>
void randomize(Tensor<T> &t, Rng &rng, double s = 0.5) {
  for (auto &v : t.values) v = static_cast<T>(s * gaussian(rng));
}

TEST(Tdnnf, ForwardMatchesDirectFormula) {
  Rng rng(1);
  TdnnfConfig c;
  c.in_dim = 3;
  c.out_dim = 3;
  c.bottleneck = 2;
  c.offsets = {-2, 0, 1};
  TdnnfLayer<double> layer("l", c);
  randomize(layer.factor_in, rng);
  randomize(layer.factor_out, rng);
  randomize(layer.bias, rng);
  const MatD x = testing::random_matrix(6, 3, rng);
  Tape<double> tp;
  const MatD y = tdnnf_forward(layer, tp.constant(x)).value();
  for (int t = 0; t < 6; ++t) {
    Eigen::VectorXd spliced(9);
    for (int j = 0; j < 3; ++j) spliced.segment(3 * j, 3) = x.row(std::clamp(t + c.offsets[j], 0, 5)).transpose();
    const Eigen::VectorXd b = layer.factor_in.mat() * spliced;
    Eigen::VectorXd o = layer.factor_out.mat() * b + layer.bias.mat().transpose();
    o = o.cwiseMax(0.0) + 0.66 * x.row(t).transpose();
    for (int d = 0; d < 3; ++d) EXPECT_NEAR(y(t, d), o(d), 1e-12);
  }
}

TEST(Tdnnf, NoResidualWhenShapesDiffer) {
  TdnnfConfig c;
  c.in_dim = 2;
  c.out_dim = 4;
  c.relu = false;
  EXPECT_EQ(c.effective_residual(), 0.0);
  TdnnfLayer<double> layer("l", c);  // zero weights, zero bias
  Tape<double> tp;
  EXPECT_TRUE(tdnnf_forward(layer, tp.constant(MatD::Ones(3, 2))).value().isZero());
  EXPECT_THROW(tdnnf_forward(layer, tp.constant(MatD::Ones(3, 5))), Error);
  c.bottleneck = 0;
  EXPECT_THROW(TdnnfLayer<double>("bad", c), Error);
}

TEST(SemiOrthogonal, ErrorOfOrthonormalIsZero) {
  MatD q = MatD::Identity(4, 6) * 3.0;
  EXPECT_NEAR(orthogonality_error(q), 0.0, 1e-12);
  EXPECT_NEAR(orthogonality_error(MatD(q.transpose())), 0.0, 1e-12);
  MatD m(2, 2);
  m << 1, 0, 0, 2;
  // alpha^2 = (1 + 16) / 5, error = sqrt((1 - 3.4)^2 + (4 - 3.4)^2).
  EXPECT_NEAR(orthogonality_error(m), std::sqrt(2.4 * 2.4 + 0.6 * 0.6), 1e-12);
}

TEST(SemiOrthogonal, ConvergesMonotonically) {
  Rng rng(7);
  for (int k = 0; k < 30; ++k) {
    const int r = 2 + static_cast<int>(uniform_index(rng, 10)), c = 2 + static_cast<int>(uniform_index(rng, 20));
    MatD m = testing::random_matrix(r, c, rng, std::sqrt(2.0 / (r + c)));
    double prev = orthogonality_error(m);
    for (int s = 0; s < 20; ++s) {
      ASSERT_TRUE(semi_orthogonal_step(m));
      const double e = orthogonality_error(m);
      EXPECT_LE(e, prev + 1e-12) << "matrix " << k << " step " << s;
      prev = e;
    }
    EXPECT_LT(prev, 1e-3) << r << "x" << c;
  }
}

TEST(SemiOrthogonal, ZeroMatrixIsSkipped) {
  set_quiet_warnings(true);
  MatD z = MatD::Zero(3, 4);
  EXPECT_FALSE(semi_orthogonal_step(z));
  EXPECT_TRUE(z.isZero());
  set_quiet_warnings(false);
}

TEST(SemiOrthogonal, TensorOverload) {
  Rng rng(8);
  Tensor<float> t("f", {3, 9});
  randomize(t, rng);
  const double before = orthogonality_error(Mat<float>(t.mat()));
  EXPECT_TRUE(semi_orthogonal_step(t));
  EXPECT_LT(orthogonality_error(Mat<float>(t.mat())), before);
}

TEST(Network, FusionNamesRoundTrip) {
  for (auto m : {FusionMode::kAudioOnly, FusionMode::kVisualOnly, FusionMode::kConcat, FusionMode::kVGate,
                 FusionMode::kAVGate})
    EXPECT_EQ(parse_fusion(fusion_name(m)), m);
  EXPECT_THROW(parse_fusion("late"), Error);
  EXPECT_EQ((Architecture{FusionMode::kVGate, true}).label(), "vgate+concat");
  EXPECT_THROW((Architecture{FusionMode::kConcat, true}).validate(), Error);
}

TEST(Network, SubNetworksPerArchitecture) {
  NetworkDims d;
  d.hidden = 16;
  d.bottleneck = 4;
  auto count = [&](FusionMode m, bool pc) {
    auto n = build_network<float>({m, pc}, d, 1);
    return std::vector<std::size_t>{n.frontend.size(), n.audio_net.size(), n.visual_net.size(), n.fusion_net.size(),
                                    n.recog_net.size()};
  };
  using V = std::vector<std::size_t>;
  EXPECT_EQ(count(FusionMode::kAudioOnly, false), (V{0, 0, 0, 0, 6}));
  EXPECT_EQ(count(FusionMode::kVisualOnly, false), (V{2, 0, 0, 0, 6}));
  EXPECT_EQ(count(FusionMode::kConcat, false), (V{2, 0, 0, 0, 6}));
  EXPECT_EQ(count(FusionMode::kVGate, false), (V{2, 6, 6, 0, 6}));
  EXPECT_EQ(count(FusionMode::kAVGate, true), (V{2, 6, 6, 3, 6}));

  auto av = build_network<float>({FusionMode::kAVGate, true}, d, 1);
  EXPECT_EQ(av.recog_input_dim(), 32);
  EXPECT_EQ(av.recog_net[0].cfg.in_dim, 32);
  EXPECT_EQ(av.fusion_net[0].cfg.in_dim, 32);
  EXPECT_FALSE(av.fusion_net.back().cfg.relu);
  EXPECT_TRUE(av.visual_net.back().cfg.relu);
  auto vg = build_network<float>({FusionMode::kVGate, false}, d, 1);
  EXPECT_FALSE(vg.visual_net.back().cfg.relu);
  auto cc = build_network<float>({FusionMode::kConcat, false}, d, 1);
  EXPECT_EQ(cc.recog_input_dim(), 40 + 16);
  EXPECT_EQ(av.constrained_factors().size(), 2u + 6 + 6 + 3 + 6);
}

TEST(Network, InitializationIsSeeded) {
  NetworkDims d;
  d.hidden = 8;
  d.bottleneck = 4;
  auto a = build_network<double>({FusionMode::kVGate, false}, d, 5);
  auto b = build_network<double>({FusionMode::kVGate, false}, d, 5);
  auto c = build_network<double>({FusionMode::kVGate, false}, d, 6);
  EXPECT_EQ(a.recog_net[0].factor_in.values, b.recog_net[0].factor_in.values);
  EXPECT_NE(a.recog_net[0].factor_in.values, c.recog_net[0].factor_in.values);
  for (double v : a.output_weight.values) EXPECT_EQ(v, 0.0);
  // Glorot bound.
  const auto &f = a.audio_net[0].factor_in;
  const double bound = std::sqrt(6.0 / (f.rows() + f.cols()));
  for (double v : f.values) EXPECT_LE(std::abs(v), bound);
  std::size_t n = 0;
  for (auto *p : a.parameters()) n += p->numel();
  EXPECT_EQ(a.num_parameters(), n);
}

TEST(Network, CopyValuesAcrossPrecision) {
  NetworkDims d;
  d.hidden = 8;
  d.bottleneck = 4;
  auto a = build_network<double>({FusionMode::kAVGate, false}, d, 5);
  auto f = build_network<float>({FusionMode::kAVGate, false}, d, 9);
  f.copy_values_from(a);
  EXPECT_EQ(f.fusion_net[1].factor_out.values[3], static_cast<float>(a.fusion_net[1].factor_out.values[3]));
  auto other = build_network<float>({FusionMode::kVGate, false}, d, 9);
  EXPECT_THROW(other.copy_values_from(a), Error);
}

}  // namespace
}  // namespace avsr
