#include <random>

#include <gtest/gtest.h>

#include "graspkit/calibration.hpp"
#include "graspkit/error.hpp"
#include "test_support.hpp"

using namespace graspkit;

namespace {

Mat7 random_full_rank(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat7 T;
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) T(i, j) = n(rng);
  return T + 3.0 * Mat7::Identity();
}

std::vector<Observation> protocol(const Mat7& T, std::uint64_t seed, double noise = 0.0) {
  std::mt19937_64 rng(seed);
  return synth_observations(T, protocol_camera_poses(rng), noise, &rng);
}

}  // namespace

TEST(Pinv, MatchesNormalEquationsOnFullRank) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Random(7, 40);
  int rank = 0;
  const Eigen::MatrixXd p = pinv(a, &rank);
  EXPECT_EQ(rank, 7);
  const Eigen::MatrixXd ref = a.transpose() * (a * a.transpose()).inverse();
  EXPECT_LT((p - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pinv, ZeroesTinySingularValues) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = 1e-14;
  int rank = 0;
  const Eigen::MatrixXd p = pinv(a, &rank);
  EXPECT_EQ(rank, 1);
  EXPECT_EQ(p(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(p(0, 0), 1.0);
}

TEST(Protocol, FortyCanonicalPosesOfFullRank) {
  std::mt19937_64 rng(5);
  const auto cams = protocol_camera_poses(rng);
  ASSERT_EQ(cams.size(), 40u);
  for (const auto& c : cams) {
    EXPECT_NEAR(c.rotation().norm(), 1.0, 1e-12);
    EXPECT_GE(c.qw, 0.0);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(stack_poses(cams));
  EXPECT_EQ(lu.rank(), 7);
}

TEST(FitMapping, IdentityRelation) {
  const auto obs = protocol(Mat7::Identity(), 2);
  const auto fit = fit_mapping(obs);
  EXPECT_LT((fit.T - Mat7::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(fit.rank, 7);
  EXPECT_EQ(fit.duplicates, 0u);
}

TEST(FitMapping, RecoversRandomMappingExactly) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const Mat7 Ts = random_full_rank(rng);
    const auto obs = protocol(Ts, 100 + std::uint64_t(t));
    ASSERT_EQ(obs.size(), 40u);
    const Mat7 T = fit_mapping(obs).T;
    EXPECT_LT((T - Ts).cwiseAbs().maxCoeff(), 1e-9) << t;
    // Held-out poses from a different draw of the protocol.
    std::mt19937_64 held(7000 + std::uint64_t(t));
    for (const auto& c : protocol_camera_poses(held, 3))
      EXPECT_LT((T * c.vector() - Ts * c.vector()).norm(), 1e-9);
  }
}

TEST(FitMapping, NominalRigReproducesTrainingPoses) {
  const Mat7 Ts = nominal_rig();
  const auto obs = protocol(Ts, 4);
  const Mat7 T = fit_mapping(obs).T;
  for (const auto& o : obs) {
    // Recorded robot quaternions are raw T* c; compare in canonical sign.
    const Pose7 want(o.robot.position(), o.robot.rotation());
    const Pose7 r = apply_mapping(T, o.camera);
    EXPECT_LT((r.vector() - want.vector()).norm(), 1e-6);
  }
}

TEST(FitMapping, NoisyFitIsLeastSquaresOptimal) {
  std::mt19937_64 rng(21);
  const Mat7 Ts = random_full_rank(rng);
  const auto obs = protocol(Ts, 22, 1e-3);
  const Mat7 T = fit_mapping(obs).T;
  const double r = mapping_residual(T, obs);
  EXPECT_LE(r, mapping_residual(Ts, obs));
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int k = 0; k < 50; ++k) {
    Mat7 P = T;
    for (int i = 0; i < 49; ++i) P.data()[i] += n(rng);
    EXPECT_LE(r, mapping_residual(P, obs));
  }
}

TEST(FitMapping, TooFewObservationsIsDegenerate) {
  auto obs = protocol(Mat7::Identity(), 3);
  obs.resize(6);
  try {
    fit_mapping(obs);
    FAIL();
  } catch (const degenerate_observations_error& e) {
    EXPECT_LE(e.rank(), 6);
    EXPECT_NE(std::string(e.what()).find("rank"), std::string::npos);
  }
}

TEST(FitMapping, LevelCameraIsDegenerate) {
  std::vector<Observation> obs;
  for (int p = 0; p < 10; ++p)
    for (double deg : {0.0, 45.0, 90.0, 135.0}) {
      const Pose7 c(Eigen::Vector3d(0.01 * p, 0.02 * p * p, 0.5 + 0.01 * p), rpy_quat(kPi, 0, deg * kPi / 180));
      obs.push_back({c, c});
    }
  EXPECT_THROW(fit_mapping(obs), degenerate_observations_error);
}

TEST(FitMapping, DuplicatesAreCounted) {
  auto obs = protocol(Mat7::Identity(), 3);
  obs.push_back(obs[0]);
  obs.push_back(obs[5]);
  EXPECT_EQ(fit_mapping(obs).duplicates, 2u);
}

TEST(ApplyMapping, IdentityAndRenormalisation) {
  const Pose7 c(Eigen::Vector3d(0.1, -0.2, 0.5), rpy_quat(kPi, 0, 0.7));
  const Pose7 r = apply_mapping(Mat7::Identity(), c);
  EXPECT_LT((r.vector() - c.vector()).norm(), 1e-15);

  Mat7 S = Mat7::Identity();
  S.block<4, 4>(3, 3) *= 0.98;
  const Pose7 s = apply_mapping(S, c);
  EXPECT_NEAR(s.rotation().norm(), 1.0, 1e-15);
  EXPECT_LT((s.vector() - c.vector()).norm(), 1e-12);

  // A negative scale flips the sign; the output is canonical again.
  Mat7 N = Mat7::Identity();
  N.block<4, 4>(3, 3) *= -0.5;
  const Pose7 n = apply_mapping(N, Pose7(Eigen::Vector3d::Zero(), rpy_quat(0.3, 0.2, 0.1)));
  EXPECT_GE(n.qw, 0.0);

  Mat7 Z = Mat7::Identity();
  Z.block<4, 4>(3, 3).setZero();
  EXPECT_THROW(apply_mapping(Z, c), mapping_degenerate_error);
}

TEST(ApplyMapping, AlwaysUnitWithNonNegativeW) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> a(-3, 3);
  for (int t = 0; t < 200; ++t) {
    const Mat7 T = random_full_rank(rng);
    const Pose7 c(Eigen::Vector3d(a(rng), a(rng), a(rng)), rpy_quat(a(rng), a(rng) / 2, a(rng)));
    try {
      const Pose7 r = apply_mapping(T, c);
      EXPECT_NEAR(r.rotation().norm(), 1.0, 1e-12);
      EXPECT_GE(r.qw, 0.0);
    } catch (const mapping_degenerate_error&) {
    }
  }
}

TEST(Files, ObservationCsvRoundTrip) {
  TempDir dir;
  const auto obs = protocol(nominal_rig(), 8, 1e-3);
  write_text(dir / "obs.csv", observations_csv(obs));
  const auto back = read_observations(dir / "obs.csv");
  ASSERT_EQ(back.size(), obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    EXPECT_EQ(back[i].camera.vector(), obs[i].camera.vector());
    EXPECT_EQ(back[i].robot.vector(), obs[i].robot.vector());
  }
  EXPECT_EQ(read_text(dir / "obs.csv").substr(0, 44), std::string(kObservationHeader).substr(0, 44));
}

TEST(Files, ObservationCsvErrors) {
  TempDir dir;
  write_text(dir / "h.csv", "a,b\n");
  EXPECT_THROW(read_observations(dir / "h.csv"), format_error);
  write_text(dir / "n.csv", std::string(kObservationHeader) + "\n1,2,3\n");
  EXPECT_THROW(read_observations(dir / "n.csv"), format_error);
  write_text(dir / "x.csv", std::string(kObservationHeader) + "\n1,2,3,4,5,6,7,8,9,10,11,12,13,zz\n");
  try {
    read_observations(dir / "x.csv");
    FAIL();
  } catch (const format_error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  EXPECT_THROW(read_observations(dir / "missing.csv"), io_error);
}

TEST(Files, MappingJsonRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(4);
  const Mat7 T = random_full_rank(rng);
  write_text(dir / "m.json", mapping_to_json(T).dump());
  EXPECT_EQ(load_mapping(dir / "m.json"), T);
  write_text(dir / "bad.json", "[[1,2],[3]]");
  EXPECT_THROW(load_mapping(dir / "bad.json"), format_error);
  write_text(dir / "junk.json", "{");
  EXPECT_THROW(load_mapping(dir / "junk.json"), format_error);
}
