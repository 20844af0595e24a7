#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "treereg/cloud_io.hpp"
#include "treereg/point_cloud.hpp"
#include "treereg/rng.hpp"

namespace {

using treereg::PointCloud;
using treereg::Rng;

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_text(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

TEST(ReadXyz, ParsesPointsInFileOrder) {
  const auto path = temp_file("two_points.xyz");
  write_text(path, "0 0 0\n1 1 1\n");
  const PointCloud cloud = treereg::read_xyz(path.string());
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud.points[0], Eigen::Vector3d(0, 0, 0));
  EXPECT_EQ(cloud.points[1], Eigen::Vector3d(1, 1, 1));
  EXPECT_EQ(cloud.channel_dim, 0u);
}

TEST(ReadXyz, CommentsAndBlankLinesSkipped) {
  const auto path = temp_file("comments.xyz");
  write_text(path, "# header\n\n1 2 3  # trailing comment\n   \n4 5 6\n");
  const PointCloud cloud = treereg::read_xyz(path.string());
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud.points[1], Eigen::Vector3d(4, 5, 6));
}

TEST(ReadXyz, ExtraFieldsBecomeChannels) {
  const auto path = temp_file("channels.xyz");
  write_text(path, "1 2 3 0.5 9\n4 5 6 0.25 8\n");
  const PointCloud cloud = treereg::read_xyz(path.string());
  ASSERT_EQ(cloud.channel_dim, 2u);
  ASSERT_EQ(cloud.channels.size(), 4u);
  EXPECT_DOUBLE_EQ(cloud.channels[0], 0.5);
  EXPECT_DOUBLE_EQ(cloud.channels[3], 8.0);
}

TEST(ReadXyz, EmptyFileIsError) {
  const auto path = temp_file("empty.xyz");
  write_text(path, "");
  EXPECT_THROW(
      {
        try {
          treereg::read_xyz(path.string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("empty cloud"),
                    std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

TEST(ReadXyz, TooFewFieldsReportsLineNumber) {
  const auto path = temp_file("short_line.xyz");
  write_text(path, "0 0 0\n1 2\n");
  EXPECT_THROW(
      {
        try {
          treereg::read_xyz(path.string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

TEST(ReadXyz, InconsistentChannelCountIsError) {
  const auto path = temp_file("inconsistent.xyz");
  write_text(path, "0 0 0 1\n1 1 1\n");
  EXPECT_THROW(treereg::read_xyz(path.string()), std::runtime_error);
}

TEST(ReadXyz, MissingFileIsError) {
  EXPECT_THROW(treereg::read_xyz("/nonexistent/no.xyz"), std::runtime_error);
}

TEST(WriteXyz, RoundTripPreservesValues) {
  PointCloud cloud;
  cloud.points = {{0.125, -3.5, 2.0}, {1e-9, 7.25, -0.0625}};
  cloud.channel_dim = 1;
  cloud.channels = {0.75, 0.5};
  const auto path = temp_file("roundtrip.xyz");
  treereg::write_xyz(path.string(), cloud);
  const PointCloud back = treereg::read_xyz(path.string());
  ASSERT_EQ(back.size(), 2u);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(back.points[i], cloud.points[i]);
  }
  EXPECT_EQ(back.channels, cloud.channels);
}

TEST(ReadKittiBin, DecodesFloat32Quadruples) {
  const auto path = temp_file("scan.bin");
  const std::vector<float> raw = {1, 2, 3, 0.5f, 4, 5, 6, 0.1f};
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size() * sizeof(float)));
  out.close();

  const PointCloud cloud = treereg::read_kitti_bin(path.string());
  ASSERT_EQ(cloud.size(), 2u);
  EXPECT_EQ(cloud.points[0], Eigen::Vector3d(1, 2, 3));
  EXPECT_EQ(cloud.points[1], Eigen::Vector3d(4, 5, 6));
  ASSERT_EQ(cloud.channel_dim, 1u);
  EXPECT_FLOAT_EQ(static_cast<float>(cloud.channels[0]), 0.5f);
  EXPECT_FLOAT_EQ(static_cast<float>(cloud.channels[1]), 0.1f);
}

TEST(ReadKittiBin, SizeNotMultipleOf16IsError) {
  const auto path = temp_file("bad_size.bin");
  write_text(path, std::string(17, 'x'));
  EXPECT_THROW(treereg::read_kitti_bin(path.string()), std::runtime_error);
}

TEST(ReadKittiBin, EmptyFileIsError) {
  const auto path = temp_file("empty.bin");
  write_text(path, "");
  EXPECT_THROW(
      {
        try {
          treereg::read_kitti_bin(path.string());
        } catch (const std::runtime_error& e) {
          EXPECT_NE(std::string(e.what()).find("empty cloud"),
                    std::string::npos);
          throw;
        }
      },
      std::runtime_error);
}

PointCloud cloud_from(const std::vector<Eigen::Vector3d>& pts) {
  PointCloud c;
  c.points = pts;
  return c;
}

TEST(NormalizePair, SymmetricBoxGetsScaleTwo) {
  const auto a = cloud_from({{-2, -2, -2}, {2, 2, 2}});
  const auto b = cloud_from({{0, 0, 0}});
  const auto norm = treereg::normalize_pair(a, b);
  EXPECT_DOUBLE_EQ(norm.info.scale, 2.0);
  EXPECT_EQ(norm.info.center, Eigen::Vector3d(0, 0, 0));
  for (const auto& p : norm.source.points) {
    EXPECT_LE(p.cwiseAbs().maxCoeff(), 1.0);
  }
}

TEST(NormalizePair, AlreadyNormalizedIsIdentity) {
  const auto a = cloud_from({{-1, -1, -1}, {1, 1, 1}, {0.5, -0.25, 0}});
  const auto b = cloud_from({{0.1, 0.2, 0.3}});
  const auto norm = treereg::normalize_pair(a, b);
  EXPECT_DOUBLE_EQ(norm.info.scale, 1.0);
  EXPECT_EQ(norm.info.center, Eigen::Vector3d(0, 0, 0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(norm.source.points[i], a.points[i]);
  }
}

TEST(NormalizePair, AnisotropicBoxUsesMaxExtent) {
  const auto a = cloud_from({{0, 0, 0}, {10, 2, 2}});
  const auto b = cloud_from({{5, 1, 1}});
  const auto norm = treereg::normalize_pair(a, b);
  EXPECT_DOUBLE_EQ(norm.info.scale, 5.0);
  EXPECT_EQ(norm.info.center, Eigen::Vector3d(5, 1, 1));
  double max_abs = 0;
  for (const auto& p : norm.source.points) {
    max_abs = std::max(max_abs, p.cwiseAbs().maxCoeff());
  }
  EXPECT_DOUBLE_EQ(max_abs, 1.0);
}

TEST(NormalizePair, IdempotentWithinTolerance) {
  Rng rng(11);
  PointCloud a, b;
  for (int i = 0; i < 50; ++i) {
    a.points.emplace_back(rng.uniform(-3, 7), rng.uniform(0, 2),
                          rng.uniform(-1, 1));
    b.points.emplace_back(rng.uniform(-3, 7), rng.uniform(0, 2),
                          rng.uniform(-1, 1));
  }
  const auto first = treereg::normalize_pair(a, b);
  const auto second = treereg::normalize_pair(first.source, first.target);
  EXPECT_NEAR(second.info.scale, 1.0, 1e-12);
  EXPECT_LE(second.info.center.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizePair, DegenerateBoxIsError) {
  const auto a = cloud_from({{1, 1, 1}, {1, 1, 1}});
  const auto b = cloud_from({{1, 1, 1}});
  EXPECT_THROW(treereg::normalize_pair(a, b), std::invalid_argument);
}

TEST(Rng, DeterministicUnderSeed) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(Rng, UniformStaysInRange) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, UniformIntCoversInclusiveRange) {
  Rng rng(2);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.uniform_int(3, 5);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 5);
    saw_lo |= v == 3;
    saw_hi |= v == 5;
  }
  EXPECT_TRUE(saw_lo);
  EXPECT_TRUE(saw_hi);
}

TEST(Rng, NormalHasRoughlyUnitMoments) {
  Rng rng(3);
  double sum = 0, sum_sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_NEAR(sum_sq / n, 1.0, 0.05);
}

TEST(Rng, SerializeRoundTripResumesStream) {
  Rng a(99);
  for (int i = 0; i < 17; ++i) a.next_u64();
  const std::string state = a.serialize();
  Rng b;
  b.deserialize(state);
  for (int i = 0; i < 100; ++i) {
    ASSERT_EQ(a.next_u64(), b.next_u64());
  }
}

TEST(Rng, ForkProducesIndependentStream) {
  Rng a(7);
  Rng child = a.fork();
  // Parent advanced by exactly one draw; child differs from parent.
  Rng reference(7);
  reference.next_u64();
  EXPECT_EQ(a.next_u64(), reference.next_u64());
  EXPECT_NE(child.next_u64(), reference.next_u64());
}

}  // namespace
