#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "meshspm/mesh_io.hpp"
#include "meshspm/synth.hpp"

using namespace meshspm;

namespace {

class MeshIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("meshspm_io_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(path(name));
    out << content;
  }

  std::filesystem::path dir_;
};

TEST_F(MeshIoTest, ReadsMinimalAsciiPly) {
  write("mesh.ply",
        "ply\n"
        "format ascii 1.0\n"
        "comment generated elsewhere\n"
        "element vertex 4\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "element face 2\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0 0 0\n"
        "1 0 0\n"
        "1 1 0\n"
        "0 1 0\n"
        "3 0 1 2\n"
        "3 0 2 3\n");
  TriangleMesh mesh = read_ply(path("mesh.ply"));
  EXPECT_EQ(mesh.vertex_count(), 4);
  EXPECT_EQ(mesh.triangle_count(), 2);
  EXPECT_NEAR(mesh.total_area, 1.0, 1e-12);
}

TEST_F(MeshIoTest, SkipsExtraVertexProperties) {
  write("mesh.ply",
        "ply\n"
        "format ascii 1.0\n"
        "element vertex 3\n"
        "property float nx\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property float quality\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "9 0 0 0 1\n"
        "9 1 0 0 1\n"
        "9 0 1 0 1\n"
        "3 0 1 2\n");
  TriangleMesh mesh = read_ply(path("mesh.ply"));
  EXPECT_EQ(mesh.vertex_count(), 3);
  EXPECT_DOUBLE_EQ(mesh.vertices[1][0], 1.0);
}

TEST_F(MeshIoTest, RejectsBinaryAndQuads) {
  write("bin.ply", "ply\nformat binary_little_endian 1.0\nend_header\n");
  EXPECT_THROW(read_ply(path("bin.ply")), IoError);

  write("quad.ply",
        "ply\nformat ascii 1.0\n"
        "element vertex 4\n"
        "property float x\nproperty float y\nproperty float z\n"
        "element face 1\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
        "0 0 0\n1 0 0\n1 1 0\n0 1 0\n"
        "4 0 1 2 3\n");
  EXPECT_THROW(read_ply(path("quad.ply")), IoError);
}

TEST_F(MeshIoTest, TwoFileFormatRoundTrip) {
  write("vertices.txt", "0 0 0\n1 0 0\n0 1 0\n1 1 0.5\n");
  write("faces.txt", "0 1 2\n1 3 2\n");
  TriangleMesh mesh =
      read_vertex_face_files(path("vertices.txt"), path("faces.txt"));
  EXPECT_EQ(mesh.vertex_count(), 4);
  EXPECT_EQ(mesh.triangle_count(), 2);
  EXPECT_EQ(mesh.neighbors[1].size(), 3u);
}

TEST_F(MeshIoTest, TwoFileFormatBadLine) {
  write("vertices.txt", "0 0 0\n1 nonsense\n");
  write("faces.txt", "0 1 2\n");
  EXPECT_THROW(read_vertex_face_files(path("vertices.txt"), path("faces.txt")),
               IoError);
}

TEST_F(MeshIoTest, PlyWriteReadRoundTripWithScalars) {
  TriangleMesh mesh = make_grid_mesh(4, 5, 1.0, 0.1, 9);
  std::vector<double> score(static_cast<size_t>(mesh.vertex_count()));
  for (size_t v = 0; v < score.size(); ++v) score[v] = 0.25 * static_cast<double>(v);
  write_ply(path("out.ply"), mesh, {{"tfce", &score}});

  TriangleMesh back = read_ply(path("out.ply"));
  ASSERT_EQ(back.vertex_count(), mesh.vertex_count());
  ASSERT_EQ(back.triangle_count(), mesh.triangle_count());
  for (int v = 0; v < mesh.vertex_count(); ++v)
    for (int k = 0; k < 3; ++k)
      EXPECT_DOUBLE_EQ(back.vertices[v][k], mesh.vertices[v][k]);
  EXPECT_EQ(back.triangles, mesh.triangles);
}

TEST_F(MeshIoTest, MissingFile) {
  EXPECT_THROW(read_ply(path("absent.ply")), IoError);
}

}  // namespace
