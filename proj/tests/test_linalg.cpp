// Copyright 2026 The FedPower Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "fedpower/fpmx.hpp"
#include "fedpower/linalg.hpp"
#include "fedpower/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fedpower;
using Catch::Approx;

TEST_CASE("matmul identity and hand cases", "[linalg]") {
  RngStream rng(7, {1});
  DenseMatrix m = testutil::random_matrix(3, 5, rng);
  DenseMatrix im = matmul(DenseMatrix::identity(3), m);
  REQUIRE(testutil::max_abs_diff(im, m) == 0.0);

  DenseMatrix a(2, 2, {1, 2, 3, 4});
  DenseMatrix b(2, 1, {0, 1});
  DenseMatrix c = matmul(a, b);
  REQUIRE(c(0, 0) == 2.0);
  REQUIRE(c(1, 0) == 4.0);
}

TEST_CASE("matmul matches the naive triple-loop oracle", "[linalg]") {
  RngStream rng(11, {2});
  {
    DenseMatrix a = testutil::random_matrix(5, 7, rng);
    DenseMatrix b = testutil::random_matrix(7, 3, rng);
    REQUIRE(testutil::max_abs_diff(matmul(a, b),
                                   oracles::naive_matmul(a, b)) < 1e-12);
  }
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.next_below(12);
    const std::size_t k = 1 + rng.next_below(12);
    const std::size_t n = 1 + rng.next_below(12);
    DenseMatrix a = testutil::random_matrix(m, k, rng);
    DenseMatrix b = testutil::random_matrix(k, n, rng);
    DenseMatrix ours = matmul(a, b);
    DenseMatrix ref = oracles::naive_matmul(a, b);
    const double scale = std::max(1.0, frobenius_norm(ref));
    REQUIRE(testutil::max_abs_diff(ours, ref) / scale < 1e-12);
  }
}

TEST_CASE("matmul rejects dimension mismatch", "[linalg]") {
  DenseMatrix a(2, 3), b(4, 2);
  REQUIRE_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("frobenius norm closed cases", "[linalg]") {
  REQUIRE(frobenius_norm(DenseMatrix(4, 4)) == 0.0);
  REQUIRE(frobenius_norm(DenseMatrix::identity(3)) ==
          Approx(std::sqrt(3.0)).epsilon(1e-15));
  REQUIRE(frobenius_norm(DenseMatrix(1, 2, {3, 4})) == Approx(5.0));
}

namespace {

double orthonormality_defect_cols(const DenseMatrix& q) {
  DenseMatrix gram = matmul(transpose(q), q);
  return testutil::max_abs_diff(gram, DenseMatrix::identity(q.cols()));
}

}  // namespace

TEST_CASE("orthonormalize_columns basics", "[linalg]") {
  RngStream rng(13, {3});

  SECTION("orthonormal input comes back unchanged up to sign") {
    OrthoResult base = orthonormalize_columns(
        testutil::random_matrix(4, 2, rng), rng);
    OrthoResult again = orthonormalize_columns(base.basis, rng);
    REQUIRE_FALSE(again.rank_deficient);
    REQUIRE(orthonormality_defect_cols(again.basis) < 1e-12);
    for (std::size_t j = 0; j < 2; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 4; ++i) {
        dot += base.basis(i, j) * again.basis(i, j);
      }
      REQUIRE(std::abs(dot) == Approx(1.0).epsilon(1e-10));
    }
  }

  SECTION("axis-aligned columns") {
    DenseMatrix m(3, 2, {2, 0, 0, 0, 0, 3});
    OrthoResult r = orthonormalize_columns(m, rng);
    REQUIRE(std::abs(r.basis(0, 0)) == Approx(1.0));
    REQUIRE(std::abs(r.basis(2, 1)) == Approx(1.0));
    REQUIRE(std::abs(r.basis(1, 0)) < 1e-14);
    REQUIRE(std::abs(r.basis(1, 1)) < 1e-14);
  }

  SECTION("span matches a Householder QR oracle") {
    DenseMatrix m = testutil::random_matrix(6, 3, rng);
    OrthoResult r = orthonormalize_columns(m, rng);
    REQUIRE_FALSE(r.rank_deficient);
    REQUIRE(orthonormality_defect_cols(r.basis) < 1e-10);
    DenseMatrix ours = oracles::projector(r.basis);
    DenseMatrix ref = oracles::projector(oracles::householder_q(m));
    REQUIRE(testutil::max_abs_diff(ours, ref) < 1e-10);
  }

  SECTION("rows < cols is a shape error") {
    REQUIRE_THROWS_AS(orthonormalize_columns(DenseMatrix(2, 3), rng),
                      ShapeError);
  }

  SECTION("rank-deficient input is repaired and flagged") {
    DenseMatrix m(5, 3);
    m(0, 0) = 1.0;
    m(0, 1) = 1.0;  // duplicate direction
    m(1, 2) = 1.0;
    OrthoResult r = orthonormalize_columns(m, rng);
    REQUIRE(r.rank_deficient);
    REQUIRE(orthonormality_defect_cols(r.basis) < 1e-10);
  }

  SECTION("zero matrix yields a random orthonormal basis") {
    OrthoResult r = orthonormalize_columns(DenseMatrix(4, 2), rng);
    REQUIRE(r.rank_deficient);
    REQUIRE(orthonormality_defect_cols(r.basis) < 1e-10);
  }
}

TEST_CASE("orthonormalize_rows mirrors the column operation", "[linalg]") {
  RngStream rng(17, {4});

  SECTION("orthonormal rows unchanged up to sign") {
    OrthoResult base =
        orthonormalize_rows(testutil::random_matrix(2, 4, rng), rng);
    OrthoResult again = orthonormalize_rows(base.basis, rng);
    DenseMatrix gram = matmul(again.basis, transpose(again.basis));
    REQUIRE(testutil::max_abs_diff(gram, DenseMatrix::identity(2)) < 1e-12);
  }

  SECTION("axis-aligned rows") {
    DenseMatrix m(2, 3, {2, 0, 0, 0, 0, 3});
    OrthoResult r = orthonormalize_rows(m, rng);
    REQUIRE(std::abs(r.basis(0, 0)) == Approx(1.0));
    REQUIRE(std::abs(r.basis(1, 2)) == Approx(1.0));
  }

  SECTION("span matches the QR oracle on the transpose") {
    DenseMatrix m = testutil::random_matrix(3, 6, rng);
    OrthoResult r = orthonormalize_rows(m, rng);
    DenseMatrix ours = oracles::projector(transpose(r.basis));
    DenseMatrix ref =
        oracles::projector(oracles::householder_q(transpose(m)));
    REQUIRE(testutil::max_abs_diff(ours, ref) < 1e-10);
  }

  SECTION("cols < rows is a shape error") {
    REQUIRE_THROWS_AS(orthonormalize_rows(DenseMatrix(3, 2), rng), ShapeError);
  }
}

TEST_CASE("gaussian_matrix statistics and determinism", "[linalg]") {
  SECTION("zero stddev gives the exact zero matrix") {
    RngStream rng(1, {5});
    DenseMatrix z = gaussian_matrix(8, 8, 0.0, rng);
    REQUIRE(frobenius_norm(z) == 0.0);
  }

  SECTION("empirical mean and std at 1e5 samples") {
    RngStream rng(123, {6});
    DenseMatrix m = gaussian_matrix(250, 400, 1.0, rng);  // 1e5 entries
    double sum = 0.0, sum_sq = 0.0;
    for (double v : m.data()) {
      sum += v;
      sum_sq += v * v;
    }
    const double n = static_cast<double>(m.size());
    const double mean = sum / n;
    const double stddev = std::sqrt(sum_sq / n - mean * mean);
    REQUIRE(std::abs(mean) < 0.02);
    REQUIRE(std::abs(stddev - 1.0) < 0.01);
  }

  SECTION("same (seed, path) twice is bit-identical") {
    RngStream r1(42, {9, 1});
    RngStream r2(42, {9, 1});
    DenseMatrix a = gaussian_matrix(5, 5, 2.0, r1);
    DenseMatrix b = gaussian_matrix(5, 5, 2.0, r2);
    REQUIRE(a.data() == b.data());
  }

  SECTION("distinct paths differ") {
    RngStream r1(42, {9, 1});
    RngStream r2(42, {9, 2});
    DenseMatrix a = gaussian_matrix(5, 5, 1.0, r1);
    DenseMatrix b = gaussian_matrix(5, 5, 1.0, r2);
    REQUIRE(testutil::max_abs_diff(a, b) > 0.0);
  }
}

TEST_CASE("projection never grows the Frobenius norm", "[linalg]") {
  RngStream rng(31, {7});
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 2 + rng.next_below(14);
    const std::size_t n = 2 + rng.next_below(14);
    const std::size_t r = 1 + rng.next_below(std::min(m, n));
    DenseMatrix w = testutil::random_matrix(m, n, rng);
    OrthoResult p =
        orthonormalize_columns(testutil::random_matrix(m, r, rng), rng);
    OrthoResult q =
        orthonormalize_rows(testutil::random_matrix(r, n, rng), rng);
    REQUIRE(frobenius_norm(matmul(transpose(p.basis), w)) <=
            frobenius_norm(w) + 1e-9);
    REQUIRE(frobenius_norm(matmul(w, transpose(q.basis))) <=
            frobenius_norm(w) + 1e-9);
  }
}

TEST_CASE("orthonormalization is idempotent up to column sign", "[linalg]") {
  RngStream rng(37, {8});
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 3 + rng.next_below(10);
    const std::size_t c = 1 + rng.next_below(m);
    OrthoResult once =
        orthonormalize_columns(testutil::random_matrix(m, c, rng), rng);
    OrthoResult twice = orthonormalize_columns(once.basis, rng);
    REQUIRE(testutil::max_abs_diff(oracles::projector(once.basis),
                                   oracles::projector(twice.basis)) < 1e-12);
    for (std::size_t j = 0; j < c; ++j) {
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        dot += once.basis(i, j) * twice.basis(i, j);
      }
      REQUIRE(std::abs(std::abs(dot) - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("RngStream determinism and stream independence", "[linalg]") {
  RngStream a(99, {1, 2, 3});
  RngStream b(99, {1, 2, 3});
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

  RngStream parent(99, {1});
  RngStream c1 = parent.child({5});
  RngStream c2 = parent.child({6});
  int equal = 0;
  for (int i = 0; i < 64; ++i) equal += c1.next_u64() == c2.next_u64();
  REQUIRE(equal == 0);
}

TEST_CASE("sample_without_replacement draws distinct indices", "[linalg]") {
  RngStream rng(5, {11});
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t pop = 1 + rng.next_below(50);
    const std::size_t k = rng.next_below(pop + 1);
    std::vector<std::size_t> s = rng.sample_without_replacement(pop, k);
    REQUIRE(s.size() == k);
    std::sort(s.begin(), s.end());
    REQUIRE(std::adjacent_find(s.begin(), s.end()) == s.end());
    for (std::size_t v : s) REQUIRE(v < pop);
  }
}

TEST_CASE("FPMX byte layout and round trip", "[linalg][fpmx]") {
  SECTION("golden bytes") {
    DenseMatrix m(1, 2, {1.0, -2.0});
    std::string bytes = encode_fpmx(m);
    REQUIRE(bytes.size() == 12 + 16);
    REQUIRE(bytes.substr(0, 4) == "FPMX");
    // rows=1, cols=2 little-endian
    REQUIRE(static_cast<unsigned char>(bytes[4]) == 1);
    REQUIRE(static_cast<unsigned char>(bytes[5]) == 0);
    REQUIRE(static_cast<unsigned char>(bytes[8]) == 2);
    // 1.0 = 0x3FF0000000000000 little-endian: 00 .. 00 F0 3F
    REQUIRE(static_cast<unsigned char>(bytes[12]) == 0x00);
    REQUIRE(static_cast<unsigned char>(bytes[18]) == 0xF0);
    REQUIRE(static_cast<unsigned char>(bytes[19]) == 0x3F);
    // -2.0 = 0xC000000000000000
    REQUIRE(static_cast<unsigned char>(bytes[27]) == 0xC0);
  }

  SECTION("file round trip is bit-exact") {
    RngStream rng(3, {12});
    DenseMatrix m = testutil::random_matrix(7, 5, rng);
    const std::string path =
        (std::filesystem::temp_directory_path() / "fedpower_rt.fpmx").string();
    write_fpmx(path, m);
    DenseMatrix back = read_fpmx(path);
    REQUIRE(back.rows() == m.rows());
    REQUIRE(back.cols() == m.cols());
    REQUIRE(back.data() == m.data());
    std::remove(path.c_str());
  }

  SECTION("corrupt input is rejected") {
    REQUIRE_THROWS_AS(decode_fpmx("BOGUS"), IoError);
    DenseMatrix m(2, 2, {1, 2, 3, 4});
    std::string truncated = encode_fpmx(m).substr(0, 20);
    REQUIRE_THROWS_AS(decode_fpmx(truncated), IoError);
  }
}
