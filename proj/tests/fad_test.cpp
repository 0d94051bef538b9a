#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "support/testutil.hpp"
#include "zenfoley/fad.hpp"
#include "zenfoley/features.hpp"

using namespace zenfoley;
using namespace zenfoley::fad;
using zftest::TempDir;

namespace {

EmbeddingSet set_from(const std::vector<std::vector<double>>& rows) {
  EmbeddingSet s;
  s.backend = "direct";
  s.rows.resize(static_cast<Eigen::Index>(rows.size()),
                static_cast<Eigen::Index>(rows[0].size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      s.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return s;
}

// Deterministic standard normals (Box-Muller over SplitMix64 uniforms).
double next_normal(SplitMix64& rng) {
  double u1 = rng.next_unit();
  double u2 = rng.next_unit();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

TEST_CASE("gaussian stats: two-point formula, degenerate set, contract") {
  FrechetStats s = gaussian_stats(set_from({{0, 0}, {2, 2}}));
  CHECK(s.mu(0) == doctest::Approx(1.0));
  CHECK(s.mu(1) == doctest::Approx(1.0));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(s.sigma(i, j) == doctest::Approx(2.0));

  FrechetStats z = gaussian_stats(set_from({{1, 2}, {1, 2}, {1, 2}}));
  CHECK(z.sigma.norm() == doctest::Approx(0.0));

  EmbeddingSet one = set_from({{1, 2}});
  CHECK_THROWS_AS(gaussian_stats(one), ContractError);
}

TEST_CASE("frechet distance analytic cases") {
  // identical stats
  FrechetStats a = gaussian_stats(set_from({{0, 1}, {1, 0}, {2, 2}, {0.5, 0.25}}));
  CHECK(frechet_distance(a, a) < 1e-9);

  // 1-D: means 0 and 3, unit variances -> 9
  FrechetStats u, v;
  u.mu = Eigen::VectorXd::Zero(1);
  u.sigma = Eigen::MatrixXd::Identity(1, 1);
  v.mu = Eigen::VectorXd::Constant(1, 3.0);
  v.sigma = Eigen::MatrixXd::Identity(1, 1);
  CHECK(frechet_distance(u, v) == doctest::Approx(9.0).epsilon(1e-6));

  // commuting diagonal case: (1-2)^2 + (2-1)^2 = 2
  FrechetStats p, q;
  p.mu = Eigen::VectorXd::Zero(2);
  q.mu = Eigen::VectorXd::Zero(2);
  p.sigma = Eigen::Vector2d(1, 4).asDiagonal();
  q.sigma = Eigen::Vector2d(4, 1).asDiagonal();
  CHECK(frechet_distance(p, q) == doctest::Approx(2.0).epsilon(1e-6));

  // symmetry
  FrechetStats b = gaussian_stats(set_from({{3, 1}, {0, 0}, {1, 4}, {2, 0.5}}));
  CHECK(std::fabs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8);

  FrechetStats wrong;
  wrong.mu = Eigen::VectorXd::Zero(3);
  wrong.sigma = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(frechet_distance(a, wrong), DimensionError);
}

TEST_CASE("psd square root: R*R recovers the matrix; non-PSD rejected") {
  SplitMix64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    int n = 6;
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) m(i, j) = rng.next_sym();
    Eigen::MatrixXd psd = m.transpose() * m;
    Eigen::MatrixXd r = psd_sqrt(psd);
    CHECK((r * r - psd).norm() < 1e-6);
  }
  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(psd_sqrt(neg), ContractError);
}

TEST_CASE("sample statistics approach the true Gaussian (500 draws)") {
  SplitMix64 rng(77);
  int n = 500, d = 4;
  Eigen::VectorXd mu_true(d);
  mu_true << 1.0, -0.5, 2.0, 0.25;
  Eigen::VectorXd sd_true(d);
  sd_true << 1.0, 0.5, 2.0, 1.5;

  EmbeddingSet s;
  s.rows.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      s.rows(i, j) = mu_true(j) + sd_true(j) * next_normal(rng);
  FrechetStats st = gaussian_stats(s);
  for (int j = 0; j < d; ++j) {
    CHECK(std::fabs(st.mu(j) - mu_true(j)) < 0.15 * std::max(1.0, std::fabs(mu_true(j))));
    CHECK(std::fabs(st.sigma(j, j) - sd_true(j) * sd_true(j)) <
          0.15 * sd_true(j) * sd_true(j) + 0.05);
  }
}

TEST_CASE("frechet distance is invariant to clip ordering") {
  SplitMix64 rng(31);
  EmbeddingSet a, b;
  a.rows.resize(20, 3);
  b.rows.resize(24, 3);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 3; ++j) a.rows(i, j) = rng.next_sym();
  for (int i = 0; i < 24; ++i)
    for (int j = 0; j < 3; ++j) b.rows(i, j) = rng.next_sym() + 0.5;
  double d1 = frechet_distance(gaussian_stats(a), gaussian_stats(b));

  EmbeddingSet a2 = a;
  a2.rows.row(0).swap(a2.rows.row(19));
  a2.rows.row(3).swap(a2.rows.row(11));
  double d2 = frechet_distance(gaussian_stats(a2), gaussian_stats(b));
  CHECK(std::fabs(d1 - d2) < 1e-8);
  CHECK(d1 >= 0.0);
}

TEST_CASE("spectral-stats backend: 10 clips give a (10, 258) embedding set") {
  TempDir tmp;
  std::vector<ClipEntry> clips;
  for (int i = 0; i < 10; ++i) {
    auto w = zftest::make_sine(200.0 + 60.0 * i, 1.0, 24000);
    audio::write_wav(tmp.file("clip" + std::to_string(i) + ".wav"), w);
    clips.push_back({tmp.file("clip" + std::to_string(i) + ".wav"), 0});
  }
  audio::MelParams mel;  // 129 bands
  EmbeddingSet s = embed_clips(clips, "spectral-stats", mel, 1.0);
  CHECK(s.rows.rows() == 10);
  CHECK(s.rows.cols() == 258);

  // duplicated clip list duplicates rows
  std::vector<ClipEntry> dup = {clips[0], clips[0]};
  EmbeddingSet sd = embed_clips(dup, "spectral-stats", mel, 1.0);
  CHECK((sd.rows.row(0) - sd.rows.row(1)).norm() == 0.0);

  std::vector<ClipEntry> missing = {clips[0], {tmp.file("gone.wav"), 0}};
  try {
    embed_clips(missing, "spectral-stats", mel, 1.0);
    FAIL("expected io error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("gone.wav") != std::string::npos);
  }
  CHECK_THROWS_AS(embed_clips(clips, "vggish", mel, 1.0), ConfigError);
}

TEST_CASE("precomputed backend round-trips written embeddings bit-exactly") {
  TempDir tmp;
  SplitMix64 rng(9);
  std::vector<ClipEntry> clips;
  std::vector<std::vector<float>> truth;
  for (int i = 0; i < 4; ++i) {
    audio::ExternalFeatures f;
    f.rows = 1;
    f.cols = 5;
    f.values.resize(5);
    for (auto& v : f.values) v = static_cast<float>(rng.next_sym());
    truth.push_back(f.values);
    std::string p = tmp.file("e" + std::to_string(i) + ".cfe1");
    audio::save_external_features(p, f);
    clips.push_back({p, 0});
  }
  audio::MelParams mel;
  EmbeddingSet s = embed_clips(clips, "precomputed", mel, 1.0);
  CHECK(s.rows.rows() == 4);
  CHECK(s.rows.cols() == 5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j)
      CHECK(s.rows(i, j) == static_cast<double>(truth[static_cast<size_t>(i)][static_cast<size_t>(j)]));
}

TEST_CASE("evaluate: identical sets give zero, shift gives its squared norm") {
  TempDir tmp;
  SplitMix64 rng(123);
  int n = 500, d = 4;
  Eigen::Vector4d shift(1.0, -0.5, 0.5, 0.7);  // ||shift||^2 = 1.99

  std::vector<ClipEntry> ref, gen;
  for (int i = 0; i < n; ++i) {
    audio::ExternalFeatures fr, fg;
    fr.rows = fg.rows = 1;
    fr.cols = fg.cols = d;
    fr.values.resize(static_cast<size_t>(d));
    fg.values.resize(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j) {
      double base = next_normal(rng);
      fr.values[static_cast<size_t>(j)] = static_cast<float>(base);
      fg.values[static_cast<size_t>(j)] = static_cast<float>(next_normal(rng) + shift(j));
    }
    std::string pr = tmp.file("r" + std::to_string(i) + ".cfe1");
    std::string pg = tmp.file("g" + std::to_string(i) + ".cfe1");
    audio::save_external_features(pr, fr);
    audio::save_external_features(pg, fg);
    ref.push_back({pr, 2});
    gen.push_back({pg, 2});
  }

  audio::MelParams mel;
  FadReport zero = evaluate_fad(ref, ref, "precomputed", mel, 1.0);
  REQUIRE(zero.rows.size() == 1);
  CHECK(zero.rows[0].fad >= 0.0);
  CHECK(zero.rows[0].fad < 1e-9);

  FadReport shifted = evaluate_fad(gen, ref, "precomputed", mel, 1.0);
  double expect = shift.squaredNorm();
  CHECK(shifted.rows[0].fad == doctest::Approx(expect).epsilon(0.20));

  std::vector<ClipEntry> ref_two_cats = ref;
  ref_two_cats.push_back({ref[0].path, 3});
  CHECK_THROWS_AS(evaluate_fad(gen, ref_two_cats, "precomputed", mel, 1.0),
                  CoverageError);
}

TEST_CASE("report lists all seven categories with their names") {
  TempDir tmp;
  SplitMix64 rng(55);
  std::vector<ClipEntry> gen, ref;
  for (int cat = 0; cat < 7; ++cat) {
    for (int i = 0; i < 3; ++i) {
      audio::ExternalFeatures f;
      f.rows = 1;
      f.cols = 3;
      f.values = {static_cast<float>(rng.next_sym()),
                  static_cast<float>(rng.next_sym()),
                  static_cast<float>(rng.next_sym())};
      std::string p = tmp.file("c" + std::to_string(cat) + "_" + std::to_string(i) + ".cfe1");
      audio::save_external_features(p, f);
      gen.push_back({p, cat});
      ref.push_back({p, cat});
    }
  }
  audio::MelParams mel;
  FadReport r = evaluate_fad(gen, ref, "precomputed", mel, 1.0);
  REQUIRE(r.rows.size() == 7);
  const char* expected[7] = {"DogBark", "Footstep", "GunShot", "Keyboard",
                             "MovingMotorVehicle", "Rain", "Sneeze/Cough"};
  for (int i = 0; i < 7; ++i) {
    CHECK(r.rows[static_cast<size_t>(i)].category == i);
    CHECK(r.rows[static_cast<size_t>(i)].name == expected[i]);
    CHECK(r.rows[static_cast<size_t>(i)].n_generated == 3);
  }
  // records: one line per category
  std::string recs = r.records();
  CHECK(std::count(recs.begin(), recs.end(), '\n') == 7);
}
