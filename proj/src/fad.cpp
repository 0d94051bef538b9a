#include "zenfoley/fad.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "zenfoley/features.hpp"

namespace zenfoley::fad {

namespace {

std::string embedding_path(const std::string& clip_path) {
  if (clip_path.size() >= 5 &&
      clip_path.compare(clip_path.size() - 5, 5, ".cfe1") == 0)
    return clip_path;
  size_t dot = clip_path.find_last_of('.');
  size_t slash = clip_path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return clip_path + ".cfe1";
  return clip_path.substr(0, dot) + ".cfe1";
}

Eigen::VectorXd spectral_stats_embedding(const std::string& path,
                                         const audio::MelParams& mel,
                                         double clip_seconds) {
  audio::Waveform w = audio::load_wav(path, clip_seconds);
  w = audio::resample(w, mel.sample_rate);
  audio::MelSpec m = audio::melspectrogram(w, mel);
  Eigen::VectorXd e(2 * m.rows);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0, s2 = 0.0;
    for (int t = 0; t < m.frames; ++t) {
      double v = m.at(r, t);
      s += v;
      s2 += v * v;
    }
    double mu = s / m.frames;
    double var = std::max(0.0, s2 / m.frames - mu * mu);
    e(r) = mu;
    e(m.rows + r) = std::sqrt(var);
  }
  return e;
}

}  // namespace

EmbeddingSet embed_clips(const std::vector<ClipEntry>& clips,
                         const std::string& backend,
                         const audio::MelParams& mel, double clip_seconds) {
  if (backend != "precomputed" && backend != "spectral-stats")
    throw ConfigError("unknown embedding backend: " + backend);
  EmbeddingSet set;
  set.backend = backend;

  std::vector<std::string> missing;
  std::vector<Eigen::VectorXd> vecs;
  vecs.reserve(clips.size());
  for (const auto& clip : clips) {
    try {
      if (backend == "precomputed") {
        audio::RawMatrix m =
            audio::read_matrix_file(embedding_path(clip.path), "CFE1");
        Eigen::VectorXd e(static_cast<Eigen::Index>(m.values.size()));
        for (size_t i = 0; i < m.values.size(); ++i)
          e(static_cast<Eigen::Index>(i)) = m.values[i];
        vecs.push_back(std::move(e));
      } else {
        vecs.push_back(spectral_stats_embedding(clip.path, mel, clip_seconds));
      }
    } catch (const IoError&) {
      missing.push_back(clip.path);
    }
  }
  if (!missing.empty()) {
    std::string joined;
    for (const auto& p : missing) joined += (joined.empty() ? "" : ", ") + p;
    throw IoError("missing clip files: " + joined);
  }
  if (vecs.empty()) throw ContractError("embed_clips: empty clip list");
  Eigen::Index e_dim = vecs[0].size();
  for (const auto& v : vecs)
    if (v.size() != e_dim)
      throw DimensionError("embed_clips: inconsistent embedding sizes (" +
                           std::to_string(v.size()) + " vs " +
                           std::to_string(e_dim) + ")");
  set.rows.resize(static_cast<Eigen::Index>(vecs.size()), e_dim);
  for (size_t i = 0; i < vecs.size(); ++i)
    set.rows.row(static_cast<Eigen::Index>(i)) = vecs[i].transpose();
  return set;
}

FrechetStats gaussian_stats(const EmbeddingSet& e) {
  Eigen::Index n = e.rows.rows();
  if (n < 2)
    throw ContractError("gaussian_stats: need at least 2 clips, got " +
                        std::to_string(n));
  FrechetStats s;
  s.mu = e.rows.colwise().mean();
  Eigen::MatrixXd centered = e.rows.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  return s;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw ContractError("psd_sqrt: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-6)
      throw ContractError("psd_sqrt: eigenvalue " + std::to_string(ev(i)) +
                          " below tolerance; matrix is not PSD");
    ev(i) = std::sqrt(std::max(0.0, ev(i)));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
  if (a.mu.size() != b.mu.size())
    throw DimensionError("frechet_distance: dimension mismatch " +
                         std::to_string(a.mu.size()) + " vs " +
                         std::to_string(b.mu.size()));
  // tr((Sa Sb)^1/2) computed through the symmetric form
  // Sa^1/2 Sb Sa^1/2, which has the same eigenvalues.
  Eigen::MatrixXd ra = psd_sqrt(a.sigma);
  Eigen::MatrixXd inner = ra * b.sigma * ra;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner);
  if (es.info() != Eigen::Success)
    throw ContractError("frechet_distance: eigendecomposition failed");
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double ev = es.eigenvalues()(i);
    if (ev < -1e-6)
      throw ContractError("frechet_distance: product eigenvalue " +
                          std::to_string(ev) + " below tolerance");
    tr_sqrt += std::sqrt(std::max(0.0, ev));
  }
  double mu_term = (a.mu - b.mu).squaredNorm();
  double d = mu_term + a.sigma.trace() + b.sigma.trace() - 2.0 * tr_sqrt;
  if (d < 0.0 && d > -1e-6) d = 0.0;
  return d;
}

std::string FadReport::table() const {
  std::ostringstream os;
  os << "ID  Category             FAD         n_gen  n_ref\n";
  char line[128];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-3d %-20s %-11.5f %-6d %-6d\n",
                  r.category, r.name.c_str(), r.fad, r.n_generated,
                  r.n_reference);
    os << line;
  }
  return os.str();
}

std::string FadReport::records() const {
  std::ostringstream os;
  for (const auto& r : rows)
    os << r.category << "\t" << r.name << "\t" << r.fad << "\t"
       << r.n_generated << "\t" << r.n_reference << "\n";
  return os.str();
}

FadReport evaluate_fad(const std::vector<ClipEntry>& generated,
                       const std::vector<ClipEntry>& reference,
                       const std::string& backend,
                       const audio::MelParams& mel, double clip_seconds) {
  std::map<int, std::vector<ClipEntry>> gen_by_cat, ref_by_cat;
  for (const auto& c : generated) gen_by_cat[c.category].push_back(c);
  for (const auto& c : reference) ref_by_cat[c.category].push_back(c);

  std::set<int> cats;
  for (const auto& [cat, _] : gen_by_cat) cats.insert(cat);
  for (const auto& [cat, _] : ref_by_cat) cats.insert(cat);
  for (int cat : cats) {
    bool in_gen = gen_by_cat.count(cat) > 0, in_ref = ref_by_cat.count(cat) > 0;
    if (!in_gen || !in_ref)
      throw CoverageError("category " + std::to_string(cat) + " (" +
                          category_name(cat) + ") present only in the " +
                          (in_gen ? "generated" : "reference") + " manifest");
  }

  FadReport report;
  report.backend = backend;
  for (int cat : cats) {
    EmbeddingSet ge = embed_clips(gen_by_cat[cat], backend, mel, clip_seconds);
    EmbeddingSet re = embed_clips(ref_by_cat[cat], backend, mel, clip_seconds);
    CategoryFad row;
    row.category = cat;
    row.name = category_name(cat);
    row.fad = frechet_distance(gaussian_stats(ge), gaussian_stats(re));
    row.n_generated = static_cast<int>(gen_by_cat[cat].size());
    row.n_reference = static_cast<int>(ref_by_cat[cat].size());
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace zenfoley::fad
