#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zenfoley/audio.hpp"
#include "zenfoley/common.hpp"

namespace zenfoley::fad {

struct ClipEntry {
  std::string path;
  int category = 0;
};

struct EmbeddingSet {
  Eigen::MatrixXd rows;  // (num_clips, E)
  std::string backend;
};

struct FrechetStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;  // unbiased (n-1), symmetrized
};

// Backends:
//  - "precomputed": one "CFE1" file per clip (looked up as <clip path with
//    extension replaced by .cfe1>, or the path itself when it ends in .cfe1);
//    any rows x cols payload is flattened to one embedding vector.
//  - "spectral-stats": per-clip [row-mean || row-std] of the mel spectrogram
//    computed with `mel` after resampling to mel.sample_rate (E = 2 * n_mels).
EmbeddingSet embed_clips(const std::vector<ClipEntry>& clips,
                         const std::string& backend,
                         const audio::MelParams& mel,
                         double clip_seconds = 4.0);

FrechetStats gaussian_stats(const EmbeddingSet& e);

// Symmetric PSD square root via eigendecomposition; eigenvalues below -1e-6
// are an error, values in [-1e-6, 0] are clamped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

struct CategoryFad {
  int category = 0;
  std::string name;
  double fad = 0.0;
  int n_generated = 0;
  int n_reference = 0;
};

struct FadReport {
  std::vector<CategoryFad> rows;  // ordered by category id
  std::string backend;

  std::string table() const;    // human-readable
  std::string records() const;  // line-delimited: id, name, fad, n_gen, n_ref
};

// One FAD per category present in the manifests; a category present in only
// one of the two sets is a coverage error.
FadReport evaluate_fad(const std::vector<ClipEntry>& generated,
                       const std::vector<ClipEntry>& reference,
                       const std::string& backend,
                       const audio::MelParams& mel,
                       double clip_seconds = 4.0);

}  // namespace zenfoley::fad
