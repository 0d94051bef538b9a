#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "zenfoley/pipeline.hpp"

namespace zenfoley::pipeline {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream fields(t);
    ManifestRecord rec;
    std::string cat_str;
    if (!std::getline(fields, rec.path, '\t') ||
        !std::getline(fields, cat_str, '\t') ||
        !std::getline(fields, rec.split, '\t'))
      throw FormatError("manifest line " + std::to_string(lineno) +
                        ": expected path<TAB>category<TAB>split in " + path);
    rec.split = trim(rec.split);
    try {
      size_t used = 0;
      rec.category = std::stoi(trim(cat_str), &used);
      if (used != trim(cat_str).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(lineno) +
                        ": bad category id '" + cat_str + "' in " + path);
    }
    m.records.push_back(std::move(rec));
  }
  m.validate();
  return m;
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& r : records)
    out << r.path << "\t" << r.category << "\t" << r.split << "\n";
  if (!out) throw IoError("short write to manifest: " + path);
}

void Manifest::validate() const {
  std::set<std::string> seen;
  for (const auto& r : records) {
    if (r.category < 0 || r.category >= kNumCategories)
      throw FormatError("manifest: category id " + std::to_string(r.category) +
                        " out of range for " + r.path);
    if (r.split != "train" && r.split != "val")
      throw FormatError("manifest: split tag '" + r.split +
                        "' (want train|val) for " + r.path);
    if (!seen.insert(r.path).second)
      throw FormatError("manifest: duplicate path " + r.path);
  }
}

std::vector<ManifestRecord> Manifest::subset(const std::string& split) const {
  std::vector<ManifestRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

Manifest stratified_split(const Manifest& m, int per_class_val, uint64_t seed) {
  if (per_class_val < 0)
    throw ContractError("stratified_split: per_class_val must be >= 0");
  std::map<int, std::vector<size_t>> by_cat;
  for (size_t i = 0; i < m.records.size(); ++i)
    by_cat[m.records[i].category].push_back(i);

  Manifest out = m;
  for (auto& r : out.records) r.split = "train";
  for (auto& [cat, idx] : by_cat) {
    if (static_cast<int>(idx.size()) < per_class_val)
      throw CoverageError("category " + std::to_string(cat) + " (" +
                          category_name(cat) + ") has " +
                          std::to_string(idx.size()) + " clips, need >= " +
                          std::to_string(per_class_val));
    SplitMix64 rng(mix_seed(mix_seed(seed, fnv1a64("split")),
                            static_cast<uint64_t>(cat)));
    for (size_t i = idx.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.next_below(i));
      std::swap(idx[i - 1], idx[j]);
    }
    for (int k = 0; k < per_class_val; ++k)
      out.records[idx[static_cast<size_t>(k)]].split = "val";
  }
  return out;
}

std::string clip_stem(const std::string& path) {
  size_t slash = path.find_last_of('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  size_t dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

std::string cache_path(const std::string& dir, const std::string& stem) {
  return dir + "/" + stem + ".cem1";
}
std::string feature_path(const std::string& dir, const std::string& stem) {
  return dir + "/" + stem + ".cfe1";
}
std::string code_path(const std::string& dir, const std::string& stem) {
  return dir + "/" + stem + ".code";
}

}  // namespace zenfoley::pipeline
