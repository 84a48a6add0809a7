#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "granet/decimal.hpp"
#include "granet/eval.hpp"
#include "granet/scene.hpp"

namespace granet {
namespace detail {

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);  // binary: no newline translation
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

/// Whitespace tokenizer with file/line context in every error.
class LineReader {
 public:
  LineReader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  bool next_line() {
    while (std::getline(in_, line_)) {
      ++lineno_;
      tokens_.clear();
      std::istringstream ls(line_);
      std::string tok;
      while (ls >> tok) tokens_.push_back(tok);
      if (!tokens_.empty()) return true;
    }
    return false;
  }

  void require_line(const char* what) {
    if (!next_line())
      throw std::runtime_error(path_ + ": unexpected end of file, expected " + std::string(what));
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  void expect_count(std::size_t n, const char* what) const {
    if (tokens_.size() != n)
      throw std::runtime_error(path_ + ":" + std::to_string(lineno_) + ": expected " +
                               std::string(what) + " (" + std::to_string(n) + " fields, got " +
                               std::to_string(tokens_.size()) + ")");
  }

  double number(std::size_t i) const {
    return parse_double(tokens_[i], path_ + ":" + std::to_string(lineno_));
  }

  std::uint64_t integer(std::size_t i) const {
    const std::string& s = tokens_[i];
    std::uint64_t v = 0;
    for (char c : s) {
      if (c < '0' || c > '9')
        throw std::runtime_error(path_ + ":" + std::to_string(lineno_) +
                                 ": expected unsigned integer, got '" + s + "'");
      v = v * 10 + static_cast<std::uint64_t>(c - '0');
    }
    if (s.empty())
      throw std::runtime_error(path_ + ":" + std::to_string(lineno_) + ": empty integer field");
    return v;
  }

  std::string context() const { return path_ + ":" + std::to_string(lineno_); }

 private:
  std::istream& in_;
  std::string path_;
  std::string line_;
  std::vector<std::string> tokens_;
  std::size_t lineno_ = 0;
};

inline const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::box: return "box";
    case PrimitiveKind::sphere: return "sphere";
    case PrimitiveKind::cylinder: return "cylinder";
  }
  throw std::logic_error("unknown primitive kind");
}

inline PrimitiveKind kind_from_name(const std::string& s, const std::string& where) {
  if (s == "box") return PrimitiveKind::box;
  if (s == "sphere") return PrimitiveKind::sphere;
  if (s == "cylinder") return PrimitiveKind::cylinder;
  throw std::runtime_error(where + ": unknown primitive kind '" + s + "'");
}

inline std::size_t kind_dims(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::box: return 3;
    case PrimitiveKind::sphere: return 1;
    case PrimitiveKind::cylinder: return 2;
  }
  throw std::logic_error("unknown primitive kind");
}

}  // namespace detail

/// Line-oriented scene serialization, all reals as 9-significant-digit decimals.
/// Layout:
///   granet-scene 1
///   seed <u64>
///   plane_extent <r>
///   primitives <n>
///   <kind> <dims...> <R row-major, 9> <T, 3>      (object ids are 1-based line order)
///   points <n>
///   <x> <y> <z> <object_id>
inline void write_scene(const SyntheticScene& scene, const std::string& path) {
  std::ofstream f = detail::open_out(path);
  f << "granet-scene 1\n";
  f << "seed " << scene.seed << "\n";
  f << "plane_extent " << fmt9(scene.plane_extent) << "\n";
  f << "primitives " << scene.primitives.size() << "\n";
  for (const Primitive& pr : scene.primitives) {
    f << detail::kind_name(pr.kind);
    for (double d : pr.dims) f << ' ' << fmt9(d);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f << ' ' << fmt9(pr.R[r][c]);
    for (int r = 0; r < 3; ++r) f << ' ' << fmt9(pr.T[r]);
    f << "\n";
  }
  f << "points " << scene.cloud.size() << "\n";
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const Vec3& p = scene.cloud.points[i];
    f << fmt9(p[0]) << ' ' << fmt9(p[1]) << ' ' << fmt9(p[2]) << ' ' << scene.cloud.object_id[i]
      << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline SyntheticScene read_scene(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  detail::LineReader r(f, path);
  r.require_line("header");
  r.expect_count(2, "header 'granet-scene 1'");
  if (r.tokens()[0] != "granet-scene" || r.tokens()[1] != "1")
    throw std::runtime_error(path + ": not a scene file (bad header)");
  SyntheticScene scene;
  r.require_line("seed");
  r.expect_count(2, "'seed <u64>'");
  if (r.tokens()[0] != "seed") throw std::runtime_error(r.context() + ": expected 'seed'");
  scene.seed = r.integer(1);
  r.require_line("plane_extent");
  r.expect_count(2, "'plane_extent <r>'");
  if (r.tokens()[0] != "plane_extent")
    throw std::runtime_error(r.context() + ": expected 'plane_extent'");
  scene.plane_extent = r.number(1);
  r.require_line("primitives");
  r.expect_count(2, "'primitives <n>'");
  if (r.tokens()[0] != "primitives")
    throw std::runtime_error(r.context() + ": expected 'primitives'");
  const std::size_t n_prim = static_cast<std::size_t>(r.integer(1));
  for (std::size_t i = 0; i < n_prim; ++i) {
    r.require_line("a primitive");
    Primitive pr;
    pr.kind = detail::kind_from_name(r.tokens()[0], r.context());
    const std::size_t nd = detail::kind_dims(pr.kind);
    r.expect_count(1 + nd + 12, "primitive fields");
    std::size_t at = 1;
    pr.dims.resize(nd);
    for (std::size_t d = 0; d < nd; ++d) pr.dims[d] = r.number(at++);
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) pr.R[row][col] = r.number(at++);
    for (int row = 0; row < 3; ++row) pr.T[row] = r.number(at++);
    scene.primitives.push_back(pr);
  }
  r.require_line("points");
  r.expect_count(2, "'points <n>'");
  if (r.tokens()[0] != "points") throw std::runtime_error(r.context() + ": expected 'points'");
  const std::size_t n_pts = static_cast<std::size_t>(r.integer(1));
  scene.cloud.points.reserve(n_pts);
  scene.cloud.object_id.reserve(n_pts);
  for (std::size_t i = 0; i < n_pts; ++i) {
    r.require_line("a point");
    r.expect_count(4, "'x y z object_id'");
    scene.cloud.points.push_back(Vec3{r.number(0), r.number(1), r.number(2)});
    const std::uint64_t id = r.integer(3);
    if (id > scene.primitives.size())
      throw std::runtime_error(r.context() + ": object id " + std::to_string(id) +
                               " exceeds primitive count");
    scene.cloud.object_id.push_back(static_cast<std::size_t>(id));
  }
  return scene;
}

/// Annotation serialization. Layout:
///   granet-annotations 1
///   annotated_points <n>
///   point <cloud_index> <grasp_count>
///   <approach xyz> <angle> <depth> <width> <mu_min> <score>
inline void write_annotations(const GraspAnnotationSet& ann, const std::string& path) {
  std::ofstream f = detail::open_out(path);
  f << "granet-annotations 1\n";
  f << "annotated_points " << ann.per_point.size() << "\n";
  for (const auto& [idx, list] : ann.per_point) {
    f << "point " << idx << ' ' << list.size() << "\n";
    for (const GraspAnnotation& g : list) {
      f << fmt9(g.approach[0]) << ' ' << fmt9(g.approach[1]) << ' ' << fmt9(g.approach[2]) << ' '
        << fmt9(g.angle) << ' ' << fmt9(g.depth) << ' ' << fmt9(g.width) << ' ' << fmt9(g.mu_min)
        << ' ' << fmt9(g.score) << "\n";
    }
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline GraspAnnotationSet read_annotations(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  detail::LineReader r(f, path);
  r.require_line("header");
  r.expect_count(2, "header 'granet-annotations 1'");
  if (r.tokens()[0] != "granet-annotations" || r.tokens()[1] != "1")
    throw std::runtime_error(path + ": not an annotation file (bad header)");
  r.require_line("annotated_points");
  r.expect_count(2, "'annotated_points <n>'");
  if (r.tokens()[0] != "annotated_points")
    throw std::runtime_error(r.context() + ": expected 'annotated_points'");
  const std::size_t n = static_cast<std::size_t>(r.integer(1));
  GraspAnnotationSet ann;
  for (std::size_t i = 0; i < n; ++i) {
    r.require_line("'point <index> <count>'");
    r.expect_count(3, "'point <index> <count>'");
    if (r.tokens()[0] != "point") throw std::runtime_error(r.context() + ": expected 'point'");
    const std::size_t idx = static_cast<std::size_t>(r.integer(1));
    const std::size_t count = static_cast<std::size_t>(r.integer(2));
    auto& list = ann.per_point[idx];
    for (std::size_t g = 0; g < count; ++g) {
      r.require_line("a grasp annotation");
      r.expect_count(8, "grasp annotation fields");
      GraspAnnotation a;
      a.approach = Vec3{r.number(0), r.number(1), r.number(2)};
      a.angle = r.number(3);
      a.depth = r.number(4);
      a.width = r.number(5);
      a.mu_min = r.number(6);
      a.score = r.number(7);
      list.push_back(a);
    }
  }
  return ann;
}

/// One grasp per line: score, rotation row-major, translation, width, depth.
inline void write_grasp_list(const std::vector<GraspPose>& grasps, const std::string& path) {
  std::ofstream f = detail::open_out(path);
  for (const GraspPose& g : grasps) {
    f << fmt9(g.score);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) f << ' ' << fmt9(g.R[r][c]);
    for (int r = 0; r < 3; ++r) f << ' ' << fmt9(g.T[r]);
    f << ' ' << fmt9(g.width) << ' ' << fmt9(g.depth) << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<GraspPose> read_grasp_list(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  detail::LineReader r(f, path);
  std::vector<GraspPose> out;
  while (r.next_line()) {
    r.expect_count(15, "grasp line (score, 9 rotation, 3 translation, width, depth)");
    GraspPose g;
    g.score = r.number(0);
    std::size_t at = 1;
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) g.R[row][col] = r.number(at++);
    for (int row = 0; row < 3; ++row) g.T[row] = r.number(at++);
    g.width = r.number(at++);
    g.depth = r.number(at);
    out.push_back(g);
  }
  return out;
}

inline void write_eval_report(const EvalReport& rep, const std::string& path) {
  std::ofstream f = detail::open_out(path);
  f << "granet-eval 1\n";
  f << "evaluated " << rep.evaluated << "\n";
  f << "collisions " << rep.collisions << "\n";
  f << "contactless " << rep.contactless << "\n";
  for (std::size_t i = 0; i < rep.mu_thresholds.size(); ++i)
    f << "ap mu " << fmt9(rep.mu_thresholds[i]) << ' ' << fmt9(rep.ap_per_mu[i]) << "\n";
  f << "mean_ap " << fmt9(rep.mean_ap) << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

/// Mean over per-scene reports, concatenating counters.
inline EvalReport merge_eval_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("merge_eval_reports: no reports");
  EvalReport out;
  out.mu_thresholds = reports[0].mu_thresholds;
  out.ap_per_mu.assign(out.mu_thresholds.size(), 0.0);
  for (const EvalReport& r : reports) {
    if (r.ap_per_mu.size() != out.ap_per_mu.size())
      throw std::invalid_argument("merge_eval_reports: threshold count mismatch");
    for (std::size_t i = 0; i < r.ap_per_mu.size(); ++i) out.ap_per_mu[i] += r.ap_per_mu[i];
    out.mean_ap += r.mean_ap;
    out.evaluated += r.evaluated;
    out.collisions += r.collisions;
    out.contactless += r.contactless;
  }
  const double inv = 1.0 / static_cast<double>(reports.size());
  for (double& ap : out.ap_per_mu) ap *= inv;
  out.mean_ap *= inv;
  return out;
}

}  // namespace granet
