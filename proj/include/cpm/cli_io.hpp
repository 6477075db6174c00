#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpm/errors.hpp"
#include "cpm/mesh.hpp"
#include "cpm/problems.hpp"
#include "cpm/surface.hpp"

namespace cpm {

/// Affine map x -> (x - center) / scale taking file geometry into [-1, 1]^d.
struct Normalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& x) const { return (x - center) / scale; }
  Vec3 invert(const Vec3& y) const { return center + scale * y; }
};

/// Bounding-box centre and half of the largest extent.
Normalization normalization_for(std::span<const Vec3> points);

/// Wavefront OBJ: `v` and `f` records (polygons are fanned, `a/b/c` indices
/// and negative indices accepted); everything else is ignored.
TriangleMesh read_obj(std::istream& in, const std::string& name = "<obj>");
TriangleMesh read_obj_file(const std::string& path);

/// Polyline text: optional header `closed 0|1`, then one `x y [z]` vertex per
/// line. `#` starts a comment.
struct PolylineData {
  std::vector<Vec3> points;
  bool closed = false;
  int dim = 3;
};
PolylineData read_polyline(std::istream& in, const std::string& name = "<polyline>");
PolylineData read_polyline_file(const std::string& path);

/// Geometry built from a JSON description, in solver units.
struct Geometry {
  SurfacePtr shape;
  int dim = 3;
  /// Set for mesh inputs (files or generated meshes).
  std::optional<TriangleMesh> mesh;
};

/// Loads a surface description. Mesh files are normalized and the transform
/// is stored in `norm`.
Geometry load_surface(const nlohmann::json& desc, Normalization& norm, const std::string& base_dir = "");
/// Loads a curve or point description. Polyline files go through `norm`.
Geometry load_curve(const nlohmann::json& desc, const Normalization& norm, const std::string& base_dir = "");
/// Rejects curves whose samples are farther than `tol` from the surface.
void validate_curve_on_surface(const Surface& surface, const Surface& curve, double spacing, double tol = 1e-6);

struct PlyAttribute {
  std::string name;
  std::vector<double> scalar;
  std::vector<Vec3> vector;  // written as <name>x <name>y <name>z
};

void write_ply(std::ostream& out, std::span<const Vec3> points, const std::vector<PlyAttribute>& attributes,
               const Normalization& norm = {});
void write_ply(const std::string& path, std::span<const Vec3> points, const std::vector<PlyAttribute>& attributes,
               const Normalization& norm = {});

/// ASCII PLY vertex data as written by write_ply.
struct PlyData {
  std::vector<std::string> properties;  // in file order, including x y z
  std::vector<std::vector<double>> rows;
  std::vector<std::string> comments;
};
PlyData read_ply(std::istream& in);

struct RunConfig {
  std::string command;
  /// The validated JSON document, with defaults filled in.
  nlohmann::json params;
  std::string output_dir = ".";
  std::string base_dir;  // relative file paths resolve against this
  int threads = 0;       // 0: leave the OpenMP default
  bool deterministic = false;
};

const std::vector<std::string>& subcommands();

/// Validates a config document for `command`: unknown keys, types, p >= 1,
/// q >= 1, dx > 0 and the tube radius. Throws InvalidConfig.
RunConfig parse_config(const std::string& command, const nlohmann::json& doc);
nlohmann::json read_config_file(const std::string& path);

/// Executes the subcommand and writes its outputs to `cfg.output_dir`.
void run(const RunConfig& cfg);

/// Runs `run` and maps errors to exit codes, printing a JSON error record to `err`.
int run_guarded(const RunConfig& cfg, std::ostream& err);
void print_error_record(std::ostream& err, ErrorCode code, const std::string& message);

}  // namespace cpm
