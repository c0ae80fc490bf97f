#include "touchsdf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>

#include "touchsdf/rng.hpp"

namespace touchsdf {

UnitVec3::UnitVec3(const Vec3& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidArgument("zero or non-finite direction");
  v_ = v / n;
}

UnitVec3 UnitVec3::from_normalized(const Vec3& v) {
  UnitVec3 u;
  u.v_ = v;
  return u;
}

Pose Pose::make(const Mat3& rotation, const Vec3& translation) {
  Pose p{rotation, translation};
  if (!p.is_valid()) throw InvalidArgument("rotation is not a proper orthonormal matrix");
  return p;
}

Pose Pose::inverse() const {
  Pose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

Pose Pose::operator*(const Pose& rhs) const {
  return Pose{rotation * rhs.rotation, rotation * rhs.translation + translation};
}

bool Pose::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

Aabb bounds(const TriangleMesh& mesh) { return bounds(mesh.vertices); }

Aabb bounds(const std::vector<Vec3>& points) {
  Aabb box;
  for (const auto& p : points) box.expand(p);
  return box;
}

void check_indices(const TriangleMesh& mesh) {
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (auto idx : mesh.faces[f]) {
      if (idx >= n) {
        throw ParseError("face " + std::to_string(f) + " references vertex " +
                         std::to_string(idx) + " of " + std::to_string(n));
      }
    }
  }
}

bool is_watertight(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) return false;
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& f : mesh.faces) {
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) return false;
    for (int k = 0; k < 3; ++k) {
      if (++directed[{f[k], f[(k + 1) % 3]}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (directed.find({edge.second, edge.first}) == directed.end()) return false;
  }
  return true;
}

namespace {

std::uint32_t resolve_index(const std::string& token, std::size_t vertex_count, std::size_t line) {
  const std::string head = token.substr(0, token.find('/'));
  long long idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoll(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line) + ": bad face index '" + token + "'");
  }
  long long resolved = 0;
  if (idx > 0) {
    resolved = idx - 1;
  } else if (idx < 0) {
    resolved = static_cast<long long>(vertex_count) + idx;
  } else {
    throw ParseError("line " + std::to_string(line) + ": face index 0 (OBJ indices are 1-based)");
  }
  if (resolved < 0 || resolved >= static_cast<long long>(vertex_count)) {
    throw ParseError("line " + std::to_string(line) + ": face index out of range");
  }
  return static_cast<std::uint32_t>(resolved);
}

}  // namespace

LoadedMesh parse_obj(std::istream& in, bool require_watertight) {
  LoadedMesh out;
  auto& mesh = out.mesh;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z()) || !p.allFinite()) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed vertex");
      }
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<std::uint32_t> poly;
      std::string tok;
      while (ls >> tok) poly.push_back(resolve_index(tok, mesh.vertices.size(), line_no));
      if (poly.size() < 3) throw ParseError("line " + std::to_string(line_no) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  check_indices(mesh);
  out.watertight = is_watertight(mesh);
  if (require_watertight && !out.watertight) {
    throw NonManifold("mesh is not a closed consistently-wound 2-manifold");
  }
  return out;
}

LoadedMesh load_mesh(const std::filesystem::path& path, bool require_watertight) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_obj(in, require_watertight);
}

void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& f : mesh.faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

void save_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_obj(out, mesh);
}

NormalizedMesh normalize_mesh(const TriangleMesh& mesh) {
  if (mesh.vertices.empty()) throw DegenerateMesh("mesh has no vertices");
  const Vec3 center = bounds(mesh).center();
  double radius = 0.0;
  for (const auto& v : mesh.vertices) radius = std::max(radius, (v - center).norm());
  if (!(radius > 0.0)) throw DegenerateMesh("mesh has zero extent");

  NormalizedMesh out;
  out.scale = 1.0 / radius;
  out.offset = -center;
  out.mesh.faces = mesh.faces;
  out.mesh.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) out.mesh.vertices.push_back(out.scale * (v + out.offset));
  return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

Vec3 face_normal(const TriangleMesh& mesh, std::size_t face) {
  const auto& f = mesh.faces[face];
  const Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]]).cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

double surface_area(const TriangleMesh& mesh) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
  }
  return total;
}

double signed_volume(const TriangleMesh& mesh) {
  double total = 0.0;
  for (const auto& f : mesh.faces) {
    total += mesh.vertices[f[0]].dot(mesh.vertices[f[1]].cross(mesh.vertices[f[2]]));
  }
  return total / 6.0;
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidArgument("sample_surface needs n >= 1");
  if (mesh.faces.empty()) throw DegenerateMesh("mesh has no faces");

  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw DegenerateMesh("mesh has zero surface area");

  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(n);
  cloud.normals.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    std::size_t f = std::min<std::size_t>(it - cumulative.begin(), mesh.faces.size() - 1);
    // skip zero-area faces that upper_bound can land on only at the boundary
    while (f + 1 < mesh.faces.size() && (f == 0 ? cumulative[0] : cumulative[f] - cumulative[f - 1]) <= 0.0) ++f;
    const auto& t = mesh.faces[f];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    cloud.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    cloud.normals.push_back(face_normal(mesh, f));
  }
  return cloud;
}

TriangleMesh transform(const TriangleMesh& mesh, const Pose& pose) {
  TriangleMesh out;
  out.faces = mesh.faces;
  out.vertices.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) out.vertices.push_back(pose.apply(v));
  return out;
}

}  // namespace touchsdf
