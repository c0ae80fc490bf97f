// Python bindings. Meshes cross the boundary as (vertices [N,3] float64,
// faces [M,3] uint32) numpy pairs wrapped in touchsdf.Mesh; point sets as
// [N,3] float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "touchsdf/config.hpp"
#include "touchsdf/isosurface.hpp"
#include "touchsdf/mesh_query.hpp"
#include "touchsdf/metrics.hpp"
#include "touchsdf/pipeline.hpp"
#include "touchsdf/primitives.hpp"
#include "touchsdf/sdf_dataset.hpp"
#include "touchsdf/sdf_decoder.hpp"
#include "touchsdf/touch.hpp"

namespace py = pybind11;
using namespace touchsdf;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Points& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw py::value_error("expected an [N, 3] array");
  std::vector<Vec3> out(a.shape(0));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[i] = Vec3(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

py::array_t<double> from_points(const std::vector<Vec3>& pts) {
  py::array_t<double> a({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(i, k) = pts[i][k];
  }
  return a;
}

py::array_t<double> from_values(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

TriangleMesh make_mesh(const Points& vertices,
                       const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& faces) {
  TriangleMesh m;
  m.vertices = to_points(vertices);
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw py::value_error("faces must be [M, 3]");
  auto f = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < faces.shape(0); ++i) {
    Face face;
    for (int k = 0; k < 3; ++k) {
      const auto idx = f(i, k);
      if (idx < 0 || idx >= static_cast<std::int64_t>(m.vertices.size())) throw py::index_error("face index out of range");
      face[k] = static_cast<std::uint32_t>(idx);
    }
    m.faces.push_back(face);
  }
  return m;
}

py::array_t<std::uint32_t> faces_of(const TriangleMesh& m) {
  py::array_t<std::uint32_t> a({static_cast<py::ssize_t>(m.faces.size()), py::ssize_t{3}});
  auto w = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    for (int k = 0; k < 3; ++k) w(i, k) = m.faces[i][k];
  }
  return a;
}

py::array_t<double> pose_matrix(const Pose& p) {
  py::array_t<double> a({py::ssize_t{4}, py::ssize_t{4}});
  auto w = a.mutable_unchecked<2>();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) w(r, c) = r < 3 ? (c < 3 ? p.rotation(r, c) : p.translation[r]) : (c == 3 ? 1.0 : 0.0);
  }
  return a;
}

py::dict report_dict(const metrics::ReconstructionReport& r) {
  py::dict d;
  d["cd"] = r.cd;
  d["emd"] = r.emd;
  d["surface_error_pct"] = r.surface_error_pct;
  d["n_points"] = r.n_points;
  d["seed"] = r.seed;
  d["emd_exact"] = r.emd_exact;
  return d;
}

}  // namespace

PYBIND11_MODULE(_touchsdf, m) {
  m.doc() = "Tactile shape completion core: geometry, touch simulation, metrics, SDF decoder, pipeline";

  // errors map onto builtin exception types, with the class name in the message
  py::register_exception<Error>(m, "TouchSdfError", PyExc_RuntimeError);

  py::class_<TriangleMesh>(m, "Mesh")
      .def(py::init(&make_mesh), py::arg("vertices"), py::arg("faces"))
      .def_property_readonly("vertices", [](const TriangleMesh& t) { return from_points(t.vertices); })
      .def_property_readonly("faces", &faces_of)
      .def_property_readonly("area", [](const TriangleMesh& t) { return surface_area(t); })
      .def_property_readonly("volume", [](const TriangleMesh& t) { return signed_volume(t); })
      .def_property_readonly("watertight", [](const TriangleMesh& t) { return is_watertight(t); })
      .def("save", [](const TriangleMesh& t, const std::filesystem::path& p) { save_obj(p, t); })
      .def("__repr__", [](const TriangleMesh& t) {
        return "<Mesh " + std::to_string(t.vertices.size()) + " vertices, " + std::to_string(t.faces.size()) +
               " faces>";
      });

  m.def("load_mesh", [](const std::filesystem::path& p, bool watertight) { return load_mesh(p, watertight).mesh; },
        py::arg("path"), py::arg("require_watertight") = false);
  m.def("normalize_mesh", [](const TriangleMesh& t) {
    auto n = normalize_mesh(t);
    return py::make_tuple(n.mesh, n.scale, from_points({n.offset}).attr("reshape")(3));
  });
  m.def("sample_surface", [](const TriangleMesh& t, std::size_t n, std::uint64_t seed) {
    auto pc = sample_surface(t, n, seed);
    return py::make_tuple(from_points(pc.points), from_points(pc.normals));
  }, py::arg("mesh"), py::arg("n"), py::arg("seed") = 0);
  m.def("signed_distance", [](const TriangleMesh& t, const Points& pts) {
    const MeshQuery q(t);
    std::vector<double> out;
    for (const auto& p : to_points(pts)) out.push_back(q.signed_distance(p).s);
    return from_values(out);
  }, "signed distance of each point (negative inside); the mesh must be watertight");
  m.def("sdf_dataset", [](const TriangleMesh& t, std::size_t n_surface, std::size_t n_uniform, double sigma,
                          std::uint64_t seed) {
    const auto s = generate_sdf_dataset(t, n_surface, n_uniform, sigma, seed);
    std::vector<Vec3> xs;
    std::vector<double> vals;
    for (const auto& x : s) {
      xs.push_back(x.x);
      vals.push_back(x.s);
    }
    return py::make_tuple(from_points(xs), from_values(vals));
  }, py::arg("mesh"), py::arg("n_surface") = 8000, py::arg("n_uniform") = 8000, py::arg("sigma_near") = 0.05,
     py::arg("seed") = 0);

  auto prim = m.def_submodule("shapes", "closed primitive tessellations");
  prim.def("icosphere", &shapes::icosphere, py::arg("radius"), py::arg("subdivisions"));
  prim.def("box", [](const std::array<double, 3>& h, int sub) { return shapes::box(Vec3(h[0], h[1], h[2]), sub); },
           py::arg("half_extents"), py::arg("subdivisions") = 1);
  prim.def("cylinder", &shapes::cylinder, py::arg("radius"), py::arg("half_height"), py::arg("segments"));
  prim.def("capsule", &shapes::capsule, py::arg("radius"), py::arg("half_height"), py::arg("segments"));

  m.def("marching_cubes", [](py::array_t<double, py::array::c_style | py::array::forcecast> values,
                             std::array<double, 3> lo, std::array<double, 3> hi, double iso) {
    if (values.ndim() != 3) throw py::value_error("values must be a 3-D array indexed [i, j, k]");
    iso::ScalarGrid g;
    g.resolution = {static_cast<std::size_t>(values.shape(0)), static_cast<std::size_t>(values.shape(1)),
                    static_cast<std::size_t>(values.shape(2))};
    g.bounds = Aabb{Vec3(lo[0], lo[1], lo[2]), Vec3(hi[0], hi[1], hi[2])};
    g.values.assign(values.data(), values.data() + values.size());
    return iso::marching_cubes(g, iso).mesh;
  }, py::arg("values"), py::arg("lo"), py::arg("hi"), py::arg("iso") = 0.0);

  auto met = m.def_submodule("metrics", "chamfer, earth mover's distance, surface error");
  met.def("chamfer", [](const Points& a, const Points& b) { return metrics::chamfer(to_points(a), to_points(b)); },
          "mean squared nearest-neighbour distance, both directions summed");
  met.def("emd", [](const Points& a, const Points& b) {
    const auto r = metrics::emd(to_points(a), to_points(b));
    return py::make_tuple(r.value, r.exact, r.gap_bound);
  }, "(mean matched distance, exact, certified gap)");
  met.def("surface_error", py::overload_cast<const TriangleMesh&, const TriangleMesh&>(&metrics::surface_error));
  met.def("evaluate", [](const TriangleMesh& pred, const TriangleMesh& gt, std::size_t n, std::uint64_t seed) {
    return report_dict(metrics::evaluate(pred, gt, n, seed));
  }, py::arg("pred"), py::arg("gt"), py::arg("n_points") = 4096, py::arg("seed") = 0);

  py::class_<touch::SensorSpec>(m, "SensorSpec")
      .def(py::init<>())
      .def_readwrite("footprint_radius", &touch::SensorSpec::footprint_radius)
      .def_readwrite("image_size", &touch::SensorSpec::image_size)
      .def_readwrite("max_press_depth", &touch::SensorSpec::max_press_depth)
      .def_readwrite("intensity_threshold", &touch::SensorSpec::intensity_threshold)
      .def_readwrite("step", &touch::SensorSpec::step);

  m.def("touch", [](const TriangleMesh& t, std::uint64_t seed, const touch::SensorSpec& spec,
                    std::size_t cloud_points) -> py::object {
    const MeshQuery q(t);
    auto rec = touch::press(q, touch::sample_touch_ray(q, seed), spec, 0, cloud_points, seed);
    if (!rec) return py::none();
    py::dict d;
    py::array_t<float> img({static_cast<py::ssize_t>(rec->image.size), static_cast<py::ssize_t>(rec->image.size)});
    std::copy(rec->image.depth.begin(), rec->image.depth.end(), img.mutable_data());
    d["image"] = img;
    d["pose"] = pose_matrix(rec->pose);
    d["cloud"] = from_points(rec->local_cloud.points);
    d["normals"] = from_points(rec->local_cloud.normals);
    return d;
  }, "press the simulated sensor along a seeded ray; None when nothing is touched", py::arg("mesh"),
     py::arg("seed"), py::arg("spec") = touch::SensorSpec{}, py::arg("cloud_points") = 256);

  py::class_<sdf::DecoderParams>(m, "Decoder")
      .def_static("load", [](const std::filesystem::path& p) { return sdf::DecoderParams::load(p); })
      .def_property_readonly("latent_dim", [](const sdf::DecoderParams& d) { return d.config.latent_dim; })
      .def("decode", [](const sdf::DecoderParams& d, const std::vector<float>& z, const Points& pts) {
        return from_values(sdf::decode(d, z, to_points(pts)));
      }, py::arg("z"), py::arg("points"))
      .def("infer", [](const sdf::DecoderParams& d, const Points& pts, const std::vector<double>& s,
                       std::size_t steps, std::uint64_t seed) {
        const auto xs = to_points(pts);
        if (xs.size() != s.size()) throw py::value_error("one value per point required");
        sdf::Observation obs;
        for (std::size_t i = 0; i < xs.size(); ++i) obs.samples.push_back({xs[i], s[i]});
        sdf::InferConfig cfg;
        cfg.steps = steps;
        cfg.seed = seed;
        const auto r = sdf::infer_latent(d, obs, cfg);
        return py::make_tuple(r.z.z, r.best_loss);
      }, "latent code fitted to (point, signed distance) observations", py::arg("points"), py::arg("values"),
         py::arg("steps") = 800, py::arg("seed") = 0);
  m.def("load_latents", [](const std::filesystem::path& p) {
    py::dict d;
    for (const auto& z : sdf::load_latents(p)) d[py::str(z.shape_id)] = z.z;
    return d;
  });

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def(py::init<>())
      .def_static("load", &ExperimentConfig::load)
      .def_static("parse", [](const std::string& text) {
        std::istringstream in(text);
        return ExperimentConfig::from_file(ConfigFile::parse(in));
      })
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("touch_counts", &ExperimentConfig::touch_counts)
      .def_readwrite("seeds_per_shape", &ExperimentConfig::seeds_per_shape)
      .def("to_text", &ExperimentConfig::to_text)
      .def("hash", &ExperimentConfig::hash);

  auto pipe = m.def_submodule("pipeline", "corpus generation and experiment stages");
  pipe.def("gen_corpus", [](const ExperimentConfig& c, const std::filesystem::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : pipeline::gen_corpus(c, dir).shapes) out.emplace_back(s.id, s.split);
    return out;
  }, "writes shapes/<id>.obj and manifest.tsv; returns (id, split) pairs");
  pipe.def("run_touch_dataset", [](const ExperimentConfig& c, const std::filesystem::path& corpus,
                                   const std::filesystem::path& out) {
    pipeline::run_touch_dataset(c, pipeline::load_corpus(corpus), out);
  });
  pipe.def("summarize_csv", [](const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw py::value_error("cannot open " + csv.string());
    std::ostringstream out;
    pipeline::write_summary(out, pipeline::summarize(metrics::read_csv(in)));
    return out.str();
  });
}
