#include "touchsdf/pipeline.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "touchsdf/errors.hpp"
#include "touchsdf/isosurface.hpp"
#include "touchsdf/mesh_query.hpp"
#include "touchsdf/primitives.hpp"
#include "touchsdf/rng.hpp"
#include "touchsdf/sdf_dataset.hpp"

#ifndef TOUCHSDF_VERSION
#define TOUCHSDF_VERSION "dev"
#endif

namespace touchsdf::pipeline {

namespace fs = std::filesystem;

const char* code_version() { return TOUCHSDF_VERSION; }

std::uint64_t stage_seed(std::uint64_t master, std::string_view stage, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(mix_seed(master, h), index);
}

namespace {

void say(std::ostream* log, const std::string& line) {
  if (log) *log << line << std::endl;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

// Uniform random rotation (Shoemake), stored as a quaternion in the params.
void random_rotation(Rng& rng, std::map<std::string, double>& params) {
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double two_pi = 2.0 * 3.14159265358979323846;
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  params["qw"] = b * std::cos(two_pi * u3);
  params["qx"] = a * std::sin(two_pi * u2);
  params["qy"] = a * std::cos(two_pi * u2);
  params["qz"] = b * std::sin(two_pi * u3);
}

Mat3 rotation_of(const std::map<std::string, double>& p) {
  auto get = [&](const char* k, double d) {
    auto it = p.find(k);
    return it == p.end() ? d : it->second;
  };
  Eigen::Quaterniond q(get("qw", 1.0), get("qx", 0.0), get("qy", 0.0), get("qz", 0.0));
  return q.normalized().toRotationMatrix();
}

double param(const PrimitiveSpec& spec, const std::string& key) {
  auto it = spec.params.find(key);
  if (it == spec.params.end()) throw TessellationFailure(spec.family + " is missing parameter " + key);
  return it->second;
}

std::string format_params(const std::map<std::string, double>& params) {
  std::string out;
  for (const auto& [k, v] : params) out += (out.empty() ? "" : ";") + k + "=" + format_double(v);
  return out;
}

std::map<std::string, double> parse_params(const std::string& text) {
  std::map<std::string, double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("bad parameter entry '" + item + "'");
    out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
  }
  return out;
}

void write_series(const fs::path& path, const std::string& header, const std::vector<std::vector<double>>& columns) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << header << '\n';
  const std::size_t n = columns.empty() ? 0 : columns.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    out << i;
    for (const auto& c : columns) out << ',' << (i < c.size() ? format_double(c[i]) : "");
    out << '\n';
  }
}

std::vector<touch::TouchRecord> load_touches(const fs::path& dir, const std::vector<ShapeEntry>& shapes) {
  std::vector<touch::TouchRecord> out;
  for (const auto& s : shapes) {
    auto recs = touch::load_archive(dir / (s.id + ".ttch"));
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

}  // namespace

// ---- corpus ---------------------------------------------------------------

PrimitiveSpec sample_primitive(const std::string& family, const CorpusConfig& cfg, std::uint64_t seed) {
  Rng rng(seed, 0x7072696d);
  PrimitiveSpec s;
  s.family = family;
  auto& p = s.params;
  if (family == "sphere") {
    p["radius"] = rng.uniform(0.5, 1.0);
    s.tessellation = static_cast<int>(cfg.sphere_subdivisions);
    return s;
  }
  if (family == "box") {
    p["hx"] = rng.uniform(0.2, 0.6);
    p["hy"] = rng.uniform(0.2, 0.6);
    p["hz"] = rng.uniform(0.2, 0.6);
    s.tessellation = static_cast<int>(cfg.box_subdivisions);
  } else if (family == "cylinder") {
    p["radius"] = rng.uniform(0.2, 0.5);
    p["half_height"] = rng.uniform(0.2, 0.6);
    s.tessellation = static_cast<int>(cfg.segments);
  } else if (family == "capsule") {
    p["radius"] = rng.uniform(0.15, 0.4);
    p["half_height"] = rng.uniform(0.1, 0.5);
    s.tessellation = static_cast<int>(cfg.segments);
  } else if (family == "box-sphere-union" || family == "box-minus-sphere") {
    p["hx"] = rng.uniform(0.3, 0.6);
    p["hy"] = rng.uniform(0.3, 0.6);
    p["hz"] = rng.uniform(0.3, 0.6);
    p["radius"] = rng.uniform(0.25, 0.5);
    // sphere centre along a random direction; the minus family sometimes
    // misses the box entirely, which is detected and flagged
    Vec3 d(rng.normal(), rng.normal(), rng.normal());
    d.normalize();
    const double dist = family == "box-sphere-union" ? rng.uniform(0.3, 0.7) : rng.uniform(0.4, 1.3);
    p["cx"] = d.x() * dist;
    p["cy"] = d.y() * dist;
    p["cz"] = d.z() * dist;
    s.tessellation = static_cast<int>(cfg.csg_resolution);
  } else {
    throw TessellationFailure("unknown primitive family " + family);
  }
  random_rotation(rng, p);
  return s;
}

BuiltPrimitive build_primitive(const PrimitiveSpec& spec) {
  BuiltPrimitive out;
  TriangleMesh mesh;
  const auto& f = spec.family;
  if (f == "sphere") {
    mesh = shapes::icosphere(param(spec, "radius"), spec.tessellation);
  } else if (f == "box") {
    mesh = shapes::box(Vec3(param(spec, "hx"), param(spec, "hy"), param(spec, "hz")), spec.tessellation);
  } else if (f == "cylinder") {
    mesh = shapes::cylinder(param(spec, "radius"), param(spec, "half_height"), spec.tessellation);
  } else if (f == "capsule") {
    mesh = shapes::capsule(param(spec, "radius"), param(spec, "half_height"), spec.tessellation);
  } else if (f == "box-sphere-union" || f == "box-minus-sphere") {
    const Vec3 h(param(spec, "hx"), param(spec, "hy"), param(spec, "hz"));
    const Vec3 c(param(spec, "cx"), param(spec, "cy"), param(spec, "cz"));
    const double r = param(spec, "radius");
    const bool minus = f == "box-minus-sphere";
    if (minus && shapes::box_sdf(c, h) >= r) {
      out.csg_noop = true;
      mesh = shapes::box(h, 4);
    } else {
      auto field = [&](const Vec3& p) {
        const double b = shapes::box_sdf(p, h);
        const double s = shapes::sphere_sdf(p - c, r);
        return minus ? std::max(b, -s) : std::min(b, s);
      };
      const double extent = std::max(h.maxCoeff(), minus ? 0.0 : c.norm() + r) + 0.1;
      mesh = shapes::mesh_from_sdf(field, Aabb{Vec3::Constant(-extent), Vec3::Constant(extent)}, spec.tessellation);
    }
  } else {
    throw TessellationFailure("unknown primitive family " + f);
  }
  const Mat3 rot = rotation_of(spec.params);
  for (auto& v : mesh.vertices) v = rot * v;
  out.mesh = normalize_mesh(mesh).mesh;
  if (!is_watertight(out.mesh)) throw TessellationFailure(f + " mesh is not watertight");
  return out;
}

std::vector<ShapeEntry> Corpus::split(const std::string& name) const {
  std::vector<ShapeEntry> out;
  for (const auto& s : shapes) {
    if (s.split == name) out.push_back(s);
  }
  return out;
}

const ShapeEntry& Corpus::find(const std::string& id) const { return shapes.at(index_of(id)); }

std::size_t Corpus::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].id == id) return i;
  }
  throw InvalidArgument("no shape " + id + " in corpus " + dir.string());
}

fs::path Corpus::mesh_path(const ShapeEntry& shape) const { return dir / "shapes" / (shape.id + ".obj"); }

TriangleMesh Corpus::load_mesh(const ShapeEntry& shape) const {
  const auto path = mesh_path(shape);
  if (sha256_file(path) != shape.sha256) throw IoError(path.string() + " does not match its manifest hash");
  return touchsdf::load_mesh(path, true).mesh;
}

Corpus gen_corpus(const ExperimentConfig& cfg, const fs::path& dir) {
  cfg.validate();
  const std::size_t n = cfg.corpus.train + cfg.corpus.val + cfg.corpus.test;
  fs::create_directories(dir / "shapes");
  Corpus corpus;
  corpus.dir = dir;

  // deterministic Fisher-Yates over shape indices for the split
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(stage_seed(cfg.seed, "split"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.index(i)]);
  std::vector<std::string> split(n);
  for (std::size_t r = 0; r < n; ++r) {
    split[order[r]] = r < cfg.corpus.train ? "train" : r < cfg.corpus.train + cfg.corpus.val ? "val" : "test";
  }

  for (std::size_t i = 0; i < n; ++i) {
    ShapeEntry e;
    e.family = cfg.corpus.families[i % cfg.corpus.families.size()];
    char id[64];
    std::snprintf(id, sizeof id, "%s-%03zu", e.family.c_str(), i);
    e.id = id;
    e.split = split[i];
    e.spec = sample_primitive(e.family, cfg.corpus, stage_seed(cfg.seed, "corpus", i));
    auto built = build_primitive(e.spec);
    e.csg_noop = built.csg_noop;
    const auto path = dir / "shapes" / (e.id + ".obj");
    save_obj(path, built.mesh);
    e.sha256 = sha256_file(path);
    corpus.shapes.push_back(std::move(e));
  }

  std::ofstream out(dir / "manifest.tsv");
  if (!out) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  out << "id\tfamily\tsplit\tcsg_noop\ttessellation\tsha256\tparams\n";
  for (const auto& e : corpus.shapes) {
    out << e.id << '\t' << e.family << '\t' << e.split << '\t' << (e.csg_noop ? 1 : 0) << '\t' << e.spec.tessellation
        << '\t' << e.sha256 << '\t' << format_params(e.spec.params) << '\n';
  }
  out.close();
  write_run_manifest(dir, "gen-corpus", cfg, {{"manifest_sha256", sha256_file(dir / "manifest.tsv")}});
  return corpus;
}

Corpus load_corpus(const fs::path& dir) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw IoError("no corpus manifest in " + dir.string());
  Corpus corpus;
  corpus.dir = dir;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols.size() != 7) throw ParseError("corpus manifest row has " + std::to_string(cols.size()) + " columns");
    ShapeEntry e;
    e.id = cols[0];
    e.family = cols[1];
    e.split = cols[2];
    e.csg_noop = cols[3] == "1";
    e.spec.family = e.family;
    e.spec.tessellation = std::stoi(cols[4]);
    e.sha256 = cols[5];
    e.spec.params = parse_params(cols[6]);
    corpus.shapes.push_back(std::move(e));
  }
  return corpus;
}

// ---- run manifests ---------------------------------------------------------

void write_run_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg,
                        const Sidecar& extra) {
  fs::create_directories(dir);
  Sidecar m = extra;
  m["command"] = command;
  m["config_hash"] = cfg.hash();
  m["code_version"] = code_version();
  m["seed"] = std::to_string(cfg.seed);
  save_sidecar(dir / (command + ".manifest"), m);
}

Sidecar check_run_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg) {
  const auto path = dir / (command + ".manifest");
  if (!fs::exists(path)) throw ConfigError("missing run manifest " + path.string());
  auto m = load_sidecar(path);
  if (sidecar_get(m, "config_hash") != cfg.hash()) {
    throw ConfigError(path.string() + " was produced with a different configuration");
  }
  if (sidecar_get(m, "code_version") != code_version()) {
    throw ConfigError(path.string() + " was produced by code version " + sidecar_get(m, "code_version"));
  }
  return m;
}

// ---- touches ----------------------------------------------------------------

std::vector<touch::TouchRecord> collect_touches(const MeshQuery& mesh, const touch::SensorSpec& spec,
                                                std::uint64_t shape_index, std::size_t count,
                                                std::size_t cloud_points, std::size_t max_retries,
                                                std::uint64_t seed, std::size_t* retries) {
  std::vector<touch::TouchRecord> out;
  std::size_t misses = 0;
  std::uint64_t sub = 0;
  while (out.size() < count) {
    const std::uint64_t s = mix_seed(seed, sub++);
    auto rec = touch::press(mesh, touch::sample_touch_ray(mesh, s), spec, shape_index, cloud_points, s);
    if (rec) {
      out.push_back(std::move(*rec));
    } else if (++misses > max_retries) {
      throw RetriesExhausted("no contact after " + std::to_string(misses) + " rays on shape " +
                             std::to_string(shape_index));
    }
  }
  if (retries) *retries = misses;
  return out;
}

void run_touch_dataset(const ExperimentConfig& cfg, const Corpus& corpus, const fs::path& out_dir, std::ostream* log) {
  fs::create_directories(out_dir);
  std::size_t total_retries = 0;
  for (std::size_t i = 0; i < corpus.shapes.size(); ++i) {
    const auto& s = corpus.shapes[i];
    if (s.split == "test") continue;
    const MeshQuery mesh(corpus.load_mesh(s));
    std::size_t retries = 0;
    const auto recs = collect_touches(mesh, cfg.sensor, i, cfg.touches.per_shape, cfg.touches.cloud_points,
                                      cfg.touches.max_retries, stage_seed(cfg.seed, "touches:" + s.id), &retries);
    touch::save_archive(out_dir / (s.id + ".ttch"), recs);
    total_retries += retries;
    say(log, s.id + ": " + std::to_string(recs.size()) + " touches, " + std::to_string(retries) + " retries");
  }
  write_run_manifest(out_dir, "gen-touches", cfg, {{"retries", std::to_string(total_retries)}});
}

// ---- training stages ----------------------------------------------------------

ChartStageResult run_train_chart(const ExperimentConfig& cfg, const Corpus& corpus, const fs::path& touches_dir,
                                 const fs::path& out_dir, std::ostream* log) {
  check_run_manifest(touches_dir, "gen-touches", cfg);
  const auto train = load_touches(touches_dir, corpus.split("train"));
  const auto val = load_touches(touches_dir, corpus.split("val"));
  auto model = chart::ChartModel::init(cfg.chart, stage_seed(cfg.seed, "chart-init"));
  auto tc = cfg.chart_train;
  tc.seed = stage_seed(cfg.seed, "chart-train");
  const std::uint64_t eval_seed = stage_seed(cfg.seed, "chart-eval");

  ChartStageResult r;
  if (!val.empty()) r.baseline_val = chart::chart_loss(model, val, tc.samples_per_chart, eval_seed);
  say(log, "chart: " + std::to_string(train.size()) + " train / " + std::to_string(val.size()) + " val touches");
  r.history = chart::train_chart(model, train, tc, val);
  if (!val.empty()) r.trained_val = chart::chart_loss(model, val, tc.samples_per_chart, eval_seed);
  say(log, "chart: val chamfer " + fmt("%.6g", r.baseline_val) + " -> " + fmt("%.6g", r.trained_val));

  fs::create_directories(out_dir);
  model.save(out_dir / "chart.tprm");
  write_series(out_dir / "chart_loss.csv", "epoch,train,val", {r.history.loss_history, r.history.val_history});
  write_run_manifest(out_dir, "train-chart", cfg,
                     {{"baseline_val", format_double(r.baseline_val)}, {"trained_val", format_double(r.trained_val)}});
  return r;
}

sdf::TrainResult run_train_sdf(const ExperimentConfig& cfg, const Corpus& corpus, const fs::path& out_dir,
                               std::ostream* log) {
  fs::create_directories(out_dir / "sdf");
  std::vector<sdf::ShapeSamples> data;
  for (const auto& s : corpus.split("train")) {
    const MeshQuery mesh(corpus.load_mesh(s));
    auto samples = generate_sdf_dataset(mesh, cfg.sdf_data.n_surface, cfg.sdf_data.n_uniform, cfg.sdf_data.sigma_near,
                                        stage_seed(cfg.seed, "sdf:" + s.id));
    save_sdf_dataset(out_dir / "sdf" / (s.id + ".tsdf"), samples);
    data.push_back({s.id, std::move(samples)});
  }
  say(log, "decoder: " + std::to_string(data.size()) + " shapes");
  auto tc = cfg.decoder_train;
  tc.seed = stage_seed(cfg.seed, "decoder-train");
  auto r = sdf::train_decoder(data, cfg.decoder, tc);
  say(log, "decoder: loss " + fmt("%.6g", r.loss_history.front()) + " -> " + fmt("%.6g", r.loss_history.back()));
  r.params.save(out_dir / "decoder.tprm");
  sdf::save_latents(out_dir / "latents.tprm", r.latents);
  write_series(out_dir / "decoder_loss.csv", "epoch,loss", {r.loss_history});
  write_run_manifest(out_dir, "train-sdf", cfg, {{"final_loss", format_double(r.loss_history.back())}});
  return r;
}

Models load_models(const fs::path& models_dir) {
  return {chart::ChartModel::load(models_dir / "chart.tprm"), sdf::DecoderParams::load(models_dir / "decoder.tprm")};
}

// ---- reconstruction --------------------------------------------------------

Reconstruction run_reconstruction(const ExperimentConfig& cfg, const Models& models, const Corpus& corpus,
                                  const ShapeEntry& shape, std::size_t k, std::uint64_t seed,
                                  const fs::path* out_dir) {
  if (k == 0) throw InvalidArgument("need at least one touch");
  const std::size_t index = corpus.index_of(shape.id);
  const auto gt = corpus.load_mesh(shape);
  const MeshQuery mesh(gt);
  const std::string key = shape.id + ":" + std::to_string(seed);
  const auto touches = collect_touches(mesh, cfg.sensor, index, k, cfg.touches.cloud_points, cfg.touches.max_retries,
                                       stage_seed(cfg.seed, "recon-touches:" + key));

  Reconstruction r;
  const auto cloud = chart::chart_observation(touches, models.chart, stage_seed(cfg.seed, "recon-chart:" + key));
  for (std::size_t i = 0; i < cloud.size(); ++i) r.observation.samples.push_back({cloud.points[i], cloud.labels[i]});

  auto ic = cfg.reconstruction.infer;
  ic.seed = stage_seed(cfg.seed, "recon-infer:" + key, k);
  r.latent = sdf::infer_latent(models.decoder, r.observation, ic);
  r.latent.z.shape_id = shape.id;
  auto fc = cfg.reconstruction.finetune;
  fc.seed = stage_seed(cfg.seed, "recon-finetune:" + key, k);
  r.finetune = sdf::finetune_pivotal(models.decoder, r.latent.z, r.observation, fc);

  const double hw = cfg.reconstruction.grid_half_width;
  const std::size_t res = cfg.reconstruction.grid_resolution;
  const auto grid = iso::sample_grid(sdf::reconstruct_sdf(r.finetune.params, r.latent.z),
                                     Aabb{Vec3::Constant(-hw), Vec3::Constant(hw)}, {res, res, res});
  r.mesh = iso::marching_cubes(grid).mesh;

  r.row.shape_id = shape.id;
  r.row.touches = k;
  r.row.seed = seed;
  if (r.mesh.faces.empty()) {
    // nothing to sample: report the distance from the empty prediction as
    // infinite rather than failing the whole experiment
    r.row.report.cd = r.row.report.emd = std::numeric_limits<double>::infinity();
    r.row.report.surface_error_pct = 100.0;
    r.row.report.n_points = 0;
    r.row.report.seed = seed;
  } else {
    r.row.report = metrics::evaluate(r.mesh, gt, cfg.reconstruction.eval_points, stage_seed(cfg.seed, "eval:" + key, k));
  }

  if (out_dir) {
    fs::create_directories(*out_dir);
    save_obj(*out_dir / "mesh.obj", r.mesh);
    save_sdf_dataset(*out_dir / "observation.tsdf", r.observation.samples);
    sdf::save_latents(*out_dir / "latent.tprm", {r.latent.z});
    write_series(*out_dir / "infer_loss.csv", "step,loss", {r.latent.loss_history});
    write_series(*out_dir / "finetune_loss.csv", "step,loss", {r.finetune.loss_history});
    std::ofstream out(*out_dir / "report.csv");
    metrics::write_csv_header(out);
    metrics::write_csv_row(out, r.row);
  }
  return r;
}

TrendSummary summarize(const std::vector<metrics::ReportRow>& rows) {
  TrendSummary s;
  std::set<std::size_t> counts;
  std::set<std::string> shapes;
  for (const auto& r : rows) {
    counts.insert(r.touches);
    shapes.insert(r.shape_id);
  }
  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::pair{m, v.size() > 1 ? std::sqrt(var / (v.size() - 1)) : 0.0};
  };
  for (std::size_t k : counts) {
    std::vector<double> emd, cd;
    for (const auto& r : rows) {
      if (r.touches == k) {
        emd.push_back(r.report.emd);
        cd.push_back(r.report.cd);
      }
    }
    TrendSummaryLine line;
    line.touches = k;
    line.n = emd.size();
    std::tie(line.emd_mean, line.emd_std) = mean_std(emd);
    std::tie(line.cd_mean, line.cd_std) = mean_std(cd);
    s.lines.push_back(line);
  }
  s.strictly_decreasing = !s.lines.empty();
  for (std::size_t i = 1; i < s.lines.size(); ++i) {
    s.strictly_decreasing = s.strictly_decreasing && s.lines[i].emd_mean < s.lines[i - 1].emd_mean;
  }
  if (counts.size() >= 2) {
    const std::size_t lo = *counts.begin(), hi = *counts.rbegin();
    for (const auto& id : shapes) {
      double a = 0.0, b = 0.0;
      std::size_t na = 0, nb = 0;
      for (const auto& r : rows) {
        if (r.shape_id != id) continue;
        if (r.touches == lo) a += r.report.emd, ++na;
        if (r.touches == hi) b += r.report.emd, ++nb;
      }
      if (na == 0 || nb == 0) continue;
      ++s.shapes;
      s.improved_shapes += (b / nb) < (a / na);
    }
  }
  return s;
}

void write_summary(std::ostream& out, const TrendSummary& s) {
  char buf[160];
  out << "touches    n   EMD mean +- std          CD mean +- std\n";
  for (const auto& l : s.lines) {
    std::snprintf(buf, sizeof buf, "%7zu %4zu   %.4f +- %.4f   %.6f +- %.6f\n", l.touches, l.n, l.emd_mean, l.emd_std,
                  l.cd_mean, l.cd_std);
    out << buf;
  }
  out << "mean EMD strictly decreasing: " << (s.strictly_decreasing ? "yes" : "no") << '\n';
  out << "shapes improved (max vs min touches): " << s.improved_shapes << " / " << s.shapes << '\n';
}

std::vector<metrics::ReportRow> run_trend_experiment(const ExperimentConfig& cfg, const Models& models,
                                                     const Corpus& corpus, const fs::path& out_dir,
                                                     std::ostream* log) {
  fs::create_directories(out_dir);
  std::vector<metrics::ReportRow> rows;
  for (const auto& shape : corpus.split("test")) {
    for (std::size_t seed = 0; seed < cfg.seeds_per_shape; ++seed) {
      for (std::size_t k : cfg.touch_counts) {
        const fs::path run_dir = out_dir / "runs" / shape.id / ("k" + std::to_string(k) + "_s" + std::to_string(seed));
        auto r = run_reconstruction(cfg, models, corpus, shape, k, seed, &run_dir);
        say(log, shape.id + " k=" + std::to_string(k) + " seed=" + std::to_string(seed) + " emd " +
                     fmt("%.5f", r.row.report.emd) + " cd " + fmt("%.6f", r.row.report.cd));
        rows.push_back(r.row);
      }
    }
  }
  {
    std::ofstream out(out_dir / "trend.csv");
    metrics::write_csv_header(out);
    for (const auto& r : rows) metrics::write_csv_row(out, r);
  }
  std::ofstream out(out_dir / "trend_summary.txt");
  write_summary(out, summarize(rows));
  write_run_manifest(out_dir, "trend", cfg);
  return rows;
}

}  // namespace touchsdf::pipeline
