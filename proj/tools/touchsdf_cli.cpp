// touchsdf: command-line front end for the reconstruction pipeline.
//
// Every subcommand reads the same optional config file, so one master seed
// and one config hash tie all outputs under --out together.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "touchsdf/config.hpp"
#include "touchsdf/errors.hpp"
#include "touchsdf/metrics.hpp"
#include "touchsdf/pipeline.hpp"
#include "touchsdf/sdf_dataset.hpp"

namespace fs = std::filesystem;
using namespace touchsdf;

namespace {

struct Common {
  std::string config;
  std::string out = "run";
  std::int64_t seed = -1;
  bool quiet = false;

  ExperimentConfig load() const {
    auto cfg = config.empty() ? ExperimentConfig{} : ExperimentConfig::load(config);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.validate();
    return cfg;
  }
  std::ostream* log() const { return quiet ? nullptr : &std::cerr; }
  fs::path root() const { return out; }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config, "experiment config (key = value under [section] headers)")
      ->check(CLI::ExistingFile);
  app->add_option("-o,--out", c.out, "experiment directory")->capture_default_str();
  app->add_option("--seed", c.seed, "override the master seed");
  app->add_flag("-q,--quiet", c.quiet, "no progress output");
}

pipeline::Corpus corpus_of(const Common& c, const ExperimentConfig& cfg) {
  const auto dir = c.root() / "corpus";
  pipeline::check_run_manifest(dir, "gen-corpus", cfg);
  return pipeline::load_corpus(dir);
}

pipeline::Models models_of(const Common& c, const ExperimentConfig& cfg) {
  const auto dir = c.root() / "models";
  pipeline::check_run_manifest(dir, "train-chart", cfg);
  pipeline::check_run_manifest(dir, "train-sdf", cfg);
  return pipeline::load_models(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile shape completion: procedural corpus, touch simulation, chart and SDF training, "
               "multi-touch reconstruction"};
  app.require_subcommand(1);
  Common common;

  auto* gen_corpus = app.add_subcommand("gen-corpus", "generate the procedural primitive corpus");
  add_common(gen_corpus, common);

  auto* gen_touches = app.add_subcommand("gen-touches", "simulate touches on train and val shapes");
  add_common(gen_touches, common);

  auto* train_chart = app.add_subcommand("train-chart", "train the tactile chart predictor");
  add_common(train_chart, common);

  auto* train_sdf = app.add_subcommand("train-sdf", "build SDF datasets and train the auto-decoder");
  add_common(train_sdf, common);

  std::string shape_id;
  std::size_t touches = 20;
  std::uint64_t run_seed = 0;
  auto* reconstruct = app.add_subcommand("reconstruct", "reconstruct one shape from k touches");
  add_common(reconstruct, common);
  reconstruct->add_option("--shape", shape_id, "shape id from the corpus manifest")->required();
  reconstruct->add_option("-k,--touches", touches, "number of touches")->capture_default_str();
  reconstruct->add_option("--run-seed", run_seed, "per-run seed index")->capture_default_str();

  auto* trend = app.add_subcommand("trend", "test shapes x touch counts x seeds experiment");
  add_common(trend, common);

  std::string pred_path, gt_path, trend_dir;
  std::size_t eval_points = 4096;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "compare two meshes, or re-summarize a trend directory");
  add_common(eval, common);
  eval->add_option("--pred", pred_path, "predicted mesh (OBJ)");
  eval->add_option("--gt", gt_path, "ground-truth mesh (OBJ)");
  eval->add_option("--points", eval_points, "surface samples per mesh")->capture_default_str();
  eval->add_option("--eval-seed", eval_seed, "sampling seed")->capture_default_str();
  eval->add_option("--trend", trend_dir, "trend output directory to re-summarize");

  std::string mesh_path, tsdf_path;
  auto* mesh_sdf = app.add_subcommand("mesh-sdf", "dump the SDF training samples for a mesh");
  add_common(mesh_sdf, common);
  mesh_sdf->add_option("--mesh", mesh_path, "watertight OBJ")->required()->check(CLI::ExistingFile);
  mesh_sdf->add_option("--tsdf", tsdf_path, "output TSDF file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto cfg = common.load();
    const auto root = common.root();
    if (gen_corpus->parsed()) {
      const auto corpus = pipeline::gen_corpus(cfg, root / "corpus");
      for (const auto& s : corpus.shapes) {
        std::cout << s.id << '\t' << s.split << (s.csg_noop ? "\tcsg-noop" : "") << '\n';
      }
    } else if (gen_touches->parsed()) {
      pipeline::run_touch_dataset(cfg, corpus_of(common, cfg), root / "touches", common.log());
    } else if (train_chart->parsed()) {
      const auto r = pipeline::run_train_chart(cfg, corpus_of(common, cfg), root / "touches", root / "models",
                                               common.log());
      std::cout << "val chamfer: untrained " << r.baseline_val << ", trained " << r.trained_val << '\n';
    } else if (train_sdf->parsed()) {
      const auto r = pipeline::run_train_sdf(cfg, corpus_of(common, cfg), root / "models", common.log());
      std::cout << "final loss " << r.loss_history.back() << '\n';
    } else if (reconstruct->parsed()) {
      const auto corpus = corpus_of(common, cfg);
      const auto models = models_of(common, cfg);
      const auto dir = root / "recon" / shape_id / ("k" + std::to_string(touches) + "_s" + std::to_string(run_seed));
      const auto r = pipeline::run_reconstruction(cfg, models, corpus, corpus.find(shape_id), touches, run_seed, &dir);
      pipeline::write_run_manifest(dir, "reconstruct", cfg);
      metrics::write_csv_header(std::cout);
      metrics::write_csv_row(std::cout, r.row);
    } else if (trend->parsed()) {
      const auto corpus = corpus_of(common, cfg);
      const auto models = models_of(common, cfg);
      const auto rows = pipeline::run_trend_experiment(cfg, models, corpus, root / "trend", common.log());
      pipeline::write_summary(std::cout, pipeline::summarize(rows));
    } else if (eval->parsed()) {
      if (!trend_dir.empty()) {
        pipeline::check_run_manifest(trend_dir, "trend", cfg);
        std::ifstream in(fs::path(trend_dir) / "trend.csv");
        if (!in) throw IoError("no trend.csv in " + trend_dir);
        pipeline::write_summary(std::cout, pipeline::summarize(metrics::read_csv(in)));
      } else {
        if (pred_path.empty() || gt_path.empty()) throw InvalidArgument("eval needs --pred and --gt, or --trend");
        const auto pred = load_mesh(pred_path).mesh;
        const auto gt = load_mesh(gt_path).mesh;
        metrics::ReportRow row;
        row.shape_id = fs::path(pred_path).stem().string();
        row.seed = eval_seed;
        row.report = metrics::evaluate(pred, gt, eval_points, eval_seed);
        metrics::write_csv_header(std::cout);
        metrics::write_csv_row(std::cout, row);
      }
    } else if (mesh_sdf->parsed()) {
      const auto mesh = load_mesh(mesh_path, true).mesh;
      const auto samples = generate_sdf_dataset(mesh, cfg.sdf_data.n_surface, cfg.sdf_data.n_uniform,
                                                cfg.sdf_data.sigma_near, pipeline::stage_seed(cfg.seed, "mesh-sdf"));
      save_sdf_dataset(tsdf_path, samples);
      std::cout << samples.size() << " samples -> " << tsdf_path << '\n';
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
