// semsplat: command-line front end over the pipeline stages.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semsplat/error.hpp"
#include "semsplat/evalkit.hpp"
#include "semsplat/io.hpp"
#include "semsplat/parallel.hpp"
#include "semsplat/pipeline.hpp"
#include "semsplat/query.hpp"
#include "semsplat/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semsplat;

namespace {

struct Globals {
  std::string config;
  int threads = 0;
  std::optional<std::uint64_t> seed;
  std::string dataset;
  std::string work;
  std::string report;
};

struct SynthFlags {
  std::optional<int> k, views, held_out, size, gaussians;
  std::optional<double> occlusion, blur, view_rot;
  bool force = false;
};

struct QueryFlags {
  std::string phrase;
  int frame = 0;
  std::string scale;
  std::optional<double> threshold;
  std::string out;
  std::string op = "delete";
  std::vector<double> color{1.0, 0.0, 0.0};
  std::string variant = "FULL";
  std::vector<std::string> variants;
};

PipelineConfig resolve(const Globals& g) {
  PipelineConfig c = g.config.empty() ? PipelineConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.dataset.empty()) c.paths.dataset = g.dataset;
  if (!g.work.empty()) c.paths.work = g.work;
  if (!g.report.empty()) c.paths.report = g.report;
  c.validate();
  return c;
}

void print_stage(const StageInfo& s) {
  std::cout << json{{"stage", s.name}, {"hash", s.hash}, {"dir", s.dir.string()}, {"reused", s.reused}}
                   .dump()
            << '\n';
}

std::vector<Scale> scales_for(const PipelineConfig& c, const std::string& flag) {
  if (flag.empty()) return c.scales;
  return {parse_scale(flag)};
}

// Evaluation views carry their own poses; fall back to the training frames
// when the dataset has no ground truth.
Frame find_frame(const fs::path& dataset, int frame_id) {
  if (fs::exists(dataset / "ground_truth.json")) {
    const GroundTruth truth = load_ground_truth(dataset / "ground_truth.json");
    for (const auto& v : truth.views)
      if (v.frame.frame_id == frame_id) return v.frame;
  }
  return load_dataset(dataset).frame(frame_id);
}

QuerySet dataset_queries(const fs::path& dataset) {
  const Dataset ds = load_dataset(dataset);
  require(ds.manifest.queries.has_value(), ErrorCode::kMissingArtifact, "dataset has no query set");
  return load_query_set(dataset / *ds.manifest.queries);
}

void snapshot(const fs::path& dir, const PipelineConfig& c, const json& extra) {
  json j = to_json(c);
  j["command"] = extra;
  write_json(dir / "config.json", j);
}

std::string safe(std::string s) {
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

struct Relevance {
  Frame frame;
  std::vector<RelevanceMap> maps;
};

Relevance relevance_for(Pipeline& p, const std::vector<Scale>& scales, const std::string& phrase,
                        int frame_id, bool normalize) {
  const QuerySet queries = dataset_queries(p.dataset_dir());
  Relevance r{find_frame(p.dataset_dir(), frame_id), {}};
  const Camera cam = Camera::from_frame(r.frame);
  const auto models = p.models();
  for (Scale s : scales) {
    const ScaleModel& m = models.at(s);
    const SplatOutput out = render(m.field.scene, cam);
    const std::vector<int> idx =
        argmax_indices(decode(out.feature, out.width, out.height, m.field.decoder));
    RelevanceMap map =
        relevance_map_from_indices(idx, cam.width, cam.height, m.codebook, phrase, queries, s);
    r.maps.push_back(normalize ? normalize_relevance(map) : map);
  }
  return r;
}

int run(int argc, char** argv) {
  CLI::App app{"Contrastive-codebook semantic Gaussian splatting pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline config JSON (defaults when omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", g.threads, "Worker cap (default: SEMSPLAT_THREADS or 1)")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Override the pipeline seed");
  app.add_option("--dataset", g.dataset, "Override paths.dataset");
  app.add_option("--work", g.work, "Override paths.work");
  app.add_option("--report", g.report, "Override paths.report");

  SynthFlags sf;
  QueryFlags qf;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--k", sf.k, "Object categories")->check(CLI::Range(2, 64));
  synth->add_option("--views", sf.views, "Training views")->check(CLI::Range(2, 1000));
  synth->add_option("--held-out", sf.held_out, "Evaluation-only views")->check(CLI::Range(0, 1000));
  synth->add_option("--size", sf.size, "Square image size in pixels")->check(CLI::Range(8, 1024));
  synth->add_option("--gaussians", sf.gaussians, "Gaussian count")->check(CLI::Range(1, 1000000));
  synth->add_option("--occlusion", sf.occlusion, "Occlusion rate")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--blur", sf.blur, "Blur mix")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--view-rot", sf.view_rot, "View rotation in degrees")->check(CLI::Range(0.0, 180.0));
  synth->add_flag("--force", sf.force, "Replace an existing dataset directory");

  auto* associate = app.add_subcommand("associate", "Filter masks and associate labels");
  auto* train_codebook = app.add_subcommand("train-codebook", "Train the per-scale codebooks");
  auto* index = app.add_subcommand("index", "Build per-frame index maps");
  auto* train_field = app.add_subcommand("train-field", "Optimize the semantic field");

  auto* render_cmd = app.add_subcommand("render", "Render color and feature maps of one frame");
  render_cmd->add_option("--frame", qf.frame, "Frame id")->required();
  render_cmd->add_option("--scale", qf.scale, "sp or wp (default: all)");
  render_cmd->add_option("--out", qf.out, "Output directory (default: <report>/render)");

  auto* query = app.add_subcommand("query", "Relevance heatmaps for a phrase");
  auto* segment_cmd = app.add_subcommand("segment", "Binary mask for a phrase");
  for (auto* sub : {query, segment_cmd}) {
    sub->add_option("--phrase", qf.phrase, "Query phrase")->required();
    sub->add_option("--frame", qf.frame, "Frame id")->required();
    sub->add_option("--scale", qf.scale, "sp or wp (default: all)");
    sub->add_option("--out", qf.out, "Output directory");
  }
  segment_cmd->add_option("--threshold", qf.threshold, "Override eval.threshold")
      ->check(CLI::Range(0.0, 1.0));

  auto* edit = app.add_subcommand("edit", "Select Gaussians by phrase and edit the scene");
  edit->add_option("--phrase", qf.phrase, "Query phrase")->required();
  edit->add_option("--op", qf.op, "extract, delete or recolor")
      ->check(CLI::IsMember({"extract", "delete", "recolor"}));
  edit->add_option("--scale", qf.scale, "Field scale to edit (default wp)");
  edit->add_option("--threshold", qf.threshold, "Override eval.threshold")->check(CLI::Range(0.0, 1.0));
  edit->add_option("--color", qf.color, "Recolor RGB in [0,1]")->expected(3);
  edit->add_option("--out", qf.out, "Output directory");

  auto* eval = app.add_subcommand("eval", "Segmentation mIoU on evaluation views");
  eval->add_option("--variant", qf.variant, "Variant tag for the report")
      ->check(CLI::IsMember({"BASELINE", "PULL_ONLY", "PUSH_ONLY", "FULL"}));

  auto* ablate = app.add_subcommand("ablate", "Run the codebook loss ablation");
  ablate->add_option("--variants", qf.variants, "Subset of BASELINE PULL_ONLY PUSH_ONLY FULL")
      ->check(CLI::IsMember({"BASELINE", "PULL_ONLY", "PUSH_ONLY", "FULL"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (g.threads > 0) set_thread_count(g.threads);
  PipelineConfig config = resolve(g);
  const fs::path dataset = config.paths.dataset;

  if (synth->parsed()) {
    SynthConfig& s = config.synth;
    if (sf.k) s.categories = *sf.k;
    if (sf.views) s.views = *sf.views;
    if (sf.held_out) s.held_out_views = *sf.held_out;
    if (sf.size) s.width = s.height = *sf.size;
    if (sf.gaussians) s.gaussians = *sf.gaussians;
    if (sf.occlusion) s.corruption.occlusion_rate = *sf.occlusion;
    if (sf.blur) s.corruption.blur_mix = *sf.blur;
    if (sf.view_rot) s.corruption.view_rot_deg = *sf.view_rot;
    config.validate();
    if (fs::exists(dataset) && !fs::is_empty(dataset)) {
      require(sf.force, ErrorCode::kInvalidConfig,
              dataset.string() + " is not empty (use --force to replace it)");
      fs::remove_all(dataset);
    }
    const SyntheticScene scene = generate(config.synth_config());
    write_synthetic(scene, dataset);
    const json full = to_json(config);
    write_json(dataset / "synth.json", json{{"seed", config.seed}, {"synth", full["synth"]}});
    std::cout << json{{"dataset", dataset.string()},
                      {"frames", scene.dataset.frames.size()},
                      {"categories", scene.truth.categories}}
                     .dump()
              << '\n';
    return 0;
  }

  Pipeline pipeline(config, dataset);
  if (associate->parsed()) print_stage(pipeline.associate());
  if (train_codebook->parsed()) print_stage(pipeline.train_codebook());
  if (index->parsed()) print_stage(pipeline.index());
  if (train_field->parsed()) print_stage(pipeline.train_field());

  if (render_cmd->parsed()) {
    const fs::path out = qf.out.empty() ? fs::path(config.paths.report) / "render" : fs::path(qf.out);
    fs::create_directories(out);
    const Frame frame = find_frame(dataset, qf.frame);
    const Camera cam = Camera::from_frame(frame);
    const auto models = pipeline.models();
    for (Scale s : scales_for(config, qf.scale)) {
      const SplatOutput r = render(models.at(s).field.scene, cam);
      const std::string stem = "frame" + std::to_string(qf.frame) + "_" + std::string(scale_tag(s));
      write_png(out / (stem + "_color.png"), color_to_image(r));
      write_feature_map(out / (stem + "_features.ssfm"), r);
    }
    snapshot(out, config, {{"name", "render"}, {"frame", qf.frame}, {"scale", qf.scale}});
  }

  if (query->parsed() || segment_cmd->parsed()) {
    const bool seg = segment_cmd->parsed();
    const fs::path out = qf.out.empty() ? fs::path(config.paths.report) / (seg ? "segment" : "query")
                                        : fs::path(qf.out);
    fs::create_directories(out);
    const Relevance r = relevance_for(pipeline, scales_for(config, qf.scale), qf.phrase, qf.frame,
                                      config.eval.normalize);
    const std::string stem = "frame" + std::to_string(qf.frame) + "_" + safe(qf.phrase);
    if (!seg) {
      for (const auto& m : r.maps)
        write_png(out / (stem + "_" + std::string(scale_tag(m.scale)) + ".png"), heatmap_image(m));
    } else {
      const double threshold = qf.threshold.value_or(config.eval.threshold);
      const Bitmap mask = segment(r.maps, threshold);
      write_png(out / (stem + "_mask.png"), mask_image(mask));
      if (fs::exists(dataset / "ground_truth.json")) {
        const GroundTruth truth = load_ground_truth(dataset / "ground_truth.json");
        for (int k = 1; k <= truth.categories; ++k) {
          if (truth.names[k - 1] != qf.phrase) continue;
          const Bitmap& gt = truth.view(qf.frame).category_masks[k - 1];
          write_png(out / (stem + "_overlay.png"), overlay_image(mask, gt));
        }
      }
      std::cout << json{{"phrase", qf.phrase}, {"frame", qf.frame}, {"pixels", mask.count()}}.dump()
                << '\n';
    }
    snapshot(out, config,
             {{"name", seg ? "segment" : "query"}, {"phrase", qf.phrase}, {"frame", qf.frame},
              {"scale", qf.scale}, {"threshold", qf.threshold.value_or(config.eval.threshold)}});
  }

  if (edit->parsed()) {
    const fs::path out = qf.out.empty() ? fs::path(config.paths.report) / "edit" : fs::path(qf.out);
    fs::create_directories(out);
    const Scale scale = qf.scale.empty() ? Scale::kWholePart : parse_scale(qf.scale);
    const auto models = pipeline.models();
    const ScaleModel& m = models.at(scale);
    const EditOp op = qf.op == "extract" ? EditOp::kExtract
                      : qf.op == "recolor" ? EditOp::kRecolor
                                           : EditOp::kDelete;
    const EditResult r = select_and_edit(m.field.scene, m.field.decoder, m.codebook, qf.phrase,
                                         dataset_queries(dataset), op,
                                         qf.threshold.value_or(config.eval.threshold),
                                         config.eval.normalize,
                                         Eigen::Vector3d(qf.color[0], qf.color[1], qf.color[2]));
    save_scene(out / "scene.json", r.scene);
    write_json(out / "selection.json", selection_to_json(r.selection));
    snapshot(out, config,
             {{"name", "edit"}, {"phrase", qf.phrase}, {"op", qf.op},
              {"scale", std::string(scale_tag(scale))}});
    if (r.selection.empty()) {
      std::cerr << json{{"warning", std::string(to_string(ErrorCode::kEmptySelection))},
                        {"message", "no prototype is relevant to '" + qf.phrase + "'; scene unchanged"}}
                       .dump()
                << '\n';
    }
    std::cout << json{{"selected", r.selection.indices.size()}, {"gaussians", r.scene.size()}}.dump()
              << '\n';
  }

  if (eval->parsed()) {
    const EvalReport rep = pipeline.evaluate(config.paths.report, qf.variant);
    std::cout << json{{"variant", rep.variant}, {"miou", rep.miou}, {"config_hash", rep.config_hash},
                      {"report", config.paths.report}}
                     .dump()
              << '\n';
  }

  if (ablate->parsed()) {
    std::vector<Variant> variants;
    for (const auto& v : qf.variants) variants.push_back(parse_variant(v));
    if (variants.empty()) variants.assign(kAllVariants.begin(), kAllVariants.end());
    const auto reports = run_ablation(config, dataset, config.paths.report, variants);
    json rows = json::array();
    for (const auto& r : reports) rows.push_back({{"variant", r.variant}, {"miou", r.miou}});
    std::cout << json{{"report", config.paths.report}, {"variants", rows}}.dump() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump()
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
