#include "semsplat/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "semsplat/error.hpp"
#include "semsplat/hash.hpp"
#include "semsplat/io.hpp"
#include "semsplat/mask_pipeline.hpp"

namespace semsplat {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config <-> JSON

namespace {

std::string init_name(PrototypeInit init) {
  return init == PrototypeInit::kRandom ? "random" : "kmeans++";
}

PrototypeInit parse_init(const std::string& s) {
  if (s == "random") return PrototypeInit::kRandom;
  if (s == "kmeans++") return PrototypeInit::kKMeansPlusPlus;
  fail(ErrorCode::kInvalidConfig, "ccl.init must be \"random\" or \"kmeans++\", got \"" + s + "\"");
}

std::string mode_name(FieldMode mode) {
  return mode == FieldMode::kJoint ? "joint" : "semantic_only";
}

FieldMode parse_mode(const std::string& s) {
  if (s == "semantic_only") return FieldMode::kSemanticOnly;
  if (s == "joint") return FieldMode::kJoint;
  fail(ErrorCode::kInvalidConfig, "field.mode must be \"semantic_only\" or \"joint\", got \"" + s + "\"");
}

json scales_json(const std::vector<Scale>& scales) {
  json out = json::array();
  for (Scale s : scales) out.push_back(scale_tag(s));
  return out;
}

json ccl_json(const CclConfig& c) {
  return {{"lambda_pull", c.lambda_pull},   {"lambda_push", c.lambda_push},
          {"margin", c.margin},             {"n_prototypes", c.n_prototypes},
          {"steps", c.steps},               {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"adam_betas", {c.beta1, c.beta2}},
          {"init", init_name(c.init)}};
}

json field_json(const FieldTrainConfig& c) {
  return {{"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"adam_betas", {c.beta1, c.beta2}},
          {"mode", mode_name(c.mode)},
          {"color_loss_weight", c.color_loss_weight},
          {"freeze_decoder", c.freeze_decoder},
          {"hidden_dim", c.hidden_dim},
          {"feature_init_std", c.feature_init_std}};
}

json synth_json(const SynthConfig& c) {
  return {{"categories", c.categories},
          {"views", c.views},
          {"held_out_views", c.held_out_views},
          {"width", c.width},
          {"height", c.height},
          {"gaussians", c.gaussians},
          {"feature_dim", c.feature_dim},
          {"field_dim", c.field_dim},
          {"elevation_deg", c.elevation_deg},
          {"min_mask_area", c.min_mask_area},
          {"propagation_erosion", c.propagation_erosion},
          {"corruption",
           {{"occlusion_rate", c.corruption.occlusion_rate},
            {"blur_mix", c.corruption.blur_mix},
            {"view_rot_deg", c.corruption.view_rot_deg}}}};
}

json filter_json(const FilterThresholds& f) {
  return {{"min_pred_iou", f.min_pred_iou},
          {"min_stability", f.min_stability},
          {"max_overlap", f.max_overlap}};
}

json eval_json(const EvalConfig& e) {
  return {{"threshold", e.threshold},
          {"normalize", e.normalize},
          {"held_out_only", e.held_out_only}};
}

// Every key of `given` must exist in `defaults` with a compatible shape.
void check_keys(const json& given, const json& defaults, const std::string& where) {
  if (!given.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!defaults.contains(key)) fail(ErrorCode::kInvalidConfig, "unknown config key '" + path + "'");
    if (defaults[key].is_object()) {
      require(value.is_object(), ErrorCode::kInvalidConfig, "config key '" + path + "' must be an object");
      check_keys(value, defaults[key], path);
    }
  }
}

template <typename T>
T field_of(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kInvalidConfig, "config key '" + section + "." + key + "' has the wrong type");
  }
}

std::pair<double, double> betas_of(const json& j, const std::string& section) {
  const json& b = j.at("adam_betas");
  require(b.is_array() && b.size() == 2 && b[0].is_number() && b[1].is_number(),
          ErrorCode::kInvalidConfig, "config key '" + section + ".adam_betas' must be [b1, b2]");
  return {b[0].get<double>(), b[1].get<double>()};
}

}  // namespace

SynthConfig PipelineConfig::synth_config() const {
  SynthConfig c = synth;
  c.seed = seed;
  c.corruption.seed = seed;
  return c;
}

CclConfig PipelineConfig::ccl_config() const {
  CclConfig c = ccl;
  c.seed = seed;
  return c;
}

FieldTrainConfig PipelineConfig::field_config() const {
  FieldTrainConfig c = field;
  c.seed = seed;
  return c;
}

void PipelineConfig::validate() const {
  synth_config().validate();
  ccl_config().validate();
  field_config().validate();
  for (double t : {mask_filter.min_pred_iou, mask_filter.min_stability, mask_filter.max_overlap})
    require(t >= 0.0 && t <= 1.0, ErrorCode::kInvalidConfig, "mask_filter thresholds must lie in [0, 1]");
  require(association_threshold >= 0.0 && association_threshold <= 1.0, ErrorCode::kInvalidConfig,
          "association.threshold must lie in [0, 1]");
  require(eval.threshold >= 0.0 && eval.threshold <= 1.0, ErrorCode::kInvalidConfig,
          "eval.threshold must lie in [0, 1]");
  require(!scales.empty(), ErrorCode::kInvalidConfig, "scales must not be empty");
  for (std::size_t i = 0; i < scales.size(); ++i)
    for (std::size_t j = i + 1; j < scales.size(); ++j)
      require(scales[i] != scales[j], ErrorCode::kInvalidConfig, "scales must not repeat");
}

json to_json(const PipelineConfig& c) {
  return {{"seed", c.seed},
          {"scales", scales_json(c.scales)},
          {"synth", synth_json(c.synth)},
          {"mask_filter", filter_json(c.mask_filter)},
          {"association", {{"threshold", c.association_threshold}}},
          {"ccl", ccl_json(c.ccl)},
          {"field", field_json(c.field)},
          {"eval", eval_json(c.eval)},
          {"paths", {{"dataset", c.paths.dataset}, {"work", c.paths.work}, {"report", c.paths.report}}}};
}

PipelineConfig config_from_json(const json& given) {
  require(given.is_object(), ErrorCode::kInvalidConfig, "config must be a JSON object");
  const json defaults = to_json(PipelineConfig{});
  check_keys(given, defaults, "");
  json j = defaults;
  j.merge_patch(given);

  PipelineConfig c;
  c.seed = field_of<std::uint64_t>(j, "seed", "");
  c.scales.clear();
  try {
    for (const auto& s : j.at("scales")) c.scales.push_back(parse_scale(s.get<std::string>()));
  } catch (const json::exception&) {
    fail(ErrorCode::kInvalidConfig, "scales must be a list of \"sp\" / \"wp\"");
  } catch (const Error&) {
    fail(ErrorCode::kInvalidConfig, "scales must be a list of \"sp\" / \"wp\"");
  }

  const json& s = j["synth"];
  c.synth.categories = field_of<int>(s, "categories", "synth");
  c.synth.views = field_of<int>(s, "views", "synth");
  c.synth.held_out_views = field_of<int>(s, "held_out_views", "synth");
  c.synth.width = field_of<int>(s, "width", "synth");
  c.synth.height = field_of<int>(s, "height", "synth");
  c.synth.gaussians = field_of<int>(s, "gaussians", "synth");
  c.synth.feature_dim = field_of<int>(s, "feature_dim", "synth");
  c.synth.field_dim = field_of<int>(s, "field_dim", "synth");
  c.synth.elevation_deg = field_of<double>(s, "elevation_deg", "synth");
  c.synth.min_mask_area = field_of<int>(s, "min_mask_area", "synth");
  c.synth.propagation_erosion = field_of<int>(s, "propagation_erosion", "synth");
  const json& cor = s["corruption"];
  c.synth.corruption.occlusion_rate = field_of<double>(cor, "occlusion_rate", "synth.corruption");
  c.synth.corruption.blur_mix = field_of<double>(cor, "blur_mix", "synth.corruption");
  c.synth.corruption.view_rot_deg = field_of<double>(cor, "view_rot_deg", "synth.corruption");

  const json& mf = j["mask_filter"];
  c.mask_filter.min_pred_iou = field_of<double>(mf, "min_pred_iou", "mask_filter");
  c.mask_filter.min_stability = field_of<double>(mf, "min_stability", "mask_filter");
  c.mask_filter.max_overlap = field_of<double>(mf, "max_overlap", "mask_filter");
  c.association_threshold = field_of<double>(j["association"], "threshold", "association");

  const json& cc = j["ccl"];
  c.ccl.lambda_pull = field_of<double>(cc, "lambda_pull", "ccl");
  c.ccl.lambda_push = field_of<double>(cc, "lambda_push", "ccl");
  c.ccl.margin = field_of<double>(cc, "margin", "ccl");
  c.ccl.n_prototypes = field_of<int>(cc, "n_prototypes", "ccl");
  c.ccl.steps = field_of<int>(cc, "steps", "ccl");
  c.ccl.batch_size = field_of<int>(cc, "batch_size", "ccl");
  c.ccl.learning_rate = field_of<double>(cc, "learning_rate", "ccl");
  std::tie(c.ccl.beta1, c.ccl.beta2) = betas_of(cc, "ccl");
  c.ccl.init = parse_init(field_of<std::string>(cc, "init", "ccl"));

  const json& f = j["field"];
  c.field.iterations = field_of<int>(f, "iterations", "field");
  c.field.learning_rate = field_of<double>(f, "learning_rate", "field");
  std::tie(c.field.beta1, c.field.beta2) = betas_of(f, "field");
  c.field.mode = parse_mode(field_of<std::string>(f, "mode", "field"));
  c.field.color_loss_weight = field_of<double>(f, "color_loss_weight", "field");
  c.field.freeze_decoder = field_of<bool>(f, "freeze_decoder", "field");
  c.field.hidden_dim = field_of<int>(f, "hidden_dim", "field");
  c.field.feature_init_std = field_of<double>(f, "feature_init_std", "field");

  const json& e = j["eval"];
  c.eval.threshold = field_of<double>(e, "threshold", "eval");
  c.eval.normalize = field_of<bool>(e, "normalize", "eval");
  c.eval.held_out_only = field_of<bool>(e, "held_out_only", "eval");

  const json& p = j["paths"];
  c.paths.dataset = field_of<std::string>(p, "dataset", "paths");
  c.paths.work = field_of<std::string>(p, "work", "paths");
  c.paths.report = field_of<std::string>(p, "report", "paths");

  c.validate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kInvalidConfig, path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::string scale_file(const std::string& stem, Scale scale, const std::string& ext) {
  return stem + "_" + std::string(scale_tag(scale)) + ext;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

// Drops low-quality and overlapping masks of one layer while keeping mask ids
// and the feature rows they own.
void filter_layer(ScaleLayer& layer, const FilterThresholds& thresholds) {
  ScaleLayer out;
  out.features = FeatureTable(layer.features.dim());
  std::vector<std::size_t> keep;
  std::size_t begin = 0;
  while (begin < layer.masks.size()) {
    std::size_t end = begin;
    while (end < layer.masks.size() && layer.masks[end].frame_id == layer.masks[begin].frame_id) ++end;
    std::vector<CandidateMask> candidates;
    for (std::size_t i = begin; i < end; ++i) {
      const Mask& m = layer.masks[i];
      candidates.push_back({m.region, m.pred_iou, m.stability, SourceScale::kPart});
    }
    std::vector<std::size_t> sources;
    std::vector<Mask> accepted = filter_masks(candidates, thresholds, layer.masks[begin].frame_id,
                                              layer.masks[begin].scale, 0, &sources);
    std::vector<std::pair<std::size_t, Mask>> ordered;
    for (std::size_t a = 0; a < accepted.size(); ++a) {
      Mask m = std::move(accepted[a]);
      m.mask_id = layer.masks[begin + sources[a]].mask_id;
      ordered.emplace_back(begin + sources[a], std::move(m));
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [row, m] : ordered) {
      keep.push_back(row);
      out.masks.push_back(std::move(m));
    }
    begin = end;
  }
  out.features = layer.features.subset(keep);
  layer = std::move(out);
}

void write_codebook_trace(const fs::path& path, const std::vector<LossTerms>& trace) {
  std::ostringstream s;
  s << "step,max,pull,push,total\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const LossTerms& t = trace[i];
    s << i << ',' << format_g17(t.max) << ',' << format_g17(t.pull) << ',' << format_g17(t.push)
      << ',' << format_g17(t.total) << '\n';
  }
  write_text(path, s.str());
}

void write_field_trace(const fs::path& path, const std::vector<double>& trace) {
  std::ostringstream s;
  s << "iteration,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i) s << i << ',' << format_g17(trace[i]) << '\n';
  write_text(path, s.str());
}

}  // namespace

std::string hash_directory(const fs::path& root) {
  require(fs::is_directory(root), ErrorCode::kMissingArtifact, "no directory at " + root.string());
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(fs::relative(entry.path(), root).generic_string());
  std::sort(files.begin(), files.end());
  std::string digest_input;
  for (const auto& f : files) digest_input += f + '\0' + sha256_file(root / f) + '\n';
  return sha256_hex(digest_input);
}

Pipeline::Pipeline(PipelineConfig config, fs::path dataset)
    : config_(std::move(config)), dataset_(std::move(dataset)) {
  config_.validate();
}

std::string Pipeline::dataset_hash() {
  if (!dataset_hash_) dataset_hash_ = hash_directory(dataset_);
  return *dataset_hash_;
}

std::string Pipeline::section_hash(const std::string& upstream, const json& section) const {
  return sha256_hex(upstream + '\n' + section.dump());
}

StageInfo Pipeline::prepare(const std::string& stage, const std::string& upstream,
                            const json& section) {
  StageInfo info;
  info.name = stage;
  info.hash = section_hash(upstream, json{{"stage", stage}, {"config", section}});
  info.dir = fs::path(config_.paths.work) / (stage + "-" + info.hash.substr(0, 16));
  if (fs::exists(info.dir / "stage.json")) {
    const json recorded = read_json(info.dir / "stage.json");
    require(recorded.value("hash", "") == info.hash, ErrorCode::kStaleState,
            info.dir.string() + " holds a different stage (hash prefix collision)");
    info.reused = true;
    return info;
  }
  // Leftovers of an interrupted run are never trusted.
  fs::remove_all(info.dir);
  fs::create_directories(info.dir);
  return info;
}

void Pipeline::finish(const StageInfo& info, const std::string& upstream, const json& section,
                      double seconds) {
  write_json(info.dir / "runtime.json", json{{"seconds", seconds}});
  // Paths are left out so relocated runs still produce identical stages.
  json resolved = to_json(config_);
  resolved.erase("paths");
  // Written last: its presence marks the stage complete.
  write_json(info.dir / "stage.json", json{{"stage", info.name},
                                           {"hash", info.hash},
                                           {"upstream", upstream},
                                           {"config", section},
                                           {"pipeline", resolved}});
}

StageInfo Pipeline::associate() {
  const std::string upstream = dataset_hash();
  const json section = {{"scales", scales_json(config_.scales)},
                        {"mask_filter", filter_json(config_.mask_filter)},
                        {"association", {{"threshold", config_.association_threshold}}}};
  StageInfo info = prepare("associate", upstream, section);
  if (info.reused) return info;
  const auto t0 = std::chrono::steady_clock::now();

  Dataset ds = load_dataset(dataset_);
  for (Scale s : config_.scales) filter_layer(ds.layer(s), config_.mask_filter);
  associate_dataset(ds, config_.association_threshold);

  Dataset out;
  out.manifest = ds.manifest;
  out.manifest.scales = config_.scales;
  out.manifest.propagated.reset();
  out.manifest.queries.reset();
  out.manifest.initial_scene.reset();
  out.frames = ds.frames;
  for (Scale s : config_.scales) out.layers[s] = ds.layer(s);
  save_dataset(out, info.dir / "dataset");

  finish(info, upstream, section, seconds_since(t0));
  return info;
}

Dataset Pipeline::associated_dataset() {
  const StageInfo a = associate();
  Dataset ds = load_dataset(a.dir / "dataset");
  ds.root = dataset_;  // images and scene assets stay with the source dataset
  return ds;
}

StageInfo Pipeline::train_codebook() {
  const StageInfo up = associate();
  const CclConfig ccl = config_.ccl_config();
  const json section = {{"seed", config_.seed}, {"ccl", ccl_json(ccl)}};
  StageInfo info = prepare("codebook", up.hash, section);
  if (info.reused) return info;
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset ds = associated_dataset();
  for (Scale s : config_.scales) {
    const LabeledLayer layer = labeled_features(ds, s);
    const CodebookTrainResult r = semsplat::train_codebook(layer.features, layer.labels, ccl);
    const std::string trace = scale_file("loss", s, ".csv");
    save_codebook(info.dir / scale_file("codebook", s, ".json"), r.codebook,
                  json{{"scale", scale_tag(s)},
                       {"n_prototypes", r.codebook.size()},
                       {"dim", r.codebook.dim()},
                       {"config_hash", info.hash},
                       {"loss_trace", trace}});
    write_codebook_trace(info.dir / trace, r.trace);
  }
  finish(info, up.hash, section, seconds_since(t0));
  return info;
}

StageInfo Pipeline::index() {
  const StageInfo up = train_codebook();
  const json section = json::object();
  StageInfo info = prepare("index", up.hash, section);
  if (info.reused) return info;
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset ds = associated_dataset();
  for (Scale s : config_.scales) {
    const Codebook cb = load_codebook(up.dir / scale_file("codebook", s, ".json"));
    save_index_maps(info.dir / scale_file("index", s, ".bin"), build_index_maps(ds, s, cb));
  }
  finish(info, up.hash, section, seconds_since(t0));
  return info;
}

StageInfo Pipeline::train_field() {
  const StageInfo up = index();
  const FieldTrainConfig fc = config_.field_config();
  const json section = {{"seed", config_.seed}, {"field", field_json(fc)}};
  StageInfo info = prepare("field", up.hash, section);
  if (info.reused) return info;
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset ds = associated_dataset();
  const Dataset source = load_dataset(dataset_);
  require(source.manifest.initial_scene.has_value(), ErrorCode::kMissingArtifact,
          "dataset has no initial_scene for the field");
  const GaussianScene geometry = load_scene(dataset_ / *source.manifest.initial_scene);
  std::vector<Image8> images;
  if (fc.mode == FieldMode::kJoint) {
    for (const Frame& f : source.frames) {
      require(f.image_path.has_value(), ErrorCode::kMissingArtifact,
              "JOINT mode needs an image for frame " + std::to_string(f.frame_id));
      images.push_back(read_png(dataset_ / *f.image_path));
    }
  }
  const StageInfo cb_stage = train_codebook();
  for (Scale s : config_.scales) {
    const Codebook cb = load_codebook(cb_stage.dir / scale_file("codebook", s, ".json"));
    const std::vector<IndexMap> maps = load_index_maps(up.dir / scale_file("index", s, ".bin"));
    const std::vector<FieldView> views = make_field_views(ds, maps, images);
    const SemanticField initial =
        initialize_field(geometry, ds.manifest.field_dim, cb.size(), fc);
    const FieldTrainResult r = semsplat::train_field(initial, views, fc);
    const std::string trace = scale_file("loss", s, ".csv");
    save_field(info.dir / scale_file("field", s, ""), r.field,
               json{{"scale", scale_tag(s)}, {"config_hash", info.hash}, {"loss_trace", trace}});
    write_field_trace(info.dir / trace, r.loss_trace);
  }
  finish(info, up.hash, section, seconds_since(t0));
  return info;
}

std::map<Scale, ScaleModel> Pipeline::models() {
  const StageInfo field = train_field();
  const StageInfo cb = train_codebook();
  std::map<Scale, ScaleModel> out;
  for (Scale s : config_.scales) {
    out[s] = ScaleModel{load_codebook(cb.dir / scale_file("codebook", s, ".json")),
                        load_field(field.dir / scale_file("field", s, ""))};
  }
  return out;
}

namespace {

struct EvalInputs {
  GroundTruth truth;
  QuerySet queries;
};

EvalInputs load_eval_inputs(const fs::path& dataset) {
  const Dataset source = load_dataset(dataset);
  require(source.manifest.queries.has_value(), ErrorCode::kMissingArtifact,
          "dataset has no query set");
  return {load_ground_truth(dataset / "ground_truth.json"),
          load_query_set(dataset / *source.manifest.queries)};
}

EvalReport evaluate_variant(Pipeline& pipeline, const EvalInputs& inputs, const fs::path& report_dir,
                            const std::string& variant, const std::string& prefix) {
  const auto t0 = std::chrono::steady_clock::now();
  const StageInfo field = pipeline.train_field();
  EvalReport report = evaluate_segmentation(pipeline.models(), inputs.truth, inputs.queries,
                                            pipeline.config().eval, report_dir, prefix);
  report.variant = variant;
  report.config_hash =
      sha256_hex(field.hash + '\n' + eval_json(pipeline.config().eval).dump()).substr(0, 16);
  report.seconds = seconds_since(t0);
  return report;
}

json runtime_json(std::span<const EvalReport> reports) {
  json out = json::object();
  for (const auto& r : reports) out[r.variant] = {{"seconds", r.seconds}};
  return out;
}

}  // namespace

EvalReport Pipeline::evaluate(const fs::path& report_dir, const std::string& variant) {
  const EvalInputs inputs = load_eval_inputs(dataset_);
  fs::create_directories(report_dir);
  const EvalReport report = evaluate_variant(*this, inputs, report_dir, variant, "");
  const std::vector<EvalReport> reports{report};
  write_metrics_csv(report_dir / "metrics.csv", reports);
  write_ablation_markdown(report_dir / "ablation.md", reports, config_.eval);
  write_json(report_dir / "config.json", to_json(config_));
  write_json(report_dir / "runtime.json", runtime_json(reports));
  return report;
}

std::vector<EvalReport> run_ablation(const PipelineConfig& config, const fs::path& dataset,
                                     const fs::path& report_dir, std::span<const Variant> variants) {
  require(!variants.empty(), ErrorCode::kInvalidConfig, "ablation needs at least one variant");
  const EvalInputs inputs = load_eval_inputs(dataset);
  fs::create_directories(report_dir);
  std::vector<EvalReport> reports;
  json names = json::array();
  for (Variant v : variants) {
    PipelineConfig cfg = config;
    cfg.ccl = apply_variant(cfg.ccl, v);
    Pipeline pipeline(cfg, dataset);
    reports.push_back(
        evaluate_variant(pipeline, inputs, report_dir, variant_name(v), variant_name(v) + "_"));
    names.push_back(variant_name(v));
  }
  write_metrics_csv(report_dir / "metrics.csv", reports);
  write_ablation_markdown(report_dir / "ablation.md", reports, config.eval);
  json snapshot = to_json(config);
  snapshot["variants"] = names;
  write_json(report_dir / "config.json", snapshot);
  write_json(report_dir / "runtime.json", runtime_json(reports));
  return reports;
}

}  // namespace semsplat
