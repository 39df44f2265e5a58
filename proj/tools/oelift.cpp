#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "oelift/aggregation.hpp"
#include "oelift/dataio.hpp"
#include "oelift/error.hpp"
#include "oelift/evaluation.hpp"
#include "oelift/lifting.hpp"
#include "oelift/synth.hpp"

namespace {

namespace fs = std::filesystem;
using namespace oelift;

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " not found: " + path.string());
}

// --threads beats OELIFT_THREADS beats auto-detection.
int resolve_threads(std::optional<int> flag) {
  if (flag) {
    if (*flag < 0) throw ConfigError("--threads must be >= 0");
    return *flag;
  }
  if (const char* env = std::getenv("OELIFT_THREADS")) {
    try {
      std::size_t used = 0;
      int v = std::stoi(env, &used);
      if (used != std::string(env).size() || v < 0) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("OELIFT_THREADS is not a valid thread count: \"") + env +
                        "\"");
    }
  }
  return 0;  // auto
}

struct LiftArgs {
  std::string scene;
  std::string out;
  std::optional<double> tau_depth;
  std::optional<int> threads;
  std::uint64_t seed = 0;  // lifting draws no randomness; accepted for pipeline symmetry
  bool deterministic = false;
};

int cmd_lift(const LiftArgs& args) {
  require_file(args.scene, "scene manifest");
  SceneBundle scene = load_scene(args.scene);
  for (const std::string& w : scene.warnings) std::cerr << "warning: " << w << "\n";
  if (args.tau_depth) {
    if (!(*args.tau_depth > 0.0)) throw ConfigError("--tau-depth must be positive");
    scene.lift.tau_depth = *args.tau_depth;
  }
  LiftOptions options;
  options.threads = resolve_threads(args.threads);
  options.deterministic = args.deterministic;
  TokenField field = accumulate_tokens(scene.cloud, scene.frames, scene.lift, options);
  save_field(field, args.out);

  std::size_t touched = field.touched();
  double mean_count = 0.0;
  for (std::uint32_t p : field.touched_points()) mean_count += field.count(p);
  if (touched > 0) mean_count /= static_cast<double>(touched);
  std::cerr << "lift: " << scene.frames.size() << " frames, " << field.num_points()
            << " points, " << touched << " touched, mean contribution count " << mean_count
            << "\n";
  return 0;
}

struct AggregateArgs {
  std::string field;
  std::string proposals;
  std::string scene;
  std::string out;
  std::string method = "weighted";
  double iou_min = 0.25;
  std::uint64_t seed = 0;
  std::optional<double> tau_depth;
  bool deterministic = false;
};

int cmd_aggregate(const AggregateArgs& args) {
  AggregationMethod method = aggregation_method_from_name(args.method);
  require_file(args.proposals, "proposal file");
  ProposalSet proposals = load_proposals(args.proposals);

  std::vector<AggregatedTokens> rows;
  rows.reserve(proposals.proposals.size());
  if (method == AggregationMethod::kMaskwise) {
    if (args.scene.empty()) throw ConfigError("--method maskwise needs --scene");
    require_file(args.scene, "scene manifest");
    SceneBundle scene = load_scene(args.scene);
    for (const std::string& w : scene.warnings) std::cerr << "warning: " << w << "\n";
    if (scene.cloud.size() != proposals.num_points) {
      throw ConfigError("proposal file is for " + std::to_string(proposals.num_points) +
                        " points but the scene cloud has " + std::to_string(scene.cloud.size()));
    }
    MaskwiseConfig config;
    config.lift = scene.lift;
    if (args.tau_depth) {
      if (!(*args.tau_depth > 0.0)) throw ConfigError("--tau-depth must be positive");
      config.lift.tau_depth = *args.tau_depth;
    }
    config.iou_min = args.iou_min;
    for (const Proposal3D& p : proposals.proposals) {
      rows.push_back(aggregate_maskwise(scene.cloud, p, scene.frames, config));
    }
  } else {
    if (args.field.empty()) throw ConfigError("--method " + args.method + " needs --field");
    require_file(args.field, "field file");
    TokenField field = load_field(args.field);
    if (field.num_points() != proposals.num_points) {
      throw ConfigError("proposal file is for " + std::to_string(proposals.num_points) +
                        " points but the field covers " + std::to_string(field.num_points()));
    }
    for (std::size_t i = 0; i < proposals.proposals.size(); ++i) {
      const Proposal3D& p = proposals.proposals[i];
      switch (method) {
        case AggregationMethod::kWeighted: rows.push_back(aggregate_weighted(field, p)); break;
        case AggregationMethod::kMean: rows.push_back(aggregate_mean(field, p)); break;
        case AggregationMethod::kMax: rows.push_back(aggregate_max(field, p)); break;
        case AggregationMethod::kRandom:
          // Sub-seed per proposal so each draw is independent but the
          // whole run replays from one seed.
          rows.push_back(aggregate_random(field, p, args.seed * 0x9e3779b97f4a7c15ull + i));
          break;
        case AggregationMethod::kMaskwise: break;  // handled above
      }
    }
  }

  fs::path blob_path(args.out);
  fs::path sidecar_path = fs::path(args.out).replace_extension(".jsonl");
  save_aggregated(rows, blob_path, sidecar_path);
  std::size_t empty = 0;
  for (const AggregatedTokens& a : rows) empty += a.empty ? 1 : 0;
  std::cerr << "aggregate: " << rows.size() << " proposals via " << args.method << ", " << empty
            << " empty\n";
  return 0;
}

struct EvalArgs {
  std::string predictions;
  std::string gt;
  std::string embeddings;
  std::string out;
  std::string format = "json";
  std::string groups;
  bool fixed_confidence = false;
};

int cmd_eval(const EvalArgs& args) {
  ReportFormat format = report_format_from_name(args.format);
  require_file(args.predictions, "predictions file");
  require_file(args.gt, "ground-truth file");
  require_file(args.embeddings, "embedding table");

  EvalBundle bundle;
  bundle.predictions = load_predictions(args.predictions);
  bundle.ground_truth = load_ground_truth(args.gt);
  bundle.embeddings = load_embeddings(args.embeddings);

  EvalOptions options;
  options.fixed_confidence = args.fixed_confidence;
  if (!args.groups.empty()) {
    require_file(args.groups, "group file");
    options.groups = load_category_groups(args.groups);
  }

  EvalReport report = evaluate(bundle, options);
  if (args.out.empty()) {
    std::cout << render_report(report, format);
  } else {
    write_report(report, args.out, format);
  }
  std::cerr << "eval: " << bundle.predictions.size() << " predictions vs "
            << bundle.ground_truth.size() << " instances, oe " << report.oe << ", ap "
            << report.ap.ap << "\n";
  return 0;
}

struct SynthArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs& args) {
  SceneSpec spec;
  if (args.spec.empty()) {
    spec = default_scene_spec();
  } else {
    require_file(args.spec, "scene spec");
    spec = load_scene_spec(args.spec);
  }
  SynthBundle bundle = generate_bundle(spec, args.seed);
  write_bundle(bundle, args.out);
  std::size_t masks = 0;
  for (const FrameRecord& f : bundle.scene.frames) masks += f.masks.size();
  std::cerr << "synth: " << bundle.scene.cloud.size() << " points, "
            << bundle.scene.frames.size() << " frames, " << masks << " masks -> " << args.out
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lift 2D mask tokens into a 3D token field, aggregate per proposal, evaluate"};
  app.require_subcommand(1);

  LiftArgs lift_args;
  CLI::App* lift = app.add_subcommand("lift", "Accumulate mask tokens onto scene points");
  lift->add_option("--scene", lift_args.scene, "scene manifest path")->required();
  lift->add_option("--out", lift_args.out, "output field file")->required();
  lift->add_option("--tau-depth", lift_args.tau_depth, "depth test tolerance in meters");
  lift->add_option("--threads", lift_args.threads, "worker threads (0 = auto)");
  lift->add_option("--seed", lift_args.seed, "accepted for pipeline symmetry");
  lift->add_flag("--deterministic", lift_args.deterministic,
                 "process frames and masks in canonical id order");

  AggregateArgs agg_args;
  CLI::App* agg = app.add_subcommand("aggregate", "Reduce the field to one token matrix per proposal");
  agg->add_option("--field", agg_args.field, "field file from lift");
  agg->add_option("--proposals", agg_args.proposals, "proposal file")->required();
  agg->add_option("--scene", agg_args.scene, "scene manifest (maskwise only)");
  agg->add_option("--out", agg_args.out, "output token blob (sidecar gets .jsonl)")->required();
  agg->add_option("--method", agg_args.method, "weighted|mean|max|random|maskwise");
  agg->add_option("--iou-min", agg_args.iou_min, "maskwise: minimum footprint IoU");
  agg->add_option("--seed", agg_args.seed, "random method seed");
  agg->add_option("--tau-depth", agg_args.tau_depth, "maskwise: depth test tolerance");
  agg->add_flag("--deterministic", agg_args.deterministic, "accepted for pipeline symmetry");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--predictions", eval_args.predictions, "predictions jsonl")->required();
  eval->add_option("--gt", eval_args.gt, "ground-truth jsonl")->required();
  eval->add_option("--embeddings", eval_args.embeddings, "label embedding jsonl")->required();
  eval->add_option("--out", eval_args.out, "report path (default: stdout)");
  eval->add_option("--format", eval_args.format, "json|tsv");
  eval->add_option("--groups", eval_args.groups, "category group json");
  eval->add_flag("--fixed-confidence", eval_args.fixed_confidence,
                 "replace all confidences with 1.0");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene bundle");
  synth->add_option("--spec", synth_args.spec, "scene spec file (default: built-in demo scene)");
  synth->add_option("--out", synth_args.out, "output directory")->required();
  synth->add_option("--seed", synth_args.seed, "generation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (lift->parsed()) return cmd_lift(lift_args);
    if (agg->parsed()) return cmd_aggregate(agg_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (synth->parsed()) return cmd_synth(synth_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
