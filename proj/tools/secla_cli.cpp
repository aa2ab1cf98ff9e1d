// secla: synthesize data, train, align, evaluate, and check gradients.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "secla/alignment.hpp"
#include "secla/errors.hpp"
#include "secla/eval.hpp"
#include "secla/gradcheck.hpp"
#include "secla/io.hpp"
#include "secla/synth.hpp"
#include "secla/training.hpp"

namespace fs = std::filesystem;
using namespace secla;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

struct Run {
  RunManifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void finish(const fs::path& out_dir) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    manifest.duration_seconds = std::chrono::duration<double>(elapsed).count();
    save_manifest(out_dir / "manifest.json", manifest);
  }
};

fs::path prepare_out_dir(const std::string& dir) {
  const fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

struct SynthArgs {
  SynthConfig config;
  std::size_t faces_per_pair = 0;
  std::size_t names_per_pair = 0;
  std::string out_dir;
};

int cmd_synth(SynthArgs& a, const std::vector<std::string>& argv) {
  auto& c = a.config;
  if (a.faces_per_pair) c.min_faces = c.max_faces = a.faces_per_pair;
  if (a.names_per_pair) c.min_names = c.max_names = a.names_per_pair;
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw ValidationError(e.what());
  }
  Run run;
  const auto dir = prepare_out_dir(a.out_dir);
  const auto ds = synth_generate(c);
  save_dataset(dir / "dataset.jsonl", ds);
  run.manifest.command = "synth";
  run.manifest.seed = c.seed;
  run.manifest.argv = argv;
  run.manifest.outputs = {(dir / "dataset.jsonl").string()};
  run.manifest.config = Json{{"pairs", c.num_pairs},           {"identities", c.num_identities},
                             {"min_faces", c.min_faces},       {"max_faces", c.max_faces},
                             {"min_names", c.min_names},       {"max_names", c.max_names},
                             {"sigma", c.sigma},               {"noname_rate", c.noname_rate},
                             {"noface_rate", c.noface_rate},   {"zipf", c.zipf_exponent},
                             {"d_f", c.face_dim},              {"d_n", c.name_dim},
                             {"seed", c.seed}};
  run.finish(dir);
  std::cout << "wrote " << ds.pairs.size() << " pairs to " << (dir / "dataset.jsonl").string() << '\n';
  return 0;
}

struct TrainArgs {
  TrainConfig config;
  std::string data;
  std::string out_dir;
  std::string mode = "secla";
  std::string direction = "both";
  std::string prototype = "matched_face";
  bool no_agreement = false;
  bool no_noname = false;
  bool independent_common = false;
  bool no_fnp = false;
  bool no_fp = false;
  std::size_t easy_max_faces = 1;
  std::size_t easy_max_names = 1;
  bool easy_keep_null = false;
};

int cmd_train(TrainArgs& a, const std::vector<std::string>& argv) {
  Run run;
  auto& c = a.config;
  if (a.no_agreement) c.alpha = 0.0;
  c.use_fn = a.direction != "nf";
  c.use_nf = a.direction != "fn";
  c.add_noname = !a.no_noname;
  c.dims.shared_common = !a.independent_common;
  c.use_fnp = !a.no_fnp;
  c.use_fp = !a.no_fp;
  try {
    c.prototype = prototype_from_string(a.prototype);
    c.validate();
  } catch (const ContractError& e) {
    throw ValidationError(e.what());
  }

  const auto ds = load_dataset(a.data);
  if (ds.pairs.empty()) throw ValidationError("dataset " + a.data + " has no pairs");
  c.dims.face_dim = ds.face_dim;
  c.dims.name_dim = ds.name_dim;
  const auto dir = prepare_out_dir(a.out_dir);

  TrainResult result;
  Json config = train_config_to_json(c);
  config["mode"] = a.mode;
  if (a.mode == "secla") {
    const auto pairs = strip_ground_truth(ds.pairs);
    result = train_secla(pairs, ds.noname_embedding, c);
  } else {
    const auto split = make_easy_split(ds, a.easy_max_faces, a.easy_max_names, !a.easy_keep_null);
    config["easy_max_faces"] = a.easy_max_faces;
    config["easy_max_names"] = a.easy_max_names;
    config["easy_exclude_null"] = !a.easy_keep_null;
    config["easy_pairs"] = split.easy.size();
    if (split.easy.empty()) throw ValidationError("easy subset is empty; relax --easy-max-faces/--easy-max-names");
    const auto easy = strip_ground_truth(split.easy);
    if (a.mode == "pipeline") {
      const auto rest = strip_ground_truth(split.rest);
      result = train_pipeline_heuristic(easy, rest, ds.noname_embedding, c);
    } else {
      const auto all = strip_ground_truth(ds.pairs);
      result = train_secla_b(all, easy, ds.noname_embedding, c);
    }
  }
  save_checkpoint(dir / "checkpoint.json", result.stack, config);
  save_training_log(dir / "train_log.jsonl", result.log);

  run.manifest.command = "train";
  run.manifest.seed = c.seed;
  run.manifest.config = config;
  run.manifest.argv = argv;
  run.manifest.inputs = {a.data};
  run.manifest.outputs = {(dir / "checkpoint.json").string(), (dir / "train_log.jsonl").string()};
  run.finish(dir);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::printf("trained %s: %zu epochs logged, final %s loss %.6f\n", a.mode.c_str(), result.log.size(),
                last.stage.c_str(), last.total);
  }
  return 0;
}

struct AlignArgs {
  std::string checkpoint;
  std::string data;
  std::string out_dir;
  bool no_noface = false;
  bool no_noname = false;
};

int cmd_align(const AlignArgs& a, const std::vector<std::string>& argv) {
  Run run;
  const auto ck = load_checkpoint(a.checkpoint);
  const auto ds = load_dataset(a.data);
  if (ck.stack.dims.face_dim != ds.face_dim || ck.stack.dims.name_dim != ds.name_dim) {
    throw ValidationError("checkpoint expects d_f=" + std::to_string(ck.stack.dims.face_dim) +
                          ", d_n=" + std::to_string(ck.stack.dims.name_dim) + " but dataset has d_f=" +
                          std::to_string(ds.face_dim) + ", d_n=" + std::to_string(ds.name_dim));
  }
  const auto dir = prepare_out_dir(a.out_dir);
  const auto pairs = strip_ground_truth(ds.pairs);
  const AlignOptions options{!a.no_noface, !a.no_noname};
  const auto pred = align_dataset(ck.stack, pairs, ds.noname_embedding, options);
  save_predictions(dir / "predictions.jsonl", pred);
  run.manifest.command = "align";
  run.manifest.config = Json{{"enable_noface", options.enable_noface}, {"add_noname", options.add_noname}};
  run.manifest.argv = argv;
  run.manifest.inputs = {a.checkpoint, a.data};
  run.manifest.outputs = {(dir / "predictions.jsonl").string()};
  run.finish(dir);
  std::cout << "aligned " << pred.size() << " pairs\n";
  return 0;
}

struct EvalArgs {
  std::string predictions;
  std::string data;
  std::string out_dir;
  bool real_links_only = false;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
  Run run;
  const auto pred = load_predictions(a.predictions);
  const auto ds = load_dataset(a.data);
  const auto gt = ground_truth(ds);
  MetricsReport report;
  try {
    report = evaluate(pred, gt, !a.real_links_only);
  } catch (const ContractError& e) {
    throw ValidationError(e.what());
  }
  const auto dir = prepare_out_dir(a.out_dir);
  const Json config{{"include_null", !a.real_links_only}, {"predictions", a.predictions}, {"data", a.data}};
  write_text_file(dir / "metrics.json", metrics_to_json(report, config).dump(2) + "\n");
  run.manifest.command = "eval";
  run.manifest.config = config;
  run.manifest.argv = argv;
  run.manifest.inputs = {a.predictions, a.data};
  run.manifest.outputs = {(dir / "metrics.json").string()};
  run.finish(dir);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::printf("precision %.4f  recall %.4f  f1 %.4f  accuracy %.4f  (correct %zu, found %zu, gt %zu)\n",
              report.prf.precision, report.prf.recall, report.prf.f1, report.accuracy, report.counts.correct,
              report.counts.found, report.counts.gt);
  return 0;
}

int cmd_gradcheck(const GradcheckSuiteOptions& options, bool verbose, const std::string& out_dir,
                  const std::vector<std::string>& argv) {
  Run run;
  const auto report = run_gradcheck_suite(options);
  std::size_t failed = 0;
  for (const auto& c : report.cases) {
    if (!c.passed) ++failed;
    if (verbose || !c.passed) {
      std::printf("%-4s %-22s #%-3zu max_rel_err %.3e  checked %zu  skipped %zu\n", c.passed ? "ok" : "FAIL",
                  c.objective.c_str(), c.instance, c.max_relative_error, c.checked, c.skipped);
    }
  }
  std::printf("gradcheck: %zu cases, %zu failed, max relative error %.3e (tolerance %.1e) -> %s\n",
              report.cases.size(), failed, report.max_relative_error, options.tolerance,
              report.passed ? "PASS" : "FAIL");
  if (!out_dir.empty()) {
    const auto dir = prepare_out_dir(out_dir);
    Json config;
    config["instances"] = options.instances;
    config["tolerance"] = options.tolerance;
    config["h"] = options.h;
    config["inject_bug"] = options.inject_bug;
    Json j;
    j["passed"] = report.passed;
    j["max_relative_error"] = report.max_relative_error;
    j["config"] = config;
    Json cases = Json::array();
    for (const auto& c : report.cases) {
      cases.push_back(Json{{"objective", c.objective}, {"instance", c.instance},
                           {"max_relative_error", c.max_relative_error}, {"checked", c.checked},
                           {"skipped", c.skipped}, {"passed", c.passed}});
    }
    j["cases"] = std::move(cases);
    write_text_file(dir / "gradcheck.json", j.dump(1) + "\n");
    run.manifest.command = "gradcheck";
    run.manifest.config = config;
    run.manifest.seed = options.seed;
    run.manifest.outputs = {(dir / "gradcheck.json").string()};
    run.manifest.argv = argv;
    run.finish(dir);
  }
  return report.passed ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"Weakly supervised face-name alignment"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
  s->add_option("--pairs", synth.config.num_pairs, "Number of image-caption pairs")->capture_default_str();
  s->add_option("--identities", synth.config.num_identities, "Number of identities")->capture_default_str();
  s->add_option("--faces-per-pair", synth.faces_per_pair, "Fix the face count per pair");
  s->add_option("--names-per-pair", synth.names_per_pair, "Fix the caption length per pair");
  s->add_option("--min-faces", synth.config.min_faces)->capture_default_str();
  s->add_option("--max-faces", synth.config.max_faces)->capture_default_str();
  s->add_option("--min-names", synth.config.min_names)->capture_default_str();
  s->add_option("--max-names", synth.config.max_names)->capture_default_str();
  s->add_option("--sigma", synth.config.sigma, "Face noise around identity centres")->capture_default_str();
  s->add_option("--noname-rate", synth.config.noname_rate, "Probability a face is left out of the caption")
      ->capture_default_str();
  s->add_option("--noface-rate", synth.config.noface_rate, "Probability of an extra caption name without a face")
      ->capture_default_str();
  s->add_option("--zipf", synth.config.zipf_exponent, "Identity popularity exponent")->capture_default_str();
  s->add_option("--face-dim", synth.config.face_dim)->capture_default_str();
  s->add_option("--name-dim", synth.config.name_dim)->capture_default_str();
  s->add_option("--seed", synth.config.seed)->capture_default_str();
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a projector stack");
  t->add_option("--data", train.data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  t->add_option("--out-dir", train.out_dir, "Output directory")->required();
  t->add_option("--mode", train.mode)->check(CLI::IsMember({"secla", "pipeline", "secla-b"}))->capture_default_str();
  t->add_option("--epochs", train.config.epochs, "Epochs for --mode secla")->capture_default_str();
  t->add_option("--stage1-epochs", train.config.stage1_epochs)->capture_default_str();
  t->add_option("--stage2-epochs", train.config.stage2_epochs)->capture_default_str();
  t->add_option("--lr", train.config.lr)->capture_default_str();
  t->add_option("--alpha", train.config.alpha, "Agreement loss weight")->capture_default_str();
  t->add_flag("--no-agreement", train.no_agreement, "Set alpha to 0");
  t->add_option("--direction", train.direction)->check(CLI::IsMember({"fn", "nf", "both"}))->capture_default_str();
  t->add_option("--batch-size", train.config.batch_size)->capture_default_str();
  t->add_option("--seed", train.config.seed)->capture_default_str();
  t->add_option("--proj-dim", train.config.dims.proj_dim)->capture_default_str();
  t->add_option("--hidden", train.config.dims.hidden, "Hidden widths of the common projector")
      ->expected(1, -1)
      ->capture_default_str();
  t->add_flag("--independent-common", train.independent_common, "Separate common projector for names");
  t->add_flag("--no-noname", train.no_noname, "Do not append NONAME to captions");
  t->add_option("--prototype", train.prototype)
      ->check(CLI::IsMember({"random_face", "avg_face", "medoid_face", "matched_face"}))
      ->capture_default_str();
  t->add_flag("--add-noface", train.config.add_noface_to_matched, "Append NOFACE to matched face lists");
  t->add_flag("--no-fnp", train.no_fnp, "Drop the matched name-face-prototype loss");
  t->add_flag("--no-fp", train.no_fp, "Drop the face-prototype loss");
  t->add_flag("--freeze-matching", train.config.freeze_matching, "Match known names with the stage-1 model");
  t->add_option("--easy-max-faces", train.easy_max_faces)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--easy-max-names", train.easy_max_names)->check(CLI::PositiveNumber)->capture_default_str();
  t->add_flag("--easy-keep-null", train.easy_keep_null, "Allow pairs with null links in the easy subset");
  t->add_option("--workers", train.config.workers, "Threads for batch forward passes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  AlignArgs align;
  auto* al = app.add_subcommand("align", "Predict links with a trained checkpoint");
  al->add_option("--checkpoint", align.checkpoint)->required()->check(CLI::ExistingFile);
  al->add_option("--data", align.data)->required()->check(CLI::ExistingFile);
  al->add_option("--out-dir", align.out_dir)->required();
  al->add_flag("--no-noface", align.no_noface, "Do not emit NOFACE links");
  al->add_flag("--no-noname", align.no_noname, "Do not offer NONAME as a candidate");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
  e->add_option("--predictions", ev.predictions)->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data)->required()->check(CLI::ExistingFile);
  e->add_option("--out-dir", ev.out_dir)->required();
  e->add_flag("--real-links-only", ev.real_links_only, "Ignore NONAME/NOFACE links");

  GradcheckSuiteOptions gc;
  bool gc_verbose = false;
  std::string gc_out_dir;
  auto* g = app.add_subcommand("gradcheck", "Finite-difference check of all loss gradients");
  g->add_option("--instances", gc.instances, "Random instances per objective family")->capture_default_str();
  g->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();
  g->add_option("--seed", gc.seed)->capture_default_str();
  g->add_flag("--inject-bug", gc.inject_bug, "Corrupt one analytic gradient (harness self-test)");
  g->add_flag("-v,--verbose", gc_verbose, "Print every case");
  g->add_option("--out-dir", gc_out_dir, "Optional directory for a JSON report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*s) return cmd_synth(synth, args);
    if (*t) return cmd_train(train, args);
    if (*al) return cmd_align(align, args);
    if (*e) return cmd_eval(ev, args);
    if (*g) return cmd_gradcheck(gc, gc_verbose, gc_out_dir, args);
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
