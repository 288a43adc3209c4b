// geomask: command-line front end for the alignment and masking pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include <CLI11.hpp>

#include "geomask/augment.hpp"
#include "geomask/config.hpp"
#include "geomask/error.hpp"
#include "geomask/evaluate.hpp"
#include "geomask/image_io.hpp"
#include "geomask/labels.hpp"
#include "geomask/phantom.hpp"
#include "geomask/pipeline.hpp"
#include "geomask/serve.hpp"
#include "geomask/train.hpp"

namespace fs = std::filesystem;
using namespace geomask;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  int canvas = 0;  // 0: take pipeline.canvas
  std::string out = "out";
};

Config load_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config() : Config::load(g.config_path);
  c.apply_env();
  if (g.seed_set) {
    c.set("aug.seed", std::to_string(g.seed));
    c.set("train.seed", std::to_string(g.seed));
  }
  return c;
}

int canvas_of(const Globals& g, const Config& c) {
  if (g.canvas > 0) return g.canvas;
  const auto n = c.get_int("pipeline.canvas", 64);
  if (n <= 0) throw Error(ErrorKind::InvalidConfig, "pipeline.canvas must be positive");
  return static_cast<int>(n);
}

int workers_of(int flag, const Config& c) {
  if (flag > 0) return flag;
  const auto n = c.get_int("pipeline.workers", 1);
  if (n <= 0) throw Error(ErrorKind::InvalidConfig, "pipeline.workers must be positive");
  return static_cast<int>(n);
}

struct Corpus {
  std::vector<ManifestEntry> manifest;
  LabelImport labels;
};

Corpus read_corpus(const fs::path& dir) {
  return {read_image_manifest(dir / "manifest.csv"), import_labels(dir / "labels.jsonl")};
}

std::vector<ManifestEntry> usable_entries(const std::vector<ManifestEntry>& entries) {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split != "reserved" && e.view == "frontal") out.push_back(e);
  return out;
}

void print_summary(const char* what, const BatchSummary& s) {
  std::printf("%s: %zu inputs, %zu written, %zu failed, %.2f s (%.1f images/s)\n", what, s.inputs, s.written.size(),
              s.failures.size(), s.seconds, s.seconds > 0 ? static_cast<double>(s.written.size()) / s.seconds : 0.0);
  for (const auto& f : s.failures) std::printf("  failed %s: %s\n", f.id.c_str(), f.error.c_str());
}

std::map<std::string, std::string> merged_meta(const NetConfig& net, const TrainConfig& train, const AugmentConfig& aug) {
  std::map<std::string, std::string> kv = train.to_meta();
  for (const auto& [k, v] : net.to_meta()) kv[k] = v;
  kv["aug.seed"] = std::to_string(aug.seed);
  kv["aug.multiplicity"] = std::to_string(aug.multiplicity);
  kv["aug.rot_deg"] = std::to_string(aug.rot_deg);
  kv["aug.scale_lo"] = std::to_string(aug.scale_lo);
  kv["aug.scale_hi"] = std::to_string(aug.scale_hi);
  kv["aug.trans_frac"] = std::to_string(aug.trans_frac);
  return kv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric alignment and annotation masking of chest radiographs"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; }, "Seed for every random stream");
  app.add_option("--config", g.config_path, "Flat key = value config file (GEOMASK_* env overrides)");
  app.add_option("--canvas", g.canvas, "Output canvas side in pixels")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory or file");

  // phantoms
  auto* phantoms = app.add_subcommand("phantoms", "Generate a synthetic labeled corpus");
  std::size_t count = 100;
  phantoms->add_option("--count", count, "Number of phantoms")->check(CLI::PositiveNumber);
  phantoms->callback([&] {
    write_phantom_corpus(generate_phantoms(count, g.seed, canvas_of(g, load_config(g))), g.out);
    std::printf("wrote %zu phantoms to %s\n", count, g.out.c_str());
  });

  // import-labels
  auto* import = app.add_subcommand("import-labels", "Validate a label file and write it normalized");
  std::string labels_path, reserved_path, manifest_path;
  import->add_option("labels", labels_path, "Label JSONL file")->required()->check(CLI::ExistingFile);
  import->add_option("--manifest", manifest_path, "Manifest to partition with --reserved");
  import->add_option("--reserved", reserved_path, "File of reserved image ids, one per line");
  import->callback([&] {
    const LabelImport li = import_labels(labels_path);
    std::printf("%zu usable, %zu excluded\n", li.usable.size(), li.excluded.size());
    fs::create_directories(g.out);
    write_labels(li.usable, fs::path(g.out) / "labels.usable.jsonl");
    write_labels(li.excluded, fs::path(g.out) / "labels.excluded.jsonl");
    if (!manifest_path.empty()) {
      auto entries = read_image_manifest(manifest_path);
      if (!reserved_path.empty()) apply_reserved(entries, read_id_list(reserved_path));
      check_partition({entries});
      write_image_manifest(entries, fs::path(g.out) / "manifest.csv");
    }
  });

  // augment
  auto* augment = app.add_subcommand("augment", "Materialize one epoch of augmented samples");
  std::string corpus_dir;
  std::uint64_t epoch = 0;
  augment->add_option("--corpus", corpus_dir, "Directory with manifest.csv and labels.jsonl")->required();
  augment->add_option("--epoch", epoch, "Epoch whose augmentations to write");
  augment->callback([&] {
    const Config c = load_config(g);
    const Corpus corpus = read_corpus(corpus_dir);
    auto sources = std::make_shared<const std::vector<LabeledSource>>(
        load_labeled_sources(usable_entries(corpus.manifest), corpus_dir, corpus.labels.usable));
    const AugmentedDataset data(sources, augment_config(c));
    std::printf("wrote %zu samples\n", data.materialize(g.out, epoch));
  });

  // train
  auto* train = app.add_subcommand("train", "Train the network on a labeled corpus");
  train->add_option("--corpus", corpus_dir, "Directory with manifest.csv and labels.jsonl")->required();
  train->callback([&] {
    const Config c = load_config(g);
    const Corpus corpus = read_corpus(corpus_dir);
    NetConfig net = net_config(c);
    AugmentConfig aug = augment_config(c);
    TrainConfig tc = train_config(c);
    tc.checkpoint_dir = g.out;
    auto sources = std::make_shared<const std::vector<LabeledSource>>(
        load_labeled_sources(usable_entries(corpus.manifest), corpus_dir, corpus.labels.usable));
    const AugmentedDataset data(sources, aug);
    YNet<float> model(net, static_cast<std::uint64_t>(c.get_int("net.init_seed", static_cast<long long>(tc.seed))));
    if (!net.pretrained_encoder_path.empty()) load_pretrained_encoder(model, net.pretrained_encoder_path);
    std::printf("training on %zu sources x %d replicas, %zu parameters\n", sources->size(), aug.multiplicity,
                model.parameter_count());
    const LossReport report = fit(model, data, tc, [](const EpochLosses& e) {
      std::printf("epoch %3d lr %.2e train %.5f val %.5f (cls %.5f seg %.5f) %.1f s\n", e.epoch, e.lr, e.train.total,
                  e.val.total, e.val.cls, e.val.seg, e.seconds);
      std::fflush(stdout);
    });
    const fs::path final_path = fs::path(g.out) / "model.gmw";
    save_checkpoint<float>(model, nullptr, static_cast<int>(report.curves.size()),
                           config_hash(merged_meta(net, tc, aug)), final_path);
    report.write_csv(fs::path(g.out) / "loss_curves.csv");
    std::printf("initial val %.5f, final checkpoint %s (%s)\n", report.initial_val.total, final_path.c_str(),
                file_hash(final_path).c_str());
  });

  // preprocess
  auto* preprocess = app.add_subcommand("preprocess", "Align and mask every image of a corpus");
  std::string checkpoint;
  int workers = 0;
  preprocess->add_option("--checkpoint", checkpoint, "Trained model")->required()->check(CLI::ExistingFile);
  preprocess->add_option("--corpus", corpus_dir, "Directory with manifest.csv")->required();
  preprocess->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  preprocess->callback([&] {
    const Config c = load_config(g);
    const YNet<float> model = load_model(checkpoint);
    PreprocessOptions opt;
    opt.canvas = canvas_of(g, c);
    opt.workers = workers_of(workers, c);
    opt.checkpoint_hash = file_hash(checkpoint);
    opt.config_hash = config_hash(c.values());
    const auto entries = usable_entries(read_image_manifest(fs::path(corpus_dir) / "manifest.csv"));
    print_summary("preprocess", preprocess_batch(model, entries, corpus_dir, g.out, opt));
  });

  // controls
  auto* controls = app.add_subcommand("controls", "Center-crop controls for blinded comparison");
  controls->add_option("--corpus", corpus_dir, "Directory with manifest.csv")->required();
  controls->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  controls->callback([&] {
    const auto entries = usable_entries(read_image_manifest(fs::path(corpus_dir) / "manifest.csv"));
    const Config c = load_config(g);
    print_summary("controls", make_controls(entries, corpus_dir, g.out, canvas_of(g, c), workers_of(workers, c)));
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Grade preprocessed outputs and controls against labels");
  std::string pred_dir;
  evaluate->add_option("--corpus", corpus_dir, "Labeled corpus that was preprocessed")->required();
  evaluate->add_option("--predictions", pred_dir, "Output directory of `preprocess`")->required();
  evaluate->callback([&] {
    const Config c = load_config(g);
    const GeometryRules geo = geometry_rules(c);
    const MaskRules mr = mask_rules(c);
    const Corpus corpus = read_corpus(corpus_dir);
    std::map<std::string, const ManifestEntry*> paths;
    for (const auto& e : corpus.manifest) paths[e.image_id] = &e;
    std::map<std::string, const LabelRecord*> truth;
    for (const auto& r : corpus.labels.usable) truth[r.image_id] = &r;
    std::vector<ImageVerdict> verdicts;
    for (const auto& p : read_predictions_csv(fs::path(pred_dir) / "predictions.csv", fs::path(pred_dir) / "masks")) {
      auto t = truth.find(p.id);
      if (t == truth.end()) continue;
      const GrayImage src = read_image(fs::path(corpus_dir) / paths.at(p.id)->path);
      const GradingInputs in{t->second, src.width(), src.height()};
      verdicts.push_back(grade_experimental(in, p, canvas_of(g, c), geo, mr));
      verdicts.push_back(grade_control(in, canvas_of(g, c), geo, mr));
    }
    fs::create_directories(g.out);
    write_verdicts_csv(verdicts, fs::path(g.out) / "verdicts.csv");
    const std::string summary = cohort_report(verdicts).summary();
    std::ofstream(fs::path(g.out) / "report.txt") << summary;
    std::cout << summary;
  });

  // chisq
  auto* chisq = app.add_subcommand("chisq", "Pearson chi-square of a 2x2 table");
  std::vector<std::int64_t> cells;
  chisq->add_option("cells", cells, "a b c d: control acc/unacc, experimental acc/unacc")->expected(4)->required();
  chisq->callback([&] {
    const ChiSquare r = chisq_2x2({cells[0], cells[1], cells[2], cells[3]});
    std::printf("statistic %.6f\np %.6e\n", r.statistic, r.p);
  });

  // report
  auto* report = app.add_subcommand("report", "Cohort report from a verdict CSV (automatic or human)");
  std::string verdicts_path;
  report->add_option("verdicts", verdicts_path, "Verdict CSV")->required()->check(CLI::ExistingFile);
  report->callback([&] { std::cout << cohort_report(read_verdicts_csv(verdicts_path)).summary(); });

  // serve-ui
  auto* serve = app.add_subcommand("serve-ui", "Serve a session directory to the browser annotator");
  std::string root = ".", host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--root", root, "Session directory")->check(CLI::ExistingDirectory);
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->callback([&] {
    UiServer server(root);
    const int bound = server.bind(host, port);
    std::printf("serving %s on http://%s:%d\n", root.c_str(), host.c_str(), bound);
    std::fflush(stdout);
    server.listen();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "geomask: %s\n", e.what());
    return 2;
  }
  return 0;
}
