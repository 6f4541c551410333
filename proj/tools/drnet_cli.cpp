// drnet command-line entry point. Logs go to stderr as key=value lines;
// results are written to files under the output directory.

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "drnet/checkpoint.hpp"
#include "drnet/config.hpp"
#include "drnet/error.hpp"
#include "drnet/gradient_suite.hpp"
#include "drnet/simd.hpp"
#include "drnet/synthetic.hpp"

namespace fs = std::filesystem;
using namespace drnet;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data;
  std::string out;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "job config file (key = value)");
  app->add_option("--seed", f.seed, "random seed; overrides the config");
  app->add_option("--data", f.data, "dataset or input directory; overrides data.root");
  app->add_option("--out", f.out, "output directory; overrides output.dir");
  app->add_option("--threads", f.threads, "worker threads; overrides threads");
}

void log(const std::string& line) { std::cerr << line << '\n'; }

JobConfig resolve(const CommonFlags& f, const std::string& command) {
  JobConfig c = f.config.empty() ? JobConfig{} : load_job_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (!f.data.empty()) c.data_root = f.data;
  if (!f.out.empty()) c.output_dir = f.out;
  if (f.threads) c.threads = *f.threads;
  c.finalize();
  log("command=" + command);
  log(fmt::format("seed={}", c.seed));
  log(fmt::format("simd={}", simd::backend_name(simd::active_backend())));
  log_config(std::cerr, c);
  return c;
}

DatasetManifest manifest_for(const JobConfig& c) {
  if (c.data_root.empty()) throw ConfigError("no dataset given; set data.root or pass --data");
  if (!c.data_manifest.empty()) {
    const fs::path csv = c.data_manifest.is_absolute() ? c.data_manifest : c.data_root / c.data_manifest;
    return load_manifest_csv(csv, c.data_root);
  }
  return load_manifest(c.data_root);
}

fs::path prepare_out(const JobConfig& c) {
  fs::create_directories(c.output_dir);
  return c.output_dir;
}

std::vector<NormalizedImage> resized(std::vector<NormalizedImage> images, std::size_t size) {
  for (auto& img : images)
    if (img.width != size || img.height != size) img = resize(img, size, size);
  return images;
}

int cmd_preprocess(const CommonFlags& f) {
  const JobConfig c = resolve(f, "preprocess");
  if (c.data_root.empty()) throw ConfigError("preprocess needs an input directory (--data)");
  if (!fs::is_directory(c.data_root)) throw DataError("input directory " + c.data_root.string() + " does not exist");
  const fs::path out = prepare_out(c);
  std::vector<fs::path> inputs;
  for (const auto& e : fs::recursive_directory_iterator(c.data_root))
    if (e.is_regular_file() && is_image_file(e.path())) inputs.push_back(e.path());
  std::sort(inputs.begin(), inputs.end());
  std::vector<std::string> errors(inputs.size());
  parallel_for(inputs.size(), c.threads, [&](std::size_t i) {
    try {
      const fs::path rel = fs::relative(inputs[i], c.data_root);
      fs::path target = out / rel;
      target.replace_extension(".png");
      const RasterImage img = denormalize(preprocess_chain(read_image(inputs[i]), c.preprocess));
      fs::create_directories(target.parent_path());
      write_image(target, img);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  std::size_t failures = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (!errors[i].empty()) {
      ++failures;
      log(fmt::format("warning file={} error=\"{}\"", inputs[i].string(), errors[i]));
    }
  log(fmt::format("preprocess count={} written={} failures={}", inputs.size(), inputs.size() - failures, failures));
  if (inputs.empty() || failures == inputs.size()) return kData;
  return kOk;
}

int cmd_augment_preview(const CommonFlags& f, const std::string& image, std::size_t count) {
  const JobConfig c = resolve(f, "augment-preview");
  const fs::path out = prepare_out(c);
  const NormalizedImage base = preprocess_chain(read_image(image), c.preprocess);
  write_image(out / "original.png", denormalize(base));
  for (std::size_t i = 0; i < count; ++i) {
    RngStream rng = augment_stream(c.seed, 0, i);
    write_image(out / fmt::format("augmented_{:03}.png", i), denormalize(augment(base, c.augment, rng)));
  }
  log(fmt::format("augment-preview written={}", count));
  return kOk;
}

std::vector<NormalizedImage> gan_training_images(const JobConfig& c, int class_filter) {
  const DatasetManifest m = manifest_for(c);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (class_filter < 0 || static_cast<int>(m.records[i].label) == class_filter) idx.push_back(i);
  if (idx.empty()) throw DataError("no training images for the requested class");
  return resized(load_images(m, idx, c.preprocess, c.threads).images, c.gan.image_size);
}

int cmd_gan_train(const CommonFlags& f, int class_filter) {
  JobConfig c = resolve(f, "gan-train");
  const fs::path out = prepare_out(c);
  const auto images = gan_training_images(c, class_filter);
  log(fmt::format("gan images={} image_size={}", images.size(), c.gan.image_size));
  GanModel model(c.gan);
  const GanHistory history = train_gan(model, images, [&](const GanEpochSummary& s, const GanModel& m) {
    const NetworkParams<float> ckpt = gan_checkpoint(m, s);
    save_checkpoint(out / fmt::format("gan_epoch_{:03}.ckpt", s.epoch), ckpt);
    save_checkpoint(out / "gan_latest.ckpt", ckpt);
    log(fmt::format("gan epoch={} step={} d_loss_avg={:.6f} g_loss_avg={:.6f}", s.epoch, m.step, s.d_loss_avg,
                    s.g_loss_avg));
  });
  std::ofstream csv(out / "gan_losses.csv");
  csv << "step,d_loss,g_loss\n";
  for (std::size_t i = 0; i < history.d_losses.size(); ++i)
    csv << fmt::format("{},{},{}\n", i, history.d_losses[i], history.g_losses[i]);
  if (!csv) throw DataError("failed writing gan_losses.csv");
  return kOk;
}

GanModel load_gan(const JobConfig& c, const std::string& model) {
  if (model.empty()) throw ConfigError("--model is required");
  return gan_from_checkpoint(load_checkpoint(model), c.gan);
}

int cmd_gan_sample(const CommonFlags& f, const std::string& model_path, std::size_t count) {
  const JobConfig c = resolve(f, "gan-sample");
  const fs::path out = prepare_out(c);
  const GanModel model = load_gan(c, model_path);
  const auto images = generate_images(model.generator, model.config, count, c.seed);
  for (std::size_t i = 0; i < images.size(); ++i)
    write_image(out / fmt::format("sample_{:04}.png", i), denormalize(images[i]));
  log(fmt::format("gan-sample written={}", images.size()));
  return kOk;
}

int cmd_gan_hist(const CommonFlags& f, const std::string& model_path, std::size_t count, int class_filter) {
  const JobConfig c = resolve(f, "gan-hist");
  const fs::path out = prepare_out(c);
  const GanModel model = load_gan(c, model_path);
  JobConfig data_cfg = c;
  data_cfg.gan.image_size = model.config.image_size;
  const auto real = gan_training_images(data_cfg, class_filter);
  const auto fake = generate_images(model.generator, model.config, count ? count : real.size(), c.seed);
  const auto h_real = intensity_distribution(real), h_fake = intensity_distribution(fake);
  write_histogram_csv(out / "intensity_histogram.csv", h_real, h_fake);
  log(fmt::format("gan-hist real={} fake={} js_divergence={:.6f}", real.size(), fake.size(),
                  distribution_divergence(h_real, h_fake)));
  return kOk;
}

struct SplitData {
  DatasetManifest manifest;
  SplitAssignment split;
};

SplitData split_for(const JobConfig& c) {
  SplitData d{manifest_for(c), {}};
  d.split = stratified_split(d.manifest, c.split, c.seed);
  log(fmt::format("split train={} val={} test={}", d.split.count(Subset::Train), d.split.count(Subset::Val),
                  d.split.count(Subset::Test)));
  return d;
}

void write_evaluation(const fs::path& out, const ConfusionMatrix& cm) {
  const ClassReport report = classification_report(cm);
  write_confusion_csv(out / "confusion.csv", cm);
  write_report_csv(out / "report.csv", report);
  std::ofstream txt(out / "report.txt");
  txt << format_report(report) << '\n' << format_confusion(cm);
  if (!txt) throw DataError("failed writing report.txt");
  log(fmt::format("evaluate total={} accuracy={:.6f}", report.total, report.accuracy));
}

void inject_synthetic(const JobConfig& c, LabeledSet& train) {
  std::array<std::size_t, kNumClasses> counts{};
  for (DrClass l : train.labels) ++counts[static_cast<std::size_t>(l)];
  const auto quota = synthetic_quota(counts, c.synthetic_target_fraction);
  for (std::size_t k = 1; k < kNumClasses; ++k) {
    if (c.synthetic[k].empty() || quota[k] == 0) continue;
    const GanModel gan = gan_from_checkpoint(load_checkpoint(c.synthetic[k]), c.gan);
    auto images = resized(generate_images(gan.generator, gan.config, quota[k], RngStream::mix({c.seed, k})),
                          c.classifier.input_size);
    for (auto& img : images) {
      train.images.push_back(std::move(img));
      train.labels.push_back(static_cast<DrClass>(k));
    }
    log(fmt::format("synthetic class={} added={}", class_name(static_cast<DrClass>(k)), quota[k]));
  }
}

int cmd_train(const CommonFlags& f) {
  JobConfig c = resolve(f, "train");
  const fs::path out = prepare_out(c);
  const SplitData d = split_for(c);
  LabeledSet train = load_images(d.manifest, d.split.indices(Subset::Train), c.preprocess, c.threads);
  const LabeledSet val = load_images(d.manifest, d.split.indices(Subset::Val), c.preprocess, c.threads);
  inject_synthetic(c, train);
  c.train.on_epoch = [](const EpochRecord& e) {
    log(fmt::format("epoch={} train_loss={:.6f} val_loss={:.6f} val_accuracy={:.4f} lr={} seconds={:.2f}", e.epoch,
                    e.train_loss, e.val_loss, e.val_accuracy, e.lr, e.seconds));
  };
  const TrainResult result = train_classifier(c.classifier, c.train, train, val);
  export_history(out / "history.csv", result.history);
  save_checkpoint(out / "model.ckpt", classifier_checkpoint(result.params, c.classifier));
  log(fmt::format("train epochs={} best_epoch={} best_val_loss={:.6f} stopped_early={}", result.history.epochs.size(),
                  result.history.best_epoch, result.history.best_val_loss, result.history.stopped_early));
  const LabeledSet test = load_images(d.manifest, d.split.indices(Subset::Test), c.preprocess, c.threads);
  write_evaluation(out, evaluate(result.params, c.classifier, test));
  return kOk;
}

int cmd_evaluate(const CommonFlags& f, const std::string& model_path) {
  JobConfig c = resolve(f, "evaluate");
  if (model_path.empty()) throw ConfigError("--model is required");
  const fs::path out = prepare_out(c);
  const NetworkParams<float> params = load_checkpoint(model_path);
  const ClassifierConfig arch = classifier_config_from_checkpoint(params);
  if (arch.input_size != c.preprocess.output_size)
    throw ShapeError(fmt::format("model expects {0}x{0} input but preprocess.output_size is {1}", arch.input_size,
                                 c.preprocess.output_size));
  const SplitData d = split_for(c);
  const LabeledSet test = load_images(d.manifest, d.split.indices(Subset::Test), c.preprocess, c.threads);
  write_evaluation(out, evaluate(params, arch, test));
  return kOk;
}

int cmd_report(const CommonFlags& f, const std::string& confusion) {
  const JobConfig c = resolve(f, "report");
  if (confusion.empty()) throw ConfigError("--confusion is required");
  const fs::path out = prepare_out(c);
  const ConfusionMatrix cm = read_confusion_csv(confusion);
  const ClassReport report = classification_report(cm);
  write_report_csv(out / "report.csv", report);
  std::ofstream txt(out / "report.txt");
  txt << format_report(report);
  std::cout << format_report(report);
  log(fmt::format("report total={} accuracy={:.6f}", report.total, report.accuracy));
  return kOk;
}

int cmd_stats(const CommonFlags& f) {
  const JobConfig c = resolve(f, "stats");
  const ClassStats s = class_stats(manifest_for(c));
  for (std::size_t k = 0; k < kNumClasses; ++k)
    std::cout << fmt::format("{:<14}{:>8}{:>10.4f}\n", class_name(static_cast<DrClass>(k)), s.counts[k], s.fractions[k]);
  std::cout << fmt::format("{:<14}{:>8}{:>10.4f}\n", "total", s.total, 1.0);
  return kOk;
}

int cmd_gradcheck(const CommonFlags& f, unsigned seeds, bool quick) {
  const JobConfig c = resolve(f, "gradcheck");
  GradientSuiteOptions o;
  o.seeds = seeds;
  o.base_seed = c.seed;
  o.include_classifier = !quick;
  bool all = true;
  for (const auto& name : gradient_case_names(o.include_classifier)) {
    const GradientCaseResult r = run_gradient_case(name, o);
    all = all && r.passed;
    std::cout << fmt::format("case={} seeds={} checked={} excluded={} max_rel_error={:.3e} {}\n", r.name, r.seeds,
                             r.checked, r.excluded, r.max_relative_error, r.passed ? "PASS" : "FAIL");
  }
  std::cout << (all ? "gradcheck PASS\n" : "gradcheck FAIL\n");
  return all ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drnet: diabetic-retinopathy grading pipeline"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string model, image, confusion;
  std::size_t count = 0;
  int class_filter = -1;
  unsigned seeds = 10;
  bool quick = false;

  auto* preprocess = app.add_subcommand("preprocess", "preprocess every image under --data into --out");
  auto* augment_preview = app.add_subcommand("augment-preview", "write augmented variants of one image");
  auto* gan_train = app.add_subcommand("gan-train", "train the DCGAN on dataset images");
  auto* gan_sample = app.add_subcommand("gan-sample", "write images from a GAN checkpoint");
  auto* gan_hist = app.add_subcommand("gan-hist", "compare real and generated intensity distributions");
  auto* train = app.add_subcommand("train", "train the classifier and evaluate it on the test split");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a classifier checkpoint on the test split");
  auto* report = app.add_subcommand("report", "classification report from a confusion-matrix CSV");
  auto* stats = app.add_subcommand("stats", "class counts and fractions of a dataset");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  for (auto* sub : {preprocess, augment_preview, gan_train, gan_sample, gan_hist, train, evaluate, report, stats, gradcheck})
    add_common(sub, flags);
  augment_preview->add_option("--image", image, "input image")->required();
  augment_preview->add_option("--count", count, "number of variants")->default_val(8);
  gan_train->add_option("--class", class_filter, "train on one class (0-4) only")->check(CLI::Range(0, 4));
  gan_sample->add_option("--model", model, "GAN checkpoint")->required();
  gan_sample->add_option("--count", count, "number of images")->default_val(16);
  gan_hist->add_option("--model", model, "GAN checkpoint")->required();
  gan_hist->add_option("--count", count, "generated images (0 = as many as real)")->default_val(0);
  gan_hist->add_option("--class", class_filter, "real images of one class (0-4) only")->check(CLI::Range(0, 4));
  evaluate->add_option("--model", model, "classifier checkpoint")->required();
  report->add_option("--confusion", confusion, "confusion-matrix CSV")->required();
  gradcheck->add_option("--seeds", seeds, "random seeds per case")->default_val(10);
  gradcheck->add_flag("--quick", quick, "skip the classifier cases");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*preprocess) return cmd_preprocess(flags);
    if (*augment_preview) return cmd_augment_preview(flags, image, count);
    if (*gan_train) return cmd_gan_train(flags, class_filter);
    if (*gan_sample) return cmd_gan_sample(flags, model, count);
    if (*gan_hist) return cmd_gan_hist(flags, model, count, class_filter);
    if (*train) return cmd_train(flags);
    if (*evaluate) return cmd_evaluate(flags, model);
    if (*report) return cmd_report(flags, confusion);
    if (*stats) return cmd_stats(flags);
    if (*gradcheck) return cmd_gradcheck(flags, seeds, quick);
  } catch (const ConfigError& e) {
    log(fmt::format("error kind=config message=\"{}\"", e.what()));
    return kUsage;
  } catch (const ShapeError& e) {
    log(fmt::format("error kind=data message=\"{}\"", e.what()));
    return kData;
  } catch (const NumericError& e) {
    log(fmt::format("error kind=numeric message=\"{}\"", e.what()));
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    log(fmt::format("error kind=usage message=\"{}\"", e.what()));
    return kUsage;
  } catch (const std::exception& e) {
    log(fmt::format("error kind=data message=\"{}\"", e.what()));
    return kData;
  }
  return kUsage;
}
