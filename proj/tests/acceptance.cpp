// Acceptance suite: one PASS/FAIL line per criterion.
//   drnet_acceptance                 runs every criterion
//   drnet_acceptance --criterion N   runs criterion N only

#include <fmt/format.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>

#include "drnet/checkpoint.hpp"
#include "drnet/dataset.hpp"
#include "drnet/dcgan.hpp"
#include "drnet/gradient_suite.hpp"
#include "drnet/imageproc.hpp"
#include "drnet/metrics.hpp"
#include "drnet/optim.hpp"
#include "drnet/rng.hpp"
#include "drnet/synthetic.hpp"
#include "drnet/training.hpp"

using namespace drnet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// -- 1: metrics against the reference report --------------------------------

// `printed` has d decimals; accept the value rounded or truncated to d decimals.
bool matches_printed(double value, const std::string& printed) {
  const auto dot = printed.find('.');
  const int d = dot == std::string::npos ? 0 : static_cast<int>(printed.size() - dot - 1);
  const double scale = std::pow(10.0, d);
  const double target = std::stod(printed);
  return std::abs(std::round(value * scale) / scale - target) < 0.5 / scale / 10 ||
         std::abs(std::floor(value * scale) / scale - target) < 0.5 / scale / 10;
}

Outcome criterion_metrics() {
  const auto t0 = Clock::now();
  // rows and columns in the reference order NoDR, Moderate, Mild, Proliferative, Severe
  const DrClass order[] = {DrClass::NoDR, DrClass::Moderate, DrClass::Mild, DrClass::Proliferative, DrClass::Severe};
  const int rows[5][5] = {{2560, 1, 0, 1, 0}, {2, 500, 15, 6, 3}, {1, 5, 255, 1, 1}, {0, 3, 0, 72, 0}, {1, 2, 0, 1, 83}};
  ConfusionMatrix cm;
  for (int t = 0; t < 5; ++t)
    for (int p = 0; p < 5; ++p) cm.add(order[t], order[p], rows[t][p]);
  const ClassReport r = classification_report(cm);

  struct Expect {
    DrClass c;
    const char* p;
    const char* r;
    const char* f;
  };
  const Expect table[] = {{DrClass::NoDR, "0.998", "0.999", "0.998"},
                          {DrClass::Moderate, "0.978", "0.950", "0.964"},
                          {DrClass::Mild, "0.94", "0.97", "0.955"},
                          {DrClass::Severe, "0.954", "0.954", "0.954"},
                          {DrClass::Proliferative, "0.88", "0.960", "0.918"}};
  std::string failures;
  auto check = [&](const std::string& what, double v, const std::string& printed) {
    if (!matches_printed(v, printed)) failures += fmt::format(" {}={:.5f}(printed {})", what, v, printed);
  };
  for (const auto& e : table) {
    const ClassMetrics& m = r[e.c];
    const std::string name(class_name(e.c));
    check(name + ".precision", m.precision, e.p);
    check(name + ".recall", m.recall, e.r);
    check(name + ".f1", m.f1, e.f);
  }
  check("accuracy", r.accuracy, "0.987");
  const double secs = seconds_since(t0);
  if (secs >= 1.0) failures += fmt::format(" runtime={:.2f}s", secs);
  return {failures.empty(), failures.empty() ? fmt::format("all 16 values match at printed precision ({:.3f} s)", secs)
                                             : "mismatch:" + failures};
}

// -- 2: gradient suite -------------------------------------------------------

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  GradientSuiteOptions o;
  o.seeds = 10;
  o.tolerance = 1e-4;
  const auto results = run_gradient_suite(o);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string failures;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_relative_error);
    if (!r.passed || r.seeds < 10 || !(r.max_relative_error < 1e-4))
      failures += fmt::format(" {}={:.2e}", r.name, r.max_relative_error);
  }
  if (secs >= 300.0) failures += fmt::format(" runtime={:.1f}s", secs);
  return {failures.empty(), fmt::format("{} cases x 10 seeds, worst relative error {:.2e}, {:.1f} s{}", results.size(),
                                        worst, secs, failures.empty() ? "" : ";" + failures)};
}

// -- 3 and 8: desk-scale classifier ------------------------------------------

struct DeskData {
  LabeledSet train, val, test;
};

LabeledSet subset(const LabeledSet& all, const std::vector<std::size_t>& idx) {
  LabeledSet s;
  for (std::size_t i : idx) {
    s.images.push_back(all.images[i]);
    s.labels.push_back(all.labels[i]);
  }
  return s;
}

DeskData desk_data() {
  ShapesOptions o;
  o.count = 2500;
  o.size = 32;
  o.seed = 7;
  const LabeledSet all = make_shapes_dataset(o);
  const SplitAssignment split = stratified_split(all.labels, {}, 7);
  return {subset(all, split.indices(Subset::Train)), subset(all, split.indices(Subset::Val)),
          subset(all, split.indices(Subset::Test))};
}

ClassifierConfig desk_classifier() {
  ClassifierConfig c;
  c.input_size = 32;
  c.stage_widths = {8, 16};
  c.fc_widths = {32};
  c.seed = 7;
  return c;
}

double accuracy(const ConfusionMatrix& cm) { return static_cast<double>(cm.trace()) / static_cast<double>(cm.total()); }

Outcome criterion_desk_training() {
  const auto t0 = Clock::now();
  const DeskData d = desk_data();
  TrainConfig tc;
  tc.max_epochs = 30;
  tc.seed = 7;
  const TrainResult res = train_classifier(desk_classifier(), tc, d.train, d.val);
  const ConfusionMatrix cm = evaluate(res.params, desk_classifier(), d.test);
  const double acc = accuracy(cm), secs = seconds_since(t0);
  const bool ok = acc >= 0.95 && res.history.epochs.size() <= 30 && secs < 600.0;
  return {ok, fmt::format("test accuracy {:.4f} on {} images after {} epochs, {:.1f} s", acc, cm.total(),
                          res.history.epochs.size(), secs)};
}

Outcome criterion_checkpoint_roundtrip() {
  const DeskData d = desk_data();
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.seed = 7;
  const ClassifierConfig cfg = desk_classifier();
  const TrainResult res = train_classifier(cfg, tc, d.train, d.val);
  const ConfusionMatrix before = evaluate(res.params, cfg, d.test);

  const fs::path path = fs::temp_directory_path() / fmt::format("drnet_acceptance_{}.ckpt", std::random_device{}());
  save_checkpoint(path, classifier_checkpoint(res.params, cfg));
  const NetworkParams<float> loaded = load_checkpoint(path);
  fs::remove(path);
  const ClassifierConfig restored_cfg = classifier_config_from_checkpoint(loaded);
  const ConfusionMatrix after = evaluate(loaded, restored_cfg, d.test);

  bool same_params = true;
  for (const auto& [name, t] : res.params) same_params = same_params && loaded.contains(name) && loaded.at(name) == t;
  const bool ok = before == after && same_params;
  return {ok, fmt::format("confusion matrices {} over {} test images, parameters {}", before == after ? "identical" : "differ",
                          before.total(), same_params ? "bitwise equal" : "differ")};
}

// -- 4: desk-scale GAN -------------------------------------------------------

Outcome criterion_gan() {
  const auto t0 = Clock::now();
  const std::uint64_t seed = 42;
  const auto real = make_disc_ring_dataset(1000, 32, seed);
  GanConfig g;
  g.image_size = 32;
  g.epochs = 5;
  g.steps_per_epoch = 500;
  g.seed = seed;
  GanModel model(g);
  const auto h_real = intensity_distribution(real);
  std::vector<double> js;
  const GanHistory h = train_gan(model, real, [&](const GanEpochSummary&, const GanModel& m) {
    js.push_back(distribution_divergence(h_real, intensity_distribution(generate_images(m.generator, m.config, 500, 99))));
  });
  const double secs = seconds_since(t0);
  bool finite = true;
  for (double v : h.d_losses) finite = finite && std::isfinite(v);
  for (double v : h.g_losses) finite = finite && std::isfinite(v);
  const bool ok = js.size() == 5 && js.back() < js.front() && finite && h.d_losses.size() == 2500 && secs < 900.0;
  std::string trace;
  for (double v : js) trace += fmt::format(" {:.4f}", v);
  return {ok, fmt::format("JS per epoch:{}; losses {}; {:.1f} s", trace, finite ? "finite" : "NOT finite", secs)};
}

// -- 5: learning-rate schedule and early stopping ----------------------------

LabeledSet level_set(std::size_t per_class, std::uint64_t seed) {
  RngStream rng(seed);
  LabeledSet s;
  for (std::size_t k = 0; k < kNumClasses; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      NormalizedImage img(8, 8, -0.8f + 0.4f * static_cast<float>(k));
      for (auto& v : img.data) v += static_cast<float>(rng.uniform(-0.02, 0.02));
      s.images.push_back(std::move(img));
      s.labels.push_back(static_cast<DrClass>(k));
    }
  return s;
}

Outcome criterion_schedule() {
  ClassifierConfig cfg;
  cfg.input_size = 8;
  cfg.stage_widths = {4};
  cfg.fc_widths = {};
  cfg.seed = 5;
  const LabeledSet train = level_set(4, 1), val = level_set(2, 2);

  TrainConfig tc;
  tc.batch_size = 10;
  tc.max_epochs = 30;
  tc.patience = 1000;
  tc.augment = false;
  const TrainResult sched = train_classifier(cfg, tc, train, val);
  std::string failures;
  if (sched.history.epochs.size() != 30) failures += fmt::format(" ran {} epochs", sched.history.epochs.size());
  for (const auto& e : sched.history.epochs) {
    const double expected = e.epoch < 10 ? 0.001 : e.epoch < 20 ? 0.0001 : 1e-5;
    if (e.lr != expected) failures += fmt::format(" lr[{}]={}", e.epoch, e.lr);
  }

  // measured losses pass through at the best epoch; every other epoch looks worse
  const int best = 4;
  std::vector<double> measured;
  tc.max_epochs = 60;
  tc.patience = 15;
  tc.val_loss_adjust = [&](int epoch, double m) {
    measured.push_back(m);
    return epoch == best ? m : m + 1000.0;
  };
  const TrainResult stop = train_classifier(cfg, tc, train, val);
  const int last = stop.history.epochs.back().epoch;
  if (!stop.history.stopped_early || stop.history.best_epoch != best || last != best + 16)
    failures += fmt::format(" stopped={} best={} last={}", stop.history.stopped_early, stop.history.best_epoch, last);
  const double restored = evaluate_loss(stop.params, cfg, val);
  const double diff = std::abs(restored - stop.history.best_val_loss);
  if (!(diff <= 1e-6)) failures += fmt::format(" restored loss off by {:.3e}", diff);
  return {failures.empty(), fmt::format("lr exact over 30 epochs; stopped at epoch {} (best {}); restored loss diff {:.2e}{}",
                                        last, stop.history.best_epoch, diff, failures.empty() ? "" : ";" + failures)};
}

// -- 6: preprocessing invariants ---------------------------------------------

double entropy_bits(const RasterImage& img) {
  std::array<double, 256> hist{};
  for (auto v : img.data) hist[v] += 1.0;
  double h = 0.0;
  for (double c : hist)
    if (c > 0) {
      const double p = c / static_cast<double>(img.data.size());
      h -= p * std::log2(p);
    }
  return h;
}

Outcome criterion_preprocess() {
  const auto t0 = Clock::now();
  std::string failures;
  const RasterImage fundus = make_fundus_image(256, 256, 11);
  const RasterImage gray = to_grayscale(fundus);

  if (!(gamma_correct(gray, 1.0) == gray)) failures += " gamma(1) changed the image;";
  const RasterImage cropped = circle_crop(gray);
  if (!(circle_crop(cropped) == cropped)) failures += " circle crop not idempotent;";
  for (int w : {3, 31}) {
    const RasterImage flat(64, 48, 1, 77);
    if (!(median_filter(flat, w) == flat)) failures += fmt::format(" median window {} changed a constant;", w);
  }
  const RasterImage ramp = make_ramp_image(224, 224, 100, 130);
  const RasterImage eq = clahe(ramp);
  const double h_in = entropy_bits(ramp), h_out = entropy_bits(eq);
  if (!(h_out >= h_in)) failures += fmt::format(" CLAHE entropy {:.4f} < {:.4f};", h_out, h_in);
  if (!(preprocess_chain(fundus) == preprocess_chain(fundus))) failures += " chain not deterministic;";
  const double secs = seconds_since(t0);
  if (secs >= 30.0) failures += fmt::format(" runtime {:.1f}s;", secs);
  return {failures.empty(), fmt::format("ramp entropy {:.4f} -> {:.4f} bits, {:.2f} s{}", h_in, h_out, secs,
                                        failures.empty() ? "" : ";" + failures)};
}

// -- 7: stratified split ------------------------------------------------------

Outcome criterion_split() {
  const std::array<std::size_t, kNumClasses> counts{25810, 2443, 5292, 873, 708};
  const auto labels = labels_with_counts(counts);
  const SplitAssignment a = stratified_split(labels, {}, 42);
  const SplitAssignment b = stratified_split(labels, {}, 42);
  std::array<std::size_t, kNumClasses> test{};
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (a.subset[i] == Subset::Test) ++test[static_cast<std::size_t>(labels[i])];
  std::string failures;
  if (a.count(Subset::Test) != 3513) failures += fmt::format(" test size {}", a.count(Subset::Test));
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (std::abs(static_cast<double>(test[k]) - 0.1 * static_cast<double>(counts[k])) > 1.0)
      failures += fmt::format(" class {} test {}", k, test[k]);
  if (a.subset != b.subset) failures += " not deterministic";
  return {failures.empty(), fmt::format("test {} = {}+{}+{}+{}+{}{}", a.count(Subset::Test), test[0], test[1], test[2],
                                        test[3], test[4], failures.empty() ? "" : ";" + failures)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"drnet acceptance suite"};
  int only = 0;
  app.add_option("--criterion", only, "run one criterion (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  const std::function<Outcome()> criteria[] = {criterion_metrics,   criterion_gradients, criterion_desk_training,
                                               criterion_gan,       criterion_schedule,  criterion_preprocess,
                                               criterion_split,     criterion_checkpoint_roundtrip};
  bool all = true;
  for (int n = 1; n <= 8; ++n) {
    if (only != 0 && n != only) continue;
    Outcome o;
    try {
      o = criteria[n - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.passed;
    std::cout << fmt::format("criterion {} {}: {}", n, o.passed ? "PASS" : "FAIL", o.detail) << std::endl;
  }
  return all ? 0 : 1;
}
