#include <doctest.h>
#include <fmt/format.h>
#include <sys/wait.h>

#include <cstdlib>
#include <set>

#include "drnet/classifier.hpp"
#include "drnet/image.hpp"
#include "drnet/metrics.hpp"
#include "drnet/synthetic.hpp"
#include "test_util.hpp"

using namespace drnet;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs the CLI with `cwd` as working directory, capturing both streams.
RunResult run_cli(const fs::path& cwd, const std::string& args) {
  const fs::path out = cwd / ".stdout", err = cwd / ".stderr";
  const std::string cmd =
      fmt::format("cd '{}' && '{}' {} > '{}' 2> '{}'", cwd.string(), DRNET_CLI_PATH, args, out.string(), err.string());
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = test::slurp(out);
  r.err = test::slurp(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

std::set<std::string> tree(const fs::path& root) {
  std::set<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.insert(fs::relative(e.path(), root).string());
  return files;
}

void write_fundus_fixture(const fs::path& root, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    const fs::path dir = root / std::string(class_directory(static_cast<DrClass>(i % kNumClasses)));
    fs::create_directories(dir);
    write_image(dir / fmt::format("img_{}.png", i), make_fundus_image(160, 160, 100 + i));
  }
}

const char* kTinyConfig =
    "preprocess.fundus = false\n"
    "preprocess.output_size = 16\n"
    "classifier.input_size = 16\n"
    "classifier.stage_widths = 4\n"
    "classifier.fc_widths =\n"
    "train.batch_size = 8\n"
    "train.max_epochs = 2\n"
    "train.augment = false\n";

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors exit 1") {
    test::TempDir dir("drnet_cli");
    CHECK(run_cli(dir.path(), "").code == 1);
    CHECK(run_cli(dir.path(), "no-such-command").code == 1);
    CHECK(run_cli(dir.path(), "gan-sample").code == 1);
    const RunResult missing = run_cli(dir.path(), "train --config missing.cfg");
    CHECK(missing.code == 1);
    CHECK(missing.err.find("error kind=config") != std::string::npos);
    test::spit(dir / "bad.cfg", "bogus.key = 1\n");
    CHECK(run_cli(dir.path(), "stats --config bad.cfg").code == 1);
    CHECK(run_cli(dir.path(), "stats").code == 1);
  }

  TEST_CASE("help exits 0") { CHECK(run_cli(fs::temp_directory_path(), "--help").code == 0); }

  TEST_CASE("gradcheck quick passes") {
    test::TempDir dir("drnet_cli");
    const RunResult r = run_cli(dir.path(), "gradcheck --seeds 1 --quick");
    CHECK(r.code == 0);
    CHECK(r.out.find("gradcheck PASS") != std::string::npos);
    CHECK(r.err.find("seed=42") != std::string::npos);
    CHECK(r.err.find("config.threads=1") != std::string::npos);
  }

  TEST_CASE("stats prints class counts") {
    test::TempDir dir("drnet_cli");
    ShapesOptions o;
    o.count = 40;
    o.size = 16;
    write_labeled_set(dir / "data", make_shapes_dataset(o));
    const RunResult r = run_cli(dir.path(), "stats --data data");
    REQUIRE(r.code == 0);
    // 60/15/15/5/5 of 40
    CHECK(r.out.find(fmt::format("{:<14}{:>8}{:>10.4f}", class_name(DrClass::NoDR), 24, 0.6)) != std::string::npos);
    CHECK(r.out.find(fmt::format("{:<14}{:>8}{:>10.4f}", class_name(DrClass::Mild), 6, 0.15)) != std::string::npos);
    CHECK(r.out.find(fmt::format("{:<14}{:>8}{:>10.4f}", "total", 40, 1.0)) != std::string::npos);
  }

  TEST_CASE("data errors exit 2") {
    test::TempDir dir("drnet_cli");
    CHECK(run_cli(dir.path(), "stats --data nowhere").code == 2);
    fs::create_directories(dir / "data" / "not_a_class");
    CHECK(run_cli(dir.path(), "stats --data data").code == 2);
    CHECK(run_cli(dir.path(), "preprocess --data nowhere --out out").code == 2);
    CHECK(run_cli(dir.path(), "gan-sample --model missing.ckpt --out out").code == 2);
  }

  TEST_CASE("preprocess writes one 224x224 image per input, deterministically") {
    test::TempDir dir("drnet_cli");
    write_fundus_fixture(dir / "data", 5);
    const RunResult a = run_cli(dir.path(), "preprocess --data data --out out1");
    REQUIRE(a.code == 0);
    const RunResult b = run_cli(dir.path(), "preprocess --data data --out out2 --threads 3");
    REQUIRE(b.code == 0);
    const auto files = tree(dir / "out1");
    CHECK(files.size() == 5);
    CHECK(files == tree(dir / "out2"));
    for (const auto& f : files) {
      CAPTURE(f);
      const RasterImage img = read_image(dir / "out1" / f);
      CHECK(img.width == 224);
      CHECK(img.height == 224);
      CHECK(test::slurp(dir / "out1" / f) == test::slurp(dir / "out2" / f));
    }
    // only the data and output trees exist in the working directory
    std::set<std::string> top;
    for (const auto& e : fs::directory_iterator(dir.path())) top.insert(e.path().filename().string());
    CHECK(top == std::set<std::string>{"data", "out1", "out2"});
  }

  TEST_CASE("preprocess skips corrupt files and fails when nothing is readable") {
    test::TempDir dir("drnet_cli");
    write_fundus_fixture(dir / "data", 4);
    test::spit(dir / "data" / "broken.png", "definitely not a png");
    const RunResult r = run_cli(dir.path(), "preprocess --data data --out out");
    CHECK(r.code == 0);
    CHECK(tree(dir / "out").size() == 4);
    CHECK(r.err.find("warning file=") != std::string::npos);
    CHECK(r.err.find("broken.png") != std::string::npos);

    test::spit(dir / "bad" / "a.png", "junk");
    test::spit(dir / "bad" / "b.pgm", "P5 junk");
    CHECK(run_cli(dir.path(), "preprocess --data bad --out out_bad").code == 2);
  }

  TEST_CASE("report reads a confusion matrix") {
    test::TempDir dir("drnet_cli");
    ConfusionMatrix::Counts counts{};
    for (std::size_t k = 0; k < kNumClasses; ++k) counts[k][k] = 10 + k;
    counts[1][0] = 2;
    const ConfusionMatrix cm(counts);
    write_confusion_csv(dir / "cm.csv", cm);
    const RunResult r = run_cli(dir.path(), "report --confusion cm.csv --out rep");
    REQUIRE(r.code == 0);
    CHECK(r.out == format_report(classification_report(cm)));
    CHECK(fs::exists(dir / "rep" / "report.csv"));
    CHECK(fs::exists(dir / "rep" / "report.txt"));
    CHECK(run_cli(dir.path(), "report --confusion missing.csv --out rep").code == 2);
  }

  TEST_CASE("train then evaluate reproduces the confusion matrix") {
    test::TempDir dir("drnet_cli");
    ShapesOptions o;
    o.count = 80;
    o.size = 16;
    o.fractions = {0.2, 0.2, 0.2, 0.2, 0.2};
    write_labeled_set(dir / "data", make_shapes_dataset(o));
    test::spit(dir / "tiny.cfg", kTinyConfig);
    const RunResult t = run_cli(dir.path(), "train --config tiny.cfg --data data --out run");
    REQUIRE(t.code == 0);
    for (const char* f : {"model.ckpt", "history.csv", "confusion.csv", "report.csv", "report.txt"}) {
      CAPTURE(f);
      CHECK(fs::exists(dir / "run" / f));
    }
    const RunResult e = run_cli(dir.path(), "evaluate --config tiny.cfg --data data --model run/model.ckpt --out eval");
    REQUIRE(e.code == 0);
    CHECK(test::slurp(dir / "run" / "confusion.csv") == test::slurp(dir / "eval" / "confusion.csv"));

    test::spit(dir / "other.cfg",
               "preprocess.fundus = false\npreprocess.output_size = 24\nclassifier.input_size = 24\n");
    CHECK(run_cli(dir.path(), "evaluate --config other.cfg --data data --model run/model.ckpt --out eval2").code == 2);
  }

  TEST_CASE("gan train, sample and histogram") {
    test::TempDir dir("drnet_cli");
    ShapesOptions o;
    o.count = 20;
    o.size = 32;
    write_labeled_set(dir / "data", make_shapes_dataset(o));
    test::spit(dir / "gan.cfg",
               "preprocess.fundus = false\ngan.image_size = 32\ngan.base_channels = 4\ngan.latent_dim = 8\n"
               "gan.epochs = 2\ngan.steps_per_epoch = 3\n");
    const RunResult t = run_cli(dir.path(), "gan-train --config gan.cfg --data data --out gan --class 0");
    REQUIRE(t.code == 0);
    CHECK(fs::exists(dir / "gan" / "gan_epoch_001.ckpt"));
    CHECK(fs::exists(dir / "gan" / "gan_epoch_000.ckpt"));
    CHECK(fs::exists(dir / "gan" / "gan_latest.ckpt"));
    CHECK(test::slurp(dir / "gan" / "gan_losses.csv").rfind("step,d_loss,g_loss\n", 0) == 0);

    const RunResult s =
        run_cli(dir.path(), "gan-sample --config gan.cfg --model gan/gan_latest.ckpt --count 3 --out samples");
    REQUIRE(s.code == 0);
    CHECK(tree(dir / "samples") == std::set<std::string>{"sample_0000.png", "sample_0001.png", "sample_0002.png"});
    CHECK(read_image(dir / "samples" / "sample_0000.png").width == 32);

    const RunResult h =
        run_cli(dir.path(), "gan-hist --config gan.cfg --data data --model gan/gan_latest.ckpt --out hist");
    REQUIRE(h.code == 0);
    CHECK(fs::exists(dir / "hist" / "intensity_histogram.csv"));
    CHECK(h.err.find("js_divergence=") != std::string::npos);
  }

  TEST_CASE("augment-preview writes the original and variants") {
    test::TempDir dir("drnet_cli");
    write_image(dir / "eye.png", make_fundus_image(128, 128, 3));
    const RunResult r = run_cli(dir.path(), "augment-preview --image eye.png --count 2 --out prev");
    REQUIRE(r.code == 0);
    CHECK(tree(dir / "prev") == std::set<std::string>{"augmented_000.png", "augmented_001.png", "original.png"});
  }
}
