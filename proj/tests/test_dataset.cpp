#include <doctest.h>

#include <atomic>
#include <cmath>
#include <numeric>

#include "drnet/error.hpp"
#include "drnet/synthetic.hpp"
#include "test_util.hpp"

using namespace drnet;

namespace {

const std::array<std::size_t, kNumClasses> kCorpus{25810, 2443, 5292, 873, 708};

LabeledSet tiny_set(std::size_t per_class, std::size_t size = 8) {
  LabeledSet s;
  for (std::size_t k = 0; k < kNumClasses; ++k)
    for (std::size_t i = 0; i < per_class; ++i) {
      s.images.emplace_back(size, size, static_cast<float>(k) / 5.0f - 0.5f + static_cast<float>(i) / 100.0f);
      s.labels.push_back(class_from_index(static_cast<long>(k)));
    }
  return s;
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("directory layout manifest") {
    test::TempDir dir("drnet_ds");
    const auto written = write_labeled_set(dir.path(), tiny_set(10));
    const auto m = load_manifest(dir.path());
    CHECK(m.size() == 50);
    for (auto c : m.counts()) CHECK(c == 10);
    for (std::size_t i = 1; i < m.size(); ++i) CHECK(m.records[i - 1].path < m.records[i].path);
    CHECK(m.records[0].path.parent_path() == "0_no_dr");
    CHECK(written.size() == 50);
  }

  TEST_CASE("manifest errors") {
    test::TempDir dir("drnet_ds_err");
    CHECK_THROWS_AS(load_manifest(dir.path()), DataError);
    CHECK_THROWS_AS(load_manifest(dir / "missing"), DataError);
    test::spit(dir / "7_unknown" / "a.png", "x");
    CHECK_THROWS_AS(load_manifest(dir.path()), DataError);
  }

  TEST_CASE("manifest csv round trip and validation") {
    test::TempDir dir("drnet_ds_csv");
    const auto m = write_labeled_set(dir.path(), tiny_set(3));
    write_manifest_csv(dir / "list.csv", m);
    CHECK(test::slurp(dir / "list.csv").rfind("path,label\n", 0) == 0);
    const auto back = load_manifest_csv(dir / "list.csv", dir.path());
    REQUIRE(back.size() == m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(back.records[i].path == m.records[i].path);
      CHECK(back.records[i].label == m.records[i].label);
    }
    // A manifest.csv at the root takes precedence over directory scanning.
    test::spit(dir / "manifest.csv", "path,label\n0_no_dr/img_00000.png,3\n");
    const auto over = load_manifest(dir.path());
    REQUIRE(over.size() == 1);
    CHECK(over.records[0].label == DrClass::Severe);

    test::spit(dir / "bad1.csv", "file,label\n");
    CHECK_THROWS_AS(load_manifest_csv(dir / "bad1.csv", dir.path()), DataError);
    test::spit(dir / "bad2.csv", "path,label\n0_no_dr/img_00000.png,9\n");
    CHECK_THROWS_AS(load_manifest_csv(dir / "bad2.csv", dir.path()), DataError);
    test::spit(dir / "bad3.csv", "path,label\nnope.png,1\n");
    CHECK_THROWS_AS(load_manifest_csv(dir / "bad3.csv", dir.path()), DataError);
  }

  TEST_CASE("class stats") {
    const auto labels = labels_with_counts(kCorpus);
    const auto s = class_stats(labels);
    CHECK(s.total == 35126);
    CHECK(s.counts == kCorpus);
    CHECK(s.fractions[0] == doctest::Approx(25810.0 / 35126.0));
    CHECK(std::floor(s.fractions[0] * 1e4) / 1e4 == 0.7347);  // printed value is truncated
    double sum = 0;
    for (double f : s.fractions) sum += f;
    CHECK(std::abs(sum - 1.0) < 1e-9);
    const auto single = class_stats(std::vector<DrClass>(4, DrClass::Mild));
    CHECK(single.fractions[1] == 1.0);
    CHECK_THROWS_AS(class_stats(std::vector<DrClass>{}), DataError);
  }

  TEST_CASE("split on the large five-class counts") {
    const auto labels = labels_with_counts(kCorpus);
    const auto a = stratified_split(labels, {}, 42);
    CHECK(a.count(Subset::Test) == 3513);
    CHECK(a.count(Subset::Train) + a.count(Subset::Val) + a.count(Subset::Test) == 35126);
    const auto b = stratified_split(labels, {}, 42);
    CHECK(a.subset == b.subset);
    const auto c = stratified_split(labels, {}, 43);
    CHECK_FALSE(a.subset == c.subset);
  }

  TEST_CASE("split of ten images is 8/1/1") {
    const std::vector<DrClass> labels(10, DrClass::Moderate);
    const auto s = stratified_split(labels, {}, 1);
    CHECK(s.count(Subset::Train) == 8);
    CHECK(s.count(Subset::Val) == 1);
    CHECK(s.count(Subset::Test) == 1);
  }

  TEST_CASE("split rejects tiny classes and bad fractions") {
    std::vector<DrClass> labels(10, DrClass::NoDR);
    labels.push_back(DrClass::Mild);
    labels.push_back(DrClass::Mild);
    CHECK_THROWS_AS(stratified_split(labels, {}, 1), DataError);
    CHECK_THROWS_AS(stratified_split(std::vector<DrClass>(10, DrClass::NoDR), {0.5, 0.5, 0.5}, 1), ConfigError);
  }

  TEST_CASE("split is a per-class partition with 10% within one image") {
    RngStream rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      std::array<std::size_t, kNumClasses> counts{};
      for (auto& c : counts) c = 3 + rng.below(400);
      const auto labels = labels_with_counts(counts);
      const auto s = stratified_split(labels, {}, trial);
      REQUIRE(s.subset.size() == labels.size());
      std::vector<int> seen(labels.size(), 0);
      for (auto which : {Subset::Train, Subset::Val, Subset::Test})
        for (auto i : s.indices(which)) ++seen[i];
      CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        std::size_t test = 0, val = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (static_cast<std::size_t>(labels[i]) != k) continue;
          test += s.subset[i] == Subset::Test;
          val += s.subset[i] == Subset::Val;
        }
        CHECK(std::abs(static_cast<double>(test) - 0.1 * counts[k]) <= 1.0);
        CHECK(std::abs(static_cast<double>(val) - 0.1 * counts[k]) <= 1.0);
      }
    }
  }

  TEST_CASE("image loading applies preprocessing and keeps order") {
    test::TempDir dir("drnet_ds_img");
    const auto set = tiny_set(3, 16);
    const auto m = write_labeled_set(dir.path(), set);
    PreprocessConfig pc;
    pc.fundus = false;
    pc.output_size = 16;
    std::vector<std::size_t> idx{4, 0, 9};
    const auto one = load_images(m, idx, pc, 1);
    const auto many = load_images(m, idx, pc, 3);
    REQUIRE(one.size() == 3);
    CHECK(one.images == many.images);
    CHECK(one.labels == many.labels);
    CHECK(one.labels[0] == m.records[4].label);
    test::spit(dir / "1_mild" / "zz_corrupt.png", "not a png");
    const auto m2 = load_manifest(dir.path());
    std::vector<std::size_t> all(m2.size());
    std::iota(all.begin(), all.end(), 0);
    CHECK_THROWS_AS(load_images(m2, all, pc, 2), DataError);
  }

  TEST_CASE("parallel_for visits every index once") {
    for (std::size_t threads : {1ul, 2ul, 8ul}) {
      std::vector<std::atomic<int>> hits(1000);
      parallel_for(hits.size(), threads, [&](std::size_t i) { ++hits[i]; });
      CHECK(std::all_of(hits.begin(), hits.end(), [](const auto& h) { return h.load() == 1; }));
    }
  }

  TEST_CASE("synthetic count helpers") {
    const auto counts = counts_for_fractions(2500, {0.6, 0.15, 0.15, 0.05, 0.05});
    CHECK(counts == std::array<std::size_t, kNumClasses>{1500, 375, 375, 125, 125});
    const auto labels = labels_with_counts(counts);
    CHECK(labels.size() == 2500);
    const auto shapes = make_shapes_dataset(ShapesOptions{100, 32, {0.6, 0.15, 0.15, 0.05, 0.05}, 3, 0.05});
    CHECK(shapes.size() == 100);
    CHECK(shapes.images[0].width == 32);
    const auto again = make_shapes_dataset(ShapesOptions{100, 32, {0.6, 0.15, 0.15, 0.05, 0.05}, 3, 0.05});
    CHECK(shapes.images == again.images);
  }
}
