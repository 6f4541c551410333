// Writes generated datasets in the class-directory layout the pipeline reads.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <iostream>

#include "drnet/error.hpp"
#include "drnet/synthetic.hpp"

using namespace drnet;

int main(int argc, char** argv) {
  CLI::App app{"drnet-toydata: generated datasets and fixtures"};
  app.require_subcommand(1);
  std::string out;
  std::uint64_t seed = 0;
  std::size_t count = 0, size = 0;

  auto* shapes = app.add_subcommand("shapes", "5-class shape dataset (60/15/15/5/5%)");
  shapes->add_option("--count", count, "images")->default_val(2500);
  shapes->add_option("--size", size, "image side")->default_val(32);
  auto* fundus = app.add_subcommand("fundus", "fundus-like RGB images spread evenly over the five classes");
  fundus->add_option("--count", count, "images")->default_val(10);
  fundus->add_option("--size", size, "image side")->default_val(256);
  auto* discs = app.add_subcommand("discs", "disc/ring images, all labelled NoDR");
  discs->add_option("--count", count, "images")->default_val(1000);
  discs->add_option("--size", size, "image side")->default_val(32);
  for (auto* sub : {shapes, fundus, discs}) {
    sub->add_option("--out", out, "output root")->required();
    sub->add_option("--seed", seed, "random seed")->default_val(0);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    LabeledSet set;
    if (*shapes) {
      ShapesOptions o;
      o.count = count;
      o.size = size;
      o.seed = seed;
      set = make_shapes_dataset(o);
    } else if (*fundus) {
      for (std::size_t i = 0; i < count; ++i) {
        RasterImage rgb = make_fundus_image(size, size, RngStream::mix({seed, i}));
        const DrClass label = static_cast<DrClass>(i % kNumClasses);
        const auto dir = std::filesystem::path(out) / class_directory(label);
        std::filesystem::create_directories(dir);
        write_image(dir / fmt::format("fundus_{:05}.png", i), rgb);
      }
      std::cerr << fmt::format("toydata kind=fundus count={} out={}\n", count, out);
      return 0;
    } else {
      set.images = make_disc_ring_dataset(count, size, seed);
      set.labels.assign(set.images.size(), DrClass::NoDR);
    }
    write_labeled_set(out, set);
    std::cerr << fmt::format("toydata count={} out={}\n", set.size(), out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
