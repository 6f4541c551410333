#include "drnet/config.hpp"

#include <fmt/format.h>

#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "drnet/error.hpp"

namespace drnet {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, v));
}

unsigned long long to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long n = std::stoull(v, &used);
      if (used == v.size()) return n;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{}: expected a non-negative integer, got '{}'", key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_uint(key, item));
  }
  return out;
}

std::string from_list(const std::vector<std::size_t>& v) { return fmt::format("{}", fmt::join(v, ",")); }
std::string from_bool(bool b) { return b ? "true" : "false"; }
std::string from_double(double d) { return fmt::format("{}", d); }

struct Entry {
  std::string description;
  std::function<void(JobConfig&, const std::string&)> set;
  std::function<std::string(const JobConfig&)> get;
};

template <typename F>
std::pair<std::string, Entry> entry(std::string key, std::string description, F set,
                                    std::function<std::string(const JobConfig&)> get) {
  return {key, Entry{std::move(description),
                     [key, set](JobConfig& c, const std::string& v) { set(c, key, v); }, std::move(get)}};
}

using Setter = void (*)(JobConfig&, const std::string&, const std::string&);

const std::vector<std::pair<std::string, Entry>>& entries() {
  static const std::vector<std::pair<std::string, Entry>> table = {
      entry("data.root", "dataset root (class subdirectories or manifest.csv)",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.data_root = v; }),
            [](const JobConfig& c) { return c.data_root.string(); }),
      entry("data.manifest", "optional manifest CSV (path,label); paths relative to data.root",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.data_manifest = v; }),
            [](const JobConfig& c) { return c.data_manifest.string(); }),
      entry("output.dir", "directory for every file a job writes",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.output_dir = v; }),
            [](const JobConfig& c) { return c.output_dir.string(); }),
      entry("seed", "global random seed",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.seed = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.seed); }),
      entry("threads", "worker threads for loading and augmentation (1 = bitwise reproducible)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.threads = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.threads); }),
      entry("split.train", "training fraction",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.split.train = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.split.train); }),
      entry("split.val", "validation fraction",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.split.val = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.split.val); }),
      entry("split.test", "test fraction",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.split.test = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.split.test); }),
      entry("preprocess.fundus", "full fundus chain; false runs grayscale, resize and normalize only",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.preprocess.fundus = to_bool(k, v); }),
            [](const JobConfig& c) { return from_bool(c.preprocess.fundus); }),
      entry("preprocess.crop_threshold", "circle-crop foreground threshold (0-255)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              const auto t = to_uint(k, v);
              if (t > 255) throw ConfigError(k + " must be at most 255");
              c.preprocess.crop_threshold = static_cast<std::uint8_t>(t);
            }),
            [](const JobConfig& c) { return std::to_string(c.preprocess.crop_threshold); }),
      entry("preprocess.median_mode", "subtract (background subtraction) or filter (3x3 median)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              if (v == "subtract") c.preprocess.median_mode = MedianMode::Subtract;
              else if (v == "filter") c.preprocess.median_mode = MedianMode::Filter;
              else throw ConfigError(k + ": expected subtract or filter, got '" + v + "'");
            }),
            [](const JobConfig& c) {
              return std::string(c.preprocess.median_mode == MedianMode::Subtract ? "subtract" : "filter");
            }),
      entry("preprocess.median_window", "background median window (odd, >= 3)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              c.preprocess.median_window = static_cast<int>(to_uint(k, v));
            }),
            [](const JobConfig& c) { return std::to_string(c.preprocess.median_window); }),
      entry("preprocess.gamma", "gamma exponent",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.preprocess.gamma = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.preprocess.gamma); }),
      entry("preprocess.clahe_tiles", "CLAHE tile grid as ROWSxCOLS",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              const auto x = v.find('x');
              if (x == std::string::npos) throw ConfigError(k + ": expected ROWSxCOLS, got '" + v + "'");
              c.preprocess.clahe_tiles = {static_cast<std::size_t>(to_uint(k, v.substr(0, x))),
                                          static_cast<std::size_t>(to_uint(k, v.substr(x + 1)))};
            }),
            [](const JobConfig& c) {
              return fmt::format("{}x{}", c.preprocess.clahe_tiles.rows, c.preprocess.clahe_tiles.cols);
            }),
      entry("preprocess.clahe_clip", "CLAHE clip limit (multiple of the uniform bin height)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.preprocess.clahe_clip = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.preprocess.clahe_clip); }),
      entry("preprocess.output_size", "side length of preprocessed images",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.preprocess.output_size = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.preprocess.output_size); }),
      entry("augment.rotation_max", "maximum rotation in degrees",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.rotation_max = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.rotation_max); }),
      entry("augment.shift_max", "maximum shift as a fraction of width/height",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.shift_max = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.shift_max); }),
      entry("augment.shear_max", "maximum shear in degrees",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.shear_max = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.shear_max); }),
      entry("augment.zoom_max", "zoom drawn from [1 - zoom_max, 1 + zoom_max]",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.zoom_max = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.zoom_max); }),
      entry("augment.hflip", "random horizontal flips",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.hflip = to_bool(k, v); }),
            [](const JobConfig& c) { return from_bool(c.augment.hflip); }),
      entry("augment.brightness_min", "lower brightness factor",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.brightness_min = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.brightness_min); }),
      entry("augment.brightness_max", "upper brightness factor",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.augment.brightness_max = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.augment.brightness_max); }),
      entry("gan.latent_dim", "latent vector length",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.latent_dim = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.latent_dim); }),
      entry("gan.image_size", "generated image side (power of two >= 32)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.image_size = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.image_size); }),
      entry("gan.batch_size", "GAN batch size",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.batch_size = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.batch_size); }),
      entry("gan.epochs", "GAN epochs",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.epochs = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.epochs); }),
      entry("gan.steps_per_epoch", "GAN steps per epoch",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.steps_per_epoch = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.steps_per_epoch); }),
      entry("gan.learning_rate", "Adam learning rate for both networks",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.learning_rate = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.gan.learning_rate); }),
      entry("gan.beta1", "Adam beta1 for both networks",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.beta1 = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.gan.beta1); }),
      entry("gan.base_channels", "discriminator first-stage width (doubles per stage)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.base_channels = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.gan.base_channels); }),
      entry("gan.leaky_slope", "discriminator leaky-relu slope",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.leaky_slope = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.gan.leaky_slope); }),
      entry("gan.dropout", "discriminator dropout rate",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.gan.dropout = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.gan.dropout); }),
      entry("classifier.input_size", "classifier input side; must equal preprocess.output_size",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.classifier.input_size = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.classifier.input_size); }),
      entry("classifier.stage_widths", "comma-separated residual stage widths",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.classifier.stage_widths = to_list(k, v); }),
            [](const JobConfig& c) { return from_list(c.classifier.stage_widths); }),
      entry("classifier.fc_widths", "comma-separated hidden FC widths (may be empty)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.classifier.fc_widths = to_list(k, v); }),
            [](const JobConfig& c) { return from_list(c.classifier.fc_widths); }),
      entry("classifier.stem_channels", "stem conv channels (0 = first stage width)",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.classifier.stem_channels = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.classifier.stem_channels); }),
      entry("train.batch_size", "classifier batch size",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.train.batch_size = to_uint(k, v); }),
            [](const JobConfig& c) { return std::to_string(c.train.batch_size); }),
      entry("train.max_epochs", "maximum classifier epochs",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              c.train.max_epochs = static_cast<int>(to_uint(k, v));
            }),
            [](const JobConfig& c) { return std::to_string(c.train.max_epochs); }),
      entry("train.learning_rate", "initial Adam learning rate",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.train.learning_rate = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.train.learning_rate); }),
      entry("train.lr_factor", "learning-rate decay factor",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.train.lr_factor = to_double(k, v); }),
            [](const JobConfig& c) { return from_double(c.train.lr_factor); }),
      entry("train.lr_step_epochs", "epochs between learning-rate decays",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              c.train.lr_step_epochs = static_cast<int>(to_uint(k, v));
            }),
            [](const JobConfig& c) { return std::to_string(c.train.lr_step_epochs); }),
      entry("train.patience", "early-stopping patience in epochs",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              c.train.patience = static_cast<int>(to_uint(k, v));
            }),
            [](const JobConfig& c) { return std::to_string(c.train.patience); }),
      entry("train.augment", "online augmentation during training",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) { c.train.augment = to_bool(k, v); }),
            [](const JobConfig& c) { return from_bool(c.train.augment); }),
      entry("synthetic.class1", "GAN checkpoint generating Mild images (empty = none)",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.synthetic[1] = v; }),
            [](const JobConfig& c) { return c.synthetic[1].string(); }),
      entry("synthetic.class2", "GAN checkpoint generating Moderate images (empty = none)",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.synthetic[2] = v; }),
            [](const JobConfig& c) { return c.synthetic[2].string(); }),
      entry("synthetic.class3", "GAN checkpoint generating Severe images (empty = none)",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.synthetic[3] = v; }),
            [](const JobConfig& c) { return c.synthetic[3].string(); }),
      entry("synthetic.class4", "GAN checkpoint generating Proliferative images (empty = none)",
            Setter([](JobConfig& c, const std::string&, const std::string& v) { c.synthetic[4] = v; }),
            [](const JobConfig& c) { return c.synthetic[4].string(); }),
      entry("synthetic.target_fraction", "lift each minority class to this fraction of the majority train count",
            Setter([](JobConfig& c, const std::string& k, const std::string& v) {
              c.synthetic_target_fraction = to_double(k, v);
            }),
            [](const JobConfig& c) { return from_double(c.synthetic_target_fraction); }),
  };
  return table;
}

const Entry& find_entry(const std::string& key) {
  for (const auto& [k, e] : entries())
    if (k == key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void JobConfig::finalize() {
  gan.seed = seed;
  classifier.seed = seed;
  train.seed = seed;
  train.threads = threads;
  train.augmentation = augment;
  if (threads == 0) throw ConfigError("threads must be at least 1");
  if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9 || split.train < 0 || split.val < 0 || split.test < 0)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  if (preprocess.median_window < 3 || preprocess.median_window % 2 == 0)
    throw ConfigError("preprocess.median_window must be odd and at least 3");
  if (!(preprocess.gamma > 0.0)) throw ConfigError("preprocess.gamma must be positive");
  if (preprocess.clahe_tiles.rows == 0 || preprocess.clahe_tiles.cols == 0)
    throw ConfigError("preprocess.clahe_tiles must be at least 1x1");
  if (!(preprocess.clahe_clip > 0.0)) throw ConfigError("preprocess.clahe_clip must be positive");
  if (preprocess.output_size == 0) throw ConfigError("preprocess.output_size must be positive");
  if (classifier.input_size != preprocess.output_size)
    throw ConfigError(fmt::format("classifier.input_size ({}) must equal preprocess.output_size ({})",
                                  classifier.input_size, preprocess.output_size));
  if (!(synthetic_target_fraction >= 0.0 && synthetic_target_fraction <= 1.0))
    throw ConfigError("synthetic.target_fraction must be in [0, 1]");
  augment.validate();
  gan.validate();
  classifier.validate();
  train.validate();
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& [k, e] : entries()) out.push_back({k, e.description});
    return out;
  }();
  return keys;
}

void set_config_value(JobConfig& config, const std::string& key, const std::string& value) {
  find_entry(key).set(config, value);
}

std::string get_config_value(const JobConfig& config, const std::string& key) { return find_entry(key).get(config); }

JobConfig parse_job_config(const std::string& text, const std::string& source) {
  JobConfig config;
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, n));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("{}:{}: duplicate key '{}'", source, n, key));
    try {
      set_config_value(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", source, n, e.what()));
    }
  }
  return config;
}

JobConfig load_job_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_job_config(buffer.str(), path.string());
}

std::vector<std::pair<std::string, std::string>> resolved_config(const JobConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, e] : entries()) out.emplace_back(k, e.get(config));
  return out;
}

void log_config(std::ostream& out, const JobConfig& config) {
  for (const auto& [k, v] : resolved_config(config)) out << "config." << k << '=' << v << '\n';
}

}  // namespace drnet
