#include "drnet/classifier.hpp"

#include <fmt/format.h>

#include <cmath>

#include "drnet/error.hpp"

namespace drnet {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames{"NoDR", "Mild", "Moderate", "Severe", "Proliferative"};
constexpr std::array<std::string_view, kNumClasses> kDirs{"0_no_dr", "1_mild", "2_moderate", "3_severe",
                                                          "4_proliferative"};
}  // namespace

std::string_view class_name(DrClass c) { return kNames.at(static_cast<std::size_t>(c)); }
std::string_view class_directory(DrClass c) { return kDirs.at(static_cast<std::size_t>(c)); }

DrClass class_from_index(long index) {
  if (index < 0 || index >= static_cast<long>(kNumClasses))
    throw DataError(fmt::format("class label {} outside 0..4", index));
  return static_cast<DrClass>(index);
}

void ClassifierConfig::validate() const {
  if (stage_widths.empty()) throw ConfigError("classifier needs at least one residual stage");
  for (std::size_t w : stage_widths)
    if (w == 0) throw ConfigError("classifier stage widths must be positive");
  for (std::size_t w : fc_widths)
    if (w == 0) throw ConfigError("classifier FC widths must be positive");
  try {
    classifier_architecture(*this).layer_shapes(1);
  } catch (const ShapeError& e) {
    throw ConfigError(fmt::format("classifier input size {} is too small: {}", input_size, e.what()));
  }
}

Architecture classifier_architecture(const ClassifierConfig& config) {
  if (config.stage_widths.empty()) throw ConfigError("classifier needs at least one residual stage");
  const std::size_t stem = config.stem_channels ? config.stem_channels : config.stage_widths[0];
  std::vector<LayerSpec> layers{
      {"stem_pad", ZeroPadLayer{3}},
      {"stem.conv", ConvLayer{1, stem, 7, 2, 0, false}},
      {"stem.bn", BatchNormLayer{stem}},
      {"stem_relu", ActivationLayer{Activation::Relu}},
      {"stem_pool_pad", ZeroPadLayer{1}},
      {"stem_pool", MaxPoolLayer{3, 2}},
  };
  std::size_t channels = stem;
  for (std::size_t i = 0; i < config.stage_widths.size(); ++i) {
    layers.push_back({fmt::format("stage{}", i), ResidualStageLayer{channels, config.stage_widths[i], i == 0 ? 1u : 2u}});
    channels = config.stage_widths[i];
  }
  layers.push_back({"gap", GlobalAvgPoolLayer{}});
  for (std::size_t i = 0; i < config.fc_widths.size(); ++i) {
    layers.push_back({fmt::format("fc{}", i), DenseLayer{channels, config.fc_widths[i]}});
    layers.push_back({fmt::format("fc{}_relu", i), ActivationLayer{Activation::Relu}});
    channels = config.fc_widths[i];
  }
  layers.push_back({"logits", DenseLayer{channels, kNumClasses}});
  return Architecture(std::move(layers), Shape{1, config.input_size, config.input_size});
}

NetworkParams<float> build_classifier(const ClassifierConfig& config) {
  config.validate();
  return classifier_architecture(config).init<float>(config.seed, InitScheme::HeNormal);
}

template <typename T>
Var<T> classifier_logits(ForwardContext<T>& ctx, const ClassifierConfig& config, const Var<T>& x) {
  return classifier_architecture(config).forward(ctx, x);
}

Tensor<float> predict(const NetworkParams<float>& params, const ClassifierConfig& config, const Tensor<float>& batch) {
  NetworkParams<float> view = params;
  Tape<float> tape;
  ForwardContext<float> ctx(tape, view, Mode::Eval, nullptr, false);
  return softmax(classifier_logits(ctx, config, tape.constant(batch))).value();
}

DrClass predict_class(std::span<const float> probabilities) {
  if (probabilities.size() != kNumClasses)
    throw ShapeError(fmt::format("predict_class expects {} probabilities, got {}", kNumClasses, probabilities.size()));
  std::size_t best = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!std::isfinite(probabilities[k])) throw NumericError(fmt::format("non-finite probability at class {}", k));
    if (probabilities[k] > probabilities[best]) best = k;
  }
  return static_cast<DrClass>(best);
}

std::vector<DrClass> predict_classes(const Tensor<float>& probabilities) {
  const Shape& s = probabilities.shape();
  if (s.rank() != 2 || s[1] != kNumClasses) throw ShapeError("predict_classes expects [n, 5], got " + s.str());
  std::vector<DrClass> out;
  out.reserve(s[0]);
  for (std::size_t i = 0; i < s[0]; ++i)
    out.push_back(predict_class(std::span<const float>(probabilities.ptr() + i * kNumClasses, kNumClasses)));
  return out;
}

namespace {

Tensor<float> sizes_tensor(const std::vector<std::size_t>& v) {
  std::vector<float> data(v.begin(), v.end());
  return Tensor<float>(Shape{v.size()}, std::move(data));
}

std::vector<std::size_t> tensor_sizes(const Tensor<float>& t) {
  std::vector<std::size_t> out;
  for (float f : t.data()) {
    if (!(f >= 1.0f) || f != std::floor(f)) throw DataError(fmt::format("checkpoint meta value {} is not a size", f));
    out.push_back(static_cast<std::size_t>(f));
  }
  return out;
}

}  // namespace

NetworkParams<float> classifier_checkpoint(const NetworkParams<float>& params, const ClassifierConfig& config) {
  NetworkParams<float> out;
  for (const auto& [name, t] : params)
    if (!name.starts_with("meta.")) out.add(name, t);
  out.add("meta.input_size", sizes_tensor({config.input_size}));
  out.add("meta.stage_widths", sizes_tensor(config.stage_widths));
  if (!config.fc_widths.empty()) out.add("meta.fc_widths", sizes_tensor(config.fc_widths));
  const std::size_t stem = config.stem_channels ? config.stem_channels : config.stage_widths.at(0);
  out.add("meta.stem_channels", sizes_tensor({stem}));
  return out;
}

ClassifierConfig classifier_config_from_checkpoint(const NetworkParams<float>& checkpoint) {
  for (const char* key : {"meta.input_size", "meta.stage_widths", "meta.stem_channels"})
    if (!checkpoint.contains(key)) throw DataError(std::string("classifier checkpoint lacks ") + key);
  ClassifierConfig config;
  config.input_size = tensor_sizes(checkpoint.at("meta.input_size")).at(0);
  config.stage_widths = tensor_sizes(checkpoint.at("meta.stage_widths"));
  config.fc_widths = checkpoint.contains("meta.fc_widths") ? tensor_sizes(checkpoint.at("meta.fc_widths"))
                                                           : std::vector<std::size_t>{};
  config.stem_channels = tensor_sizes(checkpoint.at("meta.stem_channels")).at(0);
  const Architecture arch = classifier_architecture(config);
  for (const auto& layer : arch.layers())
    for (const auto& name : parameter_names(layer))
      if (!checkpoint.contains(name)) throw DataError("classifier checkpoint lacks tensor " + name);
  const NetworkParams<float> reference = arch.init<float>(0, InitScheme::HeNormal);
  for (const auto& [name, t] : reference)
    if (checkpoint.at(name).shape() != t.shape())
      throw DataError(fmt::format("checkpoint tensor {} has shape {}, expected {}", name,
                                  checkpoint.at(name).shape().str(), t.shape().str()));
  return config;
}

template Var<float> classifier_logits<float>(ForwardContext<float>&, const ClassifierConfig&, const Var<float>&);
template Var<double> classifier_logits<double>(ForwardContext<double>&, const ClassifierConfig&, const Var<double>&);

}  // namespace drnet
