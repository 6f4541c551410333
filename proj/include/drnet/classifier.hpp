#pragma once

// Residual CNN grading single-channel fundus images into five classes.

#include <array>
#include <string_view>
#include <vector>

#include "drnet/image.hpp"
#include "drnet/network.hpp"

namespace drnet {

enum class DrClass { NoDR = 0, Mild = 1, Moderate = 2, Severe = 3, Proliferative = 4 };

inline constexpr std::size_t kNumClasses = 5;

std::string_view class_name(DrClass c);
/// Directory name used in dataset layouts, e.g. "2_moderate".
std::string_view class_directory(DrClass c);
/// Throws DataError for labels outside 0..4.
DrClass class_from_index(long index);

struct ClassifierConfig {
  std::vector<std::size_t> stage_widths{64, 128, 256};
  std::vector<std::size_t> fc_widths{512};
  std::size_t input_size = 224;
  /// Stem convolution channels; 0 means stage_widths[0].
  std::size_t stem_channels = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on an empty stage list or an input too small for the downsampling chain.
  void validate() const;
};

/// zero-pad 3 -> conv 7x7/2 -> BN -> relu -> zero-pad 1 -> max-pool 3x3/2
/// -> residual stages (stride 1 for the first, 2 after) -> global average
/// pool -> dense + relu per FC width -> dense to 5 logits. Softmax is
/// applied by predict().
Architecture classifier_architecture(const ClassifierConfig& config);

/// He-normal initialised parameters.
NetworkParams<float> build_classifier(const ClassifierConfig& config);

/// Parameters plus meta.* entries recording the architecture (input size,
/// stage widths, FC widths, stem channels).
NetworkParams<float> classifier_checkpoint(const NetworkParams<float>& params, const ClassifierConfig& config);
/// Architecture recorded by classifier_checkpoint. Throws DataError when meta entries are missing
/// or the parameters do not match the recorded architecture.
ClassifierConfig classifier_config_from_checkpoint(const NetworkParams<float>& checkpoint);

/// Parameter name of the final 5-way dense layer's weight and bias.
inline constexpr std::string_view kLogitsWeight = "logits.weight";
inline constexpr std::string_view kLogitsBias = "logits.bias";

/// Logits for an [n, 1, s, s] batch.
template <typename T>
Var<T> classifier_logits(ForwardContext<T>& ctx, const ClassifierConfig& config, const Var<T>& x);

/// Eval-mode class probabilities, [n, 5]; rows sum to 1.
Tensor<float> predict(const NetworkParams<float>& params, const ClassifierConfig& config, const Tensor<float>& batch);

/// Index of the largest entry; ties go to the lowest index. Throws NumericError on non-finite entries.
DrClass predict_class(std::span<const float> probabilities);
std::vector<DrClass> predict_classes(const Tensor<float>& probabilities);

}  // namespace drnet
