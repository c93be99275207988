#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "odseg/ops.hpp"
#include "odseg/rng.hpp"
#include "odseg/tensor.hpp"

namespace odseg {

struct ModelConfig {
  int input_size = 64;
  int levels = 4;
  int base_filters = 16;
  double dropout_rate = 0.2;

  void validate() const;
  /// Channels produced by encoder level `level` (filters double per level).
  int channels(int level) const { return base_filters << level; }
  bool operator==(const ModelConfig&) const = default;
};

/// conv3x3 -> batch norm -> relu.
struct ConvBlock {
  Parameter weight, bias, gamma, beta;
  BatchNormState stats;

  // batch-norm statistics are updated in train mode
  Tensor forward(const Tensor& x, Mode mode);
};

struct EncoderLevel {
  ConvBlock first, second;
};

struct EncoderState {
  std::vector<EncoderLevel> levels;
};

struct LocalizerHead {
  Parameter weight, bias;
};

struct DecoderLevel {
  ConvBlock first, second;
};

struct DecoderState {
  // Ordered deepest -> shallowest.
  std::vector<DecoderLevel> levels;
  Parameter head_weight, head_bias;
};

enum class ModelKind : std::uint32_t {
  Localizer = 1,  // encoder + regression head
  Segmenter = 2,  // frozen pretrained encoder + decoder
  Baseline = 3,   // randomly initialised encoder + decoder, nothing frozen
};

std::string to_string(ModelKind kind);

/// Encoder activations kept for the decoder's skip connections.
struct EncoderFeatures {
  std::vector<Tensor> skips;  // level l: [B, channels(l), S/2^l, S/2^l]
  Tensor bottom;              // after the last pool: [B, channels(L-1), S/2^L, S/2^L]
};

class UNetModel {
 public:
  UNetModel() = default;
  UNetModel(UNetModel&&) = default;
  UNetModel& operator=(UNetModel&&) = default;
  UNetModel(const UNetModel&) = delete;
  UNetModel& operator=(const UNetModel&) = delete;

  /// Deep copy: parameters, statistics and flags, no shared storage.
  UNetModel clone() const;

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return kind_; }
  bool has_localizer() const { return localizer_.has_value(); }
  bool has_decoder() const { return decoder_.has_value(); }
  bool encoder_frozen() const;

  const EncoderState& encoder() const { return encoder_; }
  const std::optional<LocalizerHead>& localizer() const { return localizer_; }
  const std::optional<DecoderState>& decoder() const { return decoder_; }

  /// All parameters in checkpoint order: encoder, localizer head, decoder.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> encoder_parameters();
  std::vector<BatchNormState*> batch_norm_states();
  std::vector<const BatchNormState*> batch_norm_states() const;

  std::size_t parameter_count() const;
  std::size_t trainable_parameter_count() const;
  std::size_t encoder_parameter_count() const;

  void zero_grad();

  /// Runs the encoder. `rng` is required in train mode when dropout is active.
  EncoderFeatures encode(const Tensor& batch, Mode mode, Rng* rng);
  Tensor decode(const EncoderFeatures& features, Mode mode);

  Tensor localize(const Tensor& batch, Mode mode, Rng* rng);
  Tensor segment(const Tensor& batch, Mode mode, Rng* rng);

  static UNetModel make_localizer(const ModelConfig& cfg, Rng& rng);
  static UNetModel make_baseline(const ModelConfig& cfg, Rng& rng);
  void extend(Rng& rng);

  std::string serialize() const;
  static UNetModel deserialize(const std::string& bytes);

 private:
  void check_input(const Tensor& batch) const;

  ModelConfig cfg_;
  ModelKind kind_ = ModelKind::Localizer;
  EncoderState encoder_;
  std::optional<LocalizerHead> localizer_;
  std::optional<DecoderState> decoder_;
};

/// Encoder + localizer head, He-uniform weights, zero biases, gamma 1, beta 0.
UNetModel build_localizer(const ModelConfig& cfg, Rng& rng);

/// Full U-net with a fresh encoder and nothing frozen.
UNetModel build_baseline(const ModelConfig& cfg, Rng& rng);

/// Drops the localizer head, freezes the encoder (parameters and batch-norm
/// statistics) and attaches a freshly initialised decoder.
void extend_to_unet(UNetModel& model, Rng& rng);

/// [B,1,S,S] -> [B,2] predicted (x, y) pixel coordinates.
Tensor forward_localize(UNetModel& model, const Tensor& batch, Mode mode, Rng* rng = nullptr);

/// [B,1,S,S] -> [B,1,S,S] foreground probabilities. A frozen encoder always
/// runs in eval mode without recording gradients.
Tensor forward_segment(UNetModel& model, const Tensor& batch, Mode mode, Rng* rng = nullptr);

/// Binary checkpoint. Layout (little-endian):
///   magic "ODSGCKPT", u32 version, u32 kind,
///   u32 input_size, u32 levels, u32 base_filters, f64 dropout_rate,
///   u32 blob count, then per blob:
///     u32 name length, name bytes, u8 frozen, u32 rank, u32 dims[rank], f64 values
/// Blobs follow `parameters()` order, then per batch-norm layer (encoder then
/// decoder) "<layer>.running_mean" and "<layer>.running_var".
void save_model(const UNetModel& model, const std::filesystem::path& path);
std::string encode_model(const UNetModel& model);
UNetModel load_model(const std::filesystem::path& path);
UNetModel decode_model(const std::string& bytes);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace odseg
