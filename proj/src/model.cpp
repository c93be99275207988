#include "odseg/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "odseg/error.hpp"

namespace odseg {

void ModelConfig::validate() const {
  if (levels < 1) throw ParameterError("model.levels must be >= 1");
  if (levels > 20 || input_size < (1 << levels))
    throw ParameterError("model.input_size " + std::to_string(input_size) + " is smaller than 2^levels = 2^" +
                         std::to_string(levels));
  if (input_size % (1 << levels) != 0)
    throw ParameterError("model.input_size must be divisible by 2^levels");
  if (base_filters < 1) throw ParameterError("model.base_filters must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ParameterError("model.dropout must be in [0,1)");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Localizer: return "localizer";
    case ModelKind::Segmenter: return "segmenter";
    case ModelKind::Baseline: return "baseline";
  }
  return "unknown";
}

namespace {

Parameter he_uniform(std::string name, Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return {std::move(name), Tensor::from(std::move(shape), std::move(v), true), false};
}

Parameter constant(std::string name, std::size_t n, double value) {
  return {std::move(name), Tensor::full({n}, value, true), false};
}

ConvBlock make_block(const std::string& prefix, int cin, int cout, Rng& rng) {
  const auto ci = static_cast<std::size_t>(cin), co = static_cast<std::size_t>(cout);
  ConvBlock block;
  block.weight = he_uniform(prefix + ".weight", {co, ci, 3, 3}, ci * 9, rng);
  block.bias = constant(prefix + ".bias", co, 0.0);
  block.gamma = constant(prefix + ".gamma", co, 1.0);
  block.beta = constant(prefix + ".beta", co, 0.0);
  block.stats = BatchNormState(co);
  return block;
}

EncoderState make_encoder(const ModelConfig& cfg, Rng& rng) {
  EncoderState enc;
  for (int l = 0; l < cfg.levels; ++l) {
    const int cin = l == 0 ? 1 : cfg.channels(l - 1);
    const std::string p = "enc" + std::to_string(l);
    EncoderLevel level;
    level.first = make_block(p + ".conv1", cin, cfg.channels(l), rng);
    level.second = make_block(p + ".conv2", cfg.channels(l), cfg.channels(l), rng);
    enc.levels.push_back(std::move(level));
  }
  return enc;
}

LocalizerHead make_head(const ModelConfig& cfg, Rng& rng) {
  const std::size_t side = static_cast<std::size_t>(cfg.input_size >> cfg.levels);
  const std::size_t features = static_cast<std::size_t>(cfg.channels(cfg.levels - 1)) * side * side;
  LocalizerHead head;
  head.weight = he_uniform("loc.weight", {2, features}, features, rng);
  head.bias = constant("loc.bias", 2, 0.0);
  return head;
}

DecoderState make_decoder(const ModelConfig& cfg, Rng& rng) {
  DecoderState dec;
  for (int l = cfg.levels - 1; l >= 0; --l) {
    // upsampled input comes from the level below (or the pooled bottom)
    const int from_below = l == cfg.levels - 1 ? cfg.channels(cfg.levels - 1) : cfg.channels(l + 1);
    const int cin = from_below + cfg.channels(l);
    const std::string p = "dec" + std::to_string(l);
    DecoderLevel level;
    level.first = make_block(p + ".conv1", cin, cfg.channels(l), rng);
    level.second = make_block(p + ".conv2", cfg.channels(l), cfg.channels(l), rng);
    dec.levels.push_back(std::move(level));
  }
  const auto c0 = static_cast<std::size_t>(cfg.channels(0));
  dec.head_weight = he_uniform("seg.weight", {1, c0, 1, 1}, c0, rng);
  dec.head_bias = constant("seg.bias", 1, 0.0);
  return dec;
}

void push_block(std::vector<Parameter*>& out, ConvBlock& b) {
  out.insert(out.end(), {&b.weight, &b.bias, &b.gamma, &b.beta});
}

Parameter clone_param(const Parameter& p) { return {p.name, p.tensor.clone(true), p.frozen}; }

ConvBlock clone_block(const ConvBlock& b) {
  return {clone_param(b.weight), clone_param(b.bias), clone_param(b.gamma), clone_param(b.beta), b.stats};
}

std::string block_prefix(const ConvBlock& b) {
  const auto& n = b.weight.name;
  return n.substr(0, n.rfind('.'));
}

}  // namespace

Tensor ConvBlock::forward(const Tensor& x, Mode mode) {
  return relu(batch_norm(conv2d(x, weight.tensor, bias.tensor), gamma.tensor, beta.tensor, stats, mode));
}

UNetModel UNetModel::make_localizer(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  UNetModel m;
  m.cfg_ = cfg;
  m.kind_ = ModelKind::Localizer;
  m.encoder_ = make_encoder(cfg, rng);
  m.localizer_ = make_head(cfg, rng);
  return m;
}

UNetModel UNetModel::make_baseline(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  UNetModel m;
  m.cfg_ = cfg;
  m.kind_ = ModelKind::Baseline;
  m.encoder_ = make_encoder(cfg, rng);
  m.decoder_ = make_decoder(cfg, rng);
  return m;
}

void UNetModel::extend(Rng& rng) {
  if (kind_ != ModelKind::Localizer || decoder_) throw StateError("model is already a " + to_string(kind_));
  localizer_.reset();
  for (auto* p : encoder_parameters()) p->frozen = true;
  decoder_ = make_decoder(cfg_, rng);
  kind_ = ModelKind::Segmenter;
}

UNetModel UNetModel::clone() const {
  UNetModel m;
  m.cfg_ = cfg_;
  m.kind_ = kind_;
  for (const auto& l : encoder_.levels) m.encoder_.levels.push_back({clone_block(l.first), clone_block(l.second)});
  if (localizer_) m.localizer_ = LocalizerHead{clone_param(localizer_->weight), clone_param(localizer_->bias)};
  if (decoder_) {
    DecoderState d;
    for (const auto& l : decoder_->levels) d.levels.push_back({clone_block(l.first), clone_block(l.second)});
    d.head_weight = clone_param(decoder_->head_weight);
    d.head_bias = clone_param(decoder_->head_bias);
    m.decoder_ = std::move(d);
  }
  return m;
}

bool UNetModel::encoder_frozen() const {
  return !encoder_.levels.empty() && encoder_.levels[0].first.weight.frozen;
}

std::vector<Parameter*> UNetModel::encoder_parameters() {
  std::vector<Parameter*> out;
  for (auto& l : encoder_.levels) {
    push_block(out, l.first);
    push_block(out, l.second);
  }
  return out;
}

std::vector<Parameter*> UNetModel::parameters() {
  auto out = encoder_parameters();
  if (localizer_) out.insert(out.end(), {&localizer_->weight, &localizer_->bias});
  if (decoder_) {
    for (auto& l : decoder_->levels) {
      push_block(out, l.first);
      push_block(out, l.second);
    }
    out.insert(out.end(), {&decoder_->head_weight, &decoder_->head_bias});
  }
  return out;
}

std::vector<const Parameter*> UNetModel::parameters() const {
  auto mut = const_cast<UNetModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<BatchNormState*> UNetModel::batch_norm_states() {
  std::vector<BatchNormState*> out;
  for (auto& l : encoder_.levels) out.insert(out.end(), {&l.first.stats, &l.second.stats});
  if (decoder_)
    for (auto& l : decoder_->levels) out.insert(out.end(), {&l.first.stats, &l.second.stats});
  return out;
}

std::vector<const BatchNormState*> UNetModel::batch_norm_states() const {
  auto mut = const_cast<UNetModel*>(this)->batch_norm_states();
  return {mut.begin(), mut.end()};
}

std::size_t UNetModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->tensor.numel();
  return n;
}

std::size_t UNetModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters())
    if (!p->frozen) n += p->tensor.numel();
  return n;
}

std::size_t UNetModel::encoder_parameter_count() const {
  std::size_t n = 0;
  for (auto* p : const_cast<UNetModel*>(this)->encoder_parameters()) n += p->tensor.numel();
  return n;
}

void UNetModel::zero_grad() {
  for (auto* p : parameters()) p->tensor.zero_grad();
}

void UNetModel::check_input(const Tensor& batch) const {
  const auto s = static_cast<std::size_t>(cfg_.input_size);
  if (batch.rank() != 4 || batch.dim(1) != 1 || batch.dim(2) != s || batch.dim(3) != s)
    throw ShapeError("model expects [B,1," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                     shape_str(batch.shape()));
}

EncoderFeatures UNetModel::encode(const Tensor& batch, Mode mode, Rng* rng) {
  check_input(batch);
  if (mode == Mode::Train && cfg_.dropout_rate > 0.0 && rng == nullptr)
    throw ContractError("train-mode encoder pass needs a random source for dropout");
  EncoderFeatures f;
  Tensor x = batch;
  for (auto& level : encoder_.levels) {
    x = level.first.forward(x, mode);
    x = level.second.forward(x, mode);
    f.skips.push_back(x);
    x = maxpool2(x);
    // after the pool: a max over inverted-dropout survivors is biased upward
    if (mode == Mode::Train && cfg_.dropout_rate > 0.0) x = dropout(x, cfg_.dropout_rate, mode, *rng);
  }
  f.bottom = x;
  return f;
}

Tensor UNetModel::decode(const EncoderFeatures& features, Mode mode) {
  if (!decoder_) throw StateError("model has no decoder; extend it to a U-net first");
  if (features.skips.size() != decoder_->levels.size())
    throw ShapeError("decoder expects " + std::to_string(decoder_->levels.size()) + " skip tensors");
  Tensor x = features.bottom;
  for (std::size_t i = 0; i < decoder_->levels.size(); ++i) {
    const Tensor& skip = features.skips[features.skips.size() - 1 - i];
    x = concat_channels(upsample2(x), skip);
    x = decoder_->levels[i].first.forward(x, mode);
    x = decoder_->levels[i].second.forward(x, mode);
  }
  return sigmoid(conv1x1(x, decoder_->head_weight.tensor, decoder_->head_bias.tensor));
}

Tensor UNetModel::localize(const Tensor& batch, Mode mode, Rng* rng) {
  if (!localizer_) throw StateError("model has no localizer head");
  const EncoderFeatures f = encode(batch, mode, rng);
  return linear(flatten(f.bottom), localizer_->weight.tensor, localizer_->bias.tensor);
}

Tensor UNetModel::segment(const Tensor& batch, Mode mode, Rng* rng) {
  if (!decoder_) throw StateError("model is a " + to_string(kind_) + "; segmentation needs an extended U-net");
  if (encoder_frozen()) {
    EncoderFeatures f;
    {
      NoGradGuard guard;
      f = encode(batch, Mode::Eval, nullptr);
    }
    return decode(f, mode);
  }
  return decode(encode(batch, mode, rng), mode);
}

UNetModel build_localizer(const ModelConfig& cfg, Rng& rng) { return UNetModel::make_localizer(cfg, rng); }
UNetModel build_baseline(const ModelConfig& cfg, Rng& rng) { return UNetModel::make_baseline(cfg, rng); }
void extend_to_unet(UNetModel& model, Rng& rng) { model.extend(rng); }

Tensor forward_localize(UNetModel& model, const Tensor& batch, Mode mode, Rng* rng) {
  return model.localize(batch, mode, rng);
}

Tensor forward_segment(UNetModel& model, const Tensor& batch, Mode mode, Rng* rng) {
  return model.segment(batch, mode, rng);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'O', 'D', 'S', 'G', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void blob(const std::string& name, bool frozen, const Shape& shape, std::span<const double> values) {
    u32(static_cast<std::uint32_t>(name.size()));
    bytes(name.data(), name.size());
    u8(frozen ? 1 : 0);
    u32(static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) u32(static_cast<std::uint32_t>(d));
    for (double v : values) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw FormatError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(s_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool done() const { return pos_ == s_.size(); }

  // Reads one blob into `dest`, which must carry the expected name and shape.
  bool blob(const std::string& name, const Shape& shape, std::span<double> dest) {
    const std::string got = bytes(u32());
    if (got != name) throw FormatError("checkpoint blob '" + got + "' where '" + name + "' was expected");
    const bool frozen = u8() != 0;
    const std::uint32_t rank = u32();
    if (rank != shape.size()) throw FormatError("checkpoint blob '" + name + "' has rank " + std::to_string(rank));
    for (std::size_t i = 0; i < rank; ++i)
      if (u32() != shape[i]) throw FormatError("checkpoint blob '" + name + "' shape mismatch");
    for (auto& v : dest) v = f64();
    return frozen;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string UNetModel::serialize() const {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(kind_));
  w.u32(static_cast<std::uint32_t>(cfg_.input_size));
  w.u32(static_cast<std::uint32_t>(cfg_.levels));
  w.u32(static_cast<std::uint32_t>(cfg_.base_filters));
  w.f64(cfg_.dropout_rate);
  const auto params = parameters();
  const auto stats = batch_norm_states();
  w.u32(static_cast<std::uint32_t>(params.size() + 2 * stats.size()));
  for (const auto* p : params) w.blob(p->name, p->frozen, p->tensor.shape(), p->tensor.values());

  std::vector<const ConvBlock*> blocks;
  for (const auto& l : encoder_.levels) blocks.insert(blocks.end(), {&l.first, &l.second});
  if (decoder_)
    for (const auto& l : decoder_->levels) blocks.insert(blocks.end(), {&l.first, &l.second});
  const bool stats_frozen = encoder_frozen();
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const bool frozen = stats_frozen && i < 2 * encoder_.levels.size();
    const auto& s = blocks[i]->stats;
    const std::string prefix = block_prefix(*blocks[i]);
    w.blob(prefix + ".running_mean", frozen, {s.running_mean.size()}, s.running_mean);
    w.blob(prefix + ".running_var", frozen, {s.running_var.size()}, s.running_var);
  }
  return w.take();
}

UNetModel UNetModel::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw FormatError("not an odseg checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t kind_raw = r.u32();
  if (kind_raw < 1 || kind_raw > 3) throw FormatError("unknown model kind " + std::to_string(kind_raw));
  const auto kind = static_cast<ModelKind>(kind_raw);
  ModelConfig cfg;
  cfg.input_size = static_cast<int>(r.u32());
  cfg.levels = static_cast<int>(r.u32());
  cfg.base_filters = static_cast<int>(r.u32());
  cfg.dropout_rate = r.f64();
  try {
    cfg.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  // Build the expected skeleton, then fill it in declared order.
  Rng scratch(0);
  UNetModel m = kind == ModelKind::Baseline ? make_baseline(cfg, scratch) : make_localizer(cfg, scratch);
  if (kind == ModelKind::Segmenter) m.extend(scratch);

  const auto params = m.parameters();
  const auto stats = m.batch_norm_states();
  const std::uint32_t count = r.u32();
  if (count != params.size() + 2 * stats.size())
    throw FormatError("checkpoint holds " + std::to_string(count) + " blobs, expected " +
                      std::to_string(params.size() + 2 * stats.size()));
  for (auto* p : params) p->frozen = r.blob(p->name, p->tensor.shape(), p->tensor.values());

  std::vector<ConvBlock*> blocks;
  for (auto& l : m.encoder_.levels) blocks.insert(blocks.end(), {&l.first, &l.second});
  if (m.decoder_)
    for (auto& l : m.decoder_->levels) blocks.insert(blocks.end(), {&l.first, &l.second});
  for (auto* b : blocks) {
    const std::string prefix = block_prefix(*b);
    r.blob(prefix + ".running_mean", {b->stats.running_mean.size()}, b->stats.running_mean);
    r.blob(prefix + ".running_var", {b->stats.running_var.size()}, b->stats.running_var);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return m;
}

std::string encode_model(const UNetModel& model) { return model.serialize(); }
UNetModel decode_model(const std::string& bytes) { return UNetModel::deserialize(bytes); }

void save_model(const UNetModel& model, const std::filesystem::path& path) {
  const std::string bytes = model.serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

UNetModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return UNetModel::deserialize(buf.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace odseg
