// SPDX-License-Identifier: Apache-2.0
#include "maskfill/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "maskfill/ops.hpp"

namespace maskfill {

std::size_t HourglassConfig::level_width(std::size_t level) const {
  if (level == 0)
    return base_channels;
  const std::size_t w = static_cast<std::size_t>(base_channels) << (level - 1);
  return std::min<std::size_t>(w, max_channels);
}

void HourglassConfig::validate() const {
  expects(in_channels >= 1, "hourglass: in_channels must be positive");
  expects(depth >= 1 && depth <= 8, "hourglass: depth must lie in [1,8]");
  expects(base_channels >= 1 && max_channels >= base_channels,
          "hourglass: need 1 <= base_channels <= max_channels");
  expects(leaky_slope >= 0.0f && leaky_slope < 1.0f, "hourglass: leaky_slope must lie in [0,1)");
}

std::vector<ConvLayer> hourglass_layers(const HourglassConfig &config) {
  config.validate();
  std::vector<ConvLayer> layers;
  const std::size_t c0 = config.level_width(0);
  layers.push_back({"stem.0", config.in_channels, c0, 3, 1});
  layers.push_back({"stem.1", c0, c0, 3, 1});
  for (std::size_t l = 1; l <= config.depth; ++l) {
    const std::string prefix = "down" + std::to_string(l);
    layers.push_back({prefix + ".0", config.level_width(l - 1), config.level_width(l), 3, 2});
    layers.push_back({prefix + ".1", config.level_width(l), config.level_width(l), 3, 1});
  }
  for (std::size_t l = config.depth; l >= 1; --l) {
    const std::string prefix = "up" + std::to_string(l);
    const std::size_t in =
        config.level_width(l) + (config.skip_connections ? config.level_width(l - 1) : 0);
    layers.push_back({prefix + ".0", in, config.level_width(l - 1), 3, 1});
    layers.push_back({prefix + ".1", config.level_width(l - 1), config.level_width(l - 1), 3, 1});
  }
  layers.push_back({"head", c0, config.in_channels, 1, 1});
  return layers;
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto &t : tensors)
    n += t.numel();
  return n;
}

template <typename T>
Hourglass<T>::Hourglass(const HourglassConfig &config)
    : config_(config), layers_(hourglass_layers(config)) {
  for (const auto &layer : layers_) {
    names_.push_back(layer.name + ".weight");
    params_.emplace_back(Shape{layer.out_channels, layer.in_channels, layer.kernel, layer.kernel});
    names_.push_back(layer.name + ".bias");
    params_.emplace_back(Shape{layer.out_channels});
  }
}

template <typename T>
Hourglass<T>::Hourglass(const HourglassConfig &config, Rng &rng) : Hourglass(config) {
  const double slope = config.leaky_slope;
  const double gain = std::sqrt(2.0 / (1.0 + slope * slope));
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto &layer = layers_[k];
    const double fan_in = static_cast<double>(layer.in_channels * layer.kernel * layer.kernel);
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(fan_in));
    for (auto &w : params_[2 * k].values())
      w = static_cast<T>(normal(rng));
  }
}

template <typename T>
Hourglass<T>::Hourglass(const ModelWeights &weights) : Hourglass(weights.config) {
  if (weights.tensors.size() != params_.size())
    throw ShapeMismatchError("weights hold " + std::to_string(weights.tensors.size()) +
                             " tensors, model expects " + std::to_string(params_.size()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (weights.names[i] != names_[i] || weights.tensors[i].shape() != params_[i].shape())
      throw ShapeMismatchError("weight tensor " + std::to_string(i) + " '" + weights.names[i] +
                               "' " + shape_string(weights.tensors[i].shape()) + " does not match '" +
                               names_[i] + "' " + shape_string(params_[i].shape()));
    params_[i] = weights.tensors[i].template cast<T>();
  }
}

template <typename T> std::size_t Hourglass<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto &p : params_)
    n += p.numel();
  return n;
}

template <typename T> std::vector<Var<T>> Hourglass<T>::bind(Tape<T> &tape) const {
  std::vector<Var<T>> vars;
  vars.reserve(params_.size());
  for (const auto &p : params_) {
    Tensor<T> leaf = p;
    leaf.set_requires_grad(true);
    vars.push_back(tape.leaf(std::move(leaf)));
  }
  return vars;
}

template <typename T>
Var<T> Hourglass<T>::forward(std::span<const Var<T>> params, Var<T> input) const {
  expects(params.size() == params_.size(), "hourglass forward: parameter count mismatch");
  const Tensor<T> &x = input.value();
  expect_image_shape(x, "hourglass forward");
  expects(x.dim(1) == config_.in_channels,
          "hourglass forward: expected " + std::to_string(config_.in_channels) +
              " channels, got " + std::to_string(x.dim(1)));
  const std::size_t multiple = std::size_t{1} << config_.depth;
  const std::size_t h = x.dim(2), w = x.dim(3);
  const std::size_t pad_h = (multiple - h % multiple) % multiple;
  const std::size_t pad_w = (multiple - w % multiple) % multiple;
  expects((pad_h == 0 || h > 1) && (pad_w == 0 || w > 1),
          "hourglass forward: input too small to pad");

  const T slope = static_cast<T>(config_.leaky_slope);
  std::size_t layer = 0;
  auto conv = [&](Var<T> v) {
    const ConvLayer &spec = layers_[layer];
    Var<T> out = conv2d(v, params[2 * layer], params[2 * layer + 1], spec.stride, spec.kernel / 2);
    ++layer;
    return out;
  };

  Var<T> h_var = (pad_h || pad_w) ? reflect_pad(input, 0, pad_h, 0, pad_w) : input;
  h_var = leaky_relu(conv(h_var), slope);
  h_var = leaky_relu(conv(h_var), slope);
  std::vector<Var<T>> skips{h_var};
  for (std::size_t l = 1; l <= config_.depth; ++l) {
    h_var = leaky_relu(conv(h_var), slope);
    h_var = leaky_relu(conv(h_var), slope);
    skips.push_back(h_var);
  }
  for (std::size_t l = config_.depth; l >= 1; --l) {
    h_var = upsample_nearest(h_var, 2);
    if (config_.skip_connections)
      h_var = concat_channels(h_var, skips[l - 1]);
    h_var = leaky_relu(conv(h_var), slope);
    h_var = leaky_relu(conv(h_var), slope);
  }
  h_var = conv(h_var);
  if (pad_h || pad_w)
    h_var = crop(h_var, 0, 0, h, w);
  return h_var;
}

template <typename T> Tensor<T> Hourglass<T>::predict(const Tensor<T> &input) const {
  Tape<T> tape;
  std::vector<Var<T>> params;
  params.reserve(params_.size());
  for (const auto &p : params_)
    params.push_back(tape.constant(p));
  Var<T> out = forward(params, tape.constant(input));
  return out.value();
}

template <typename T> ModelWeights Hourglass<T>::to_weights() const {
  ModelWeights weights;
  weights.config = config_;
  weights.names = names_;
  for (const auto &p : params_)
    weights.tensors.push_back(p.template cast<float>());
  return weights;
}

template class Hourglass<float>;
template class Hourglass<double>;

// ---------------------------------------------------------------------------
// Weight file: little-endian throughout.
//   magic "MASKFILL" | u32 version | u32 in_channels | u32 depth |
//   u32 base_channels | u32 max_channels | u32 skip | f32 leaky_slope |
//   u32 tensor_count | per tensor: u32 name_len, name, u32 rank, u32 dims[rank]
//   | raw f32 blobs in table order

namespace {

constexpr char kMagic[8] = {'M', 'A', 'S', 'K', 'F', 'I', 'L', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Reader {
public:
  Reader(std::string bytes, std::string path) : bytes_(std::move(bytes)), path_(std::move(path)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw TruncatedFileError(path_ + ": weight file truncated at byte " + std::to_string(pos_));
  }

  std::string bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

} // namespace

std::size_t weights_header_size(const ModelWeights &weights) {
  std::size_t size = sizeof(kMagic) + 4 * 7 + 4;
  for (std::size_t i = 0; i < weights.tensors.size(); ++i)
    size += 4 + weights.names[i].size() + 4 + 4 * weights.tensors[i].rank();
  return size;
}

void save_weights(const ModelWeights &weights, const std::filesystem::path &path) {
  expects(weights.names.size() == weights.tensors.size(), "save_weights: names/tensors differ");
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, weights.config.in_channels);
  put_u32(out, weights.config.depth);
  put_u32(out, weights.config.base_channels);
  put_u32(out, weights.config.max_channels);
  put_u32(out, weights.config.skip_connections ? 1u : 0u);
  put_u32(out, std::bit_cast<std::uint32_t>(weights.config.leaky_slope));
  put_u32(out, static_cast<std::uint32_t>(weights.tensors.size()));
  for (std::size_t i = 0; i < weights.tensors.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(weights.names[i].size()));
    out += weights.names[i];
    put_u32(out, static_cast<std::uint32_t>(weights.tensors[i].rank()));
    for (auto d : weights.tensors[i].shape())
      put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * weights.parameter_count());
  for (const auto &t : weights.tensors)
    for (float v : t.values())
      put_u32(out, std::bit_cast<std::uint32_t>(v));

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file)
    throw IoError(path.string() + ": cannot open for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file)
    throw IoError(path.string() + ": write failed");
}

ModelWeights load_weights(const std::filesystem::path &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file)
    throw IoError(path.string() + ": cannot open weight file");
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader in(std::move(bytes), path.string());

  if (in.remaining() < sizeof(kMagic))
    throw TruncatedFileError(path.string() + ": weight file truncated in magic");
  if (in.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic)))
    throw BadMagicError(path.string() + ": not a maskfill weight file (bad magic)");

  ModelWeights weights;
  weights.version = in.u32();
  if (weights.version != kVersion)
    throw UnsupportedFormatError(path.string() + ": unsupported weight format version " +
                                 std::to_string(weights.version));
  weights.config.in_channels = in.u32();
  weights.config.depth = in.u32();
  weights.config.base_channels = in.u32();
  weights.config.max_channels = in.u32();
  weights.config.skip_connections = in.u32() != 0;
  weights.config.leaky_slope = in.f32();
  const std::uint32_t count = in.u32();

  std::vector<Shape> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    weights.names.push_back(in.str(in.u32()));
    Shape shape(in.u32());
    for (auto &d : shape)
      d = in.u32();
    shapes.push_back(std::move(shape));
  }
  for (auto &shape : shapes) {
    std::vector<float> data(shape_numel(shape));
    for (auto &v : data)
      v = in.f32();
    weights.tensors.emplace_back(std::move(shape), std::move(data));
  }
  if (in.remaining() != 0)
    throw UnsupportedFormatError(path.string() + ": " + std::to_string(in.remaining()) +
                                 " trailing bytes after weight blobs");
  return weights;
}

ModelWeights load_weights(const std::filesystem::path &path, const HourglassConfig &expected) {
  ModelWeights weights = load_weights(path);
  if (!(weights.config == expected))
    throw ShapeMismatchError(path.string() + ": stored model config differs from the requested one");
  Hourglass<float> check(weights);
  (void)check;
  return weights;
}

} // namespace maskfill
