#include "zonalseg/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "zonalseg/rng.hpp"

namespace zonalseg {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::unet: return "unet";
    case ModelVariant::enc_use: return "enc_use";
    case ModelVariant::enc_dec_use: return "enc_dec_use";
  }
  return "unet";
}

ModelVariant variant_from_string(std::string_view s) {
  if (s == "unet") return ModelVariant::unet;
  if (s == "enc_use") return ModelVariant::enc_use;
  if (s == "enc_dec_use") return ModelVariant::enc_dec_use;
  throw std::invalid_argument("unknown model variant '" + std::string(s) +
                              "' (expected unet, enc_use, enc_dec_use)");
}

void SEBlockSpec::validate(const std::string& site) const {
  if (channels == 0 || reduction == 0 || channels % reduction != 0) {
    throw std::invalid_argument("SE block at " + site + ": channel count " +
                                std::to_string(channels) +
                                " is not divisible by reduction " +
                                std::to_string(reduction));
  }
}

std::size_t ModelSpec::se_site_count() const {
  switch (variant) {
    case ModelVariant::unet: return 0;
    case ModelVariant::enc_use: return depth;
    case ModelVariant::enc_dec_use: return 2 * depth + 1;
  }
  return 0;
}

void ModelSpec::validate() const {
  if (depth < 1) throw std::invalid_argument("ModelSpec: depth must be >= 1");
  if (base_width < 1) throw std::invalid_argument("ModelSpec: base_width must be >= 1");
  if (in_channels < 1) throw std::invalid_argument("ModelSpec: in_channels must be >= 1");
  if (variant != ModelVariant::unet) {
    for (std::size_t level = 0; level <= depth; ++level) {
      const bool decoder_only = level == depth;
      if (decoder_only && variant != ModelVariant::enc_dec_use) continue;
      SEBlockSpec se{base_width << level, se_reduction};
      se.validate(level == depth ? "bottleneck" : "encoder level " + std::to_string(level));
    }
  }
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

const Tensor& ModelState::param(std::string_view name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw std::invalid_argument("ModelState: no parameter named '" + std::string(name) + "'");
}

Tensor& ModelState::param(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ModelState*>(this)->param(name));
}

bool ModelState::has_param(std::string_view name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return true;
  }
  return false;
}

namespace {

Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, sd);
  return t;
}

struct Builder {
  ModelState& state;
  Rng& rng;

  void conv(const std::string& name, std::size_t co, std::size_t ci,
            std::size_t k) {
    state.params.emplace_back(name + ".kernel",
                              he_normal(rng, {co, ci, k, k}, ci * k * k));
    state.params.emplace_back(name + ".bias", Tensor({co}));
  }
  void upconv(const std::string& name, std::size_t ci, std::size_t co) {
    state.params.emplace_back(name + ".kernel", he_normal(rng, {ci, co, 2, 2}, ci));
  }
  void se(const std::string& name, std::size_t channels, std::size_t reduction) {
    SEBlockSpec spec{channels, reduction};
    spec.validate(name);
    const std::size_t hidden = spec.hidden();
    state.params.emplace_back(name + ".reduce",
                              he_normal(rng, {channels, hidden}, channels));
    state.params.emplace_back(name + ".expand",
                              he_normal(rng, {hidden, channels}, hidden));
  }
};

}  // namespace

ModelState build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelState state;
  state.spec = spec;
  state.seed = seed;
  Rng rng = Rng(seed).fork("model:" + to_string(spec.variant));
  Builder b{state, rng};

  const bool se_enc = spec.variant != ModelVariant::unet;
  const bool se_dec = spec.variant == ModelVariant::enc_dec_use;

  std::size_t ci = spec.in_channels;
  for (std::size_t level = 0; level < spec.depth; ++level) {
    const std::size_t width = spec.base_width << level;
    const std::string prefix = "enc" + std::to_string(level);
    b.conv(prefix + ".conv1", width, ci, 3);
    b.conv(prefix + ".conv2", width, width, 3);
    if (se_enc) b.se(prefix + ".se", width, spec.se_reduction);
    ci = width;
  }

  const std::size_t bottleneck_width = spec.base_width << spec.depth;
  b.conv("bottleneck.conv1", bottleneck_width, ci, 3);
  b.conv("bottleneck.conv2", bottleneck_width, bottleneck_width, 3);
  if (se_dec) b.se("bottleneck.se", bottleneck_width, spec.se_reduction);

  for (std::size_t level = spec.depth; level-- > 0;) {
    const std::size_t width = spec.base_width << level;
    const std::string prefix = "dec" + std::to_string(level);
    b.upconv(prefix + ".up", width * 2, width);
    b.conv(prefix + ".conv1", width, width * 2, 3);
    b.conv(prefix + ".conv2", width, width, 3);
    if (se_dec) b.se(prefix + ".se", width, spec.se_reduction);
  }

  b.conv("head", 1, spec.base_width, 1);
  return state;
}

namespace {

struct GraphBuilder {
  Tape& tape;
  const ModelState& state;
  ForwardBinding& binding;
  std::size_t next_param = 0;

  VarId take(std::string_view name) {
    if (next_param >= state.params.size() ||
        state.params[next_param].first != name) {
      throw std::logic_error("model_forward: parameter order mismatch at '" +
                             std::string(name) + "'");
    }
    return binding.param_ids[next_param++];
  }

  VarId conv_relu(VarId x, const std::string& name) {
    const VarId k = take(name + ".kernel");
    const VarId bias = take(name + ".bias");
    return tape.activation(tape.conv2d(x, k, bias, Padding::same), Activation::relu);
  }

  VarId se(VarId x, const std::string& name, bool bypass) {
    const VarId reduce = take(name + ".reduce");
    const VarId expand = take(name + ".expand");
    if (bypass) return x;
    const VarId squeezed = tape.global_avg_pool(x);
    const VarId hidden = tape.activation(tape.matmul(squeezed, reduce), Activation::relu);
    const VarId gates = tape.activation(tape.matmul(hidden, expand), Activation::sigmoid);
    return tape.scale_channels(x, gates);
  }
};

}  // namespace

ForwardBinding model_forward(Tape& tape, const ModelState& state,
                             const Tensor& batch, const ForwardOptions& options) {
  const ModelSpec& spec = state.spec;
  if (batch.rank() != 4 || batch.dim(1) != spec.in_channels) {
    throw std::invalid_argument("model_forward: batch must be (B," +
                                std::to_string(spec.in_channels) + ",H,W), got " +
                                shape_str(batch.shape()));
  }
  const std::size_t div = std::size_t{1} << spec.depth;
  if (batch.dim(2) % div != 0 || batch.dim(3) % div != 0) {
    throw std::invalid_argument("model_forward: spatial size " +
                                std::to_string(batch.dim(2)) + "x" + std::to_string(batch.dim(3)) +
                                " not divisible by 2^depth = " + std::to_string(div));
  }

  ForwardBinding binding;
  binding.param_ids.reserve(state.params.size());
  for (const auto& [name, tensor] : state.params) {
    binding.param_ids.push_back(tape.input(tensor));
  }
  binding.input = tape.constant(batch);

  GraphBuilder g{tape, state, binding, 0};
  const bool se_enc = spec.variant != ModelVariant::unet;
  const bool se_dec = spec.variant == ModelVariant::enc_dec_use;

  VarId x = binding.input;
  std::vector<VarId> skips;
  for (std::size_t level = 0; level < spec.depth; ++level) {
    const std::string prefix = "enc" + std::to_string(level);
    x = g.conv_relu(x, prefix + ".conv1");
    x = g.conv_relu(x, prefix + ".conv2");
    if (se_enc) x = g.se(x, prefix + ".se", options.bypass_se);
    skips.push_back(x);
    x = tape.max_pool_2x2(x);
  }

  x = g.conv_relu(x, "bottleneck.conv1");
  x = g.conv_relu(x, "bottleneck.conv2");
  if (se_dec) x = g.se(x, "bottleneck.se", options.bypass_se);

  for (std::size_t level = spec.depth; level-- > 0;) {
    const std::string prefix = "dec" + std::to_string(level);
    const VarId up_kernel = g.take(prefix + ".up.kernel");
    x = tape.conv_transpose_2x2(x, up_kernel);
    x = tape.concat_channels(skips[level], x);
    x = g.conv_relu(x, prefix + ".conv1");
    x = g.conv_relu(x, prefix + ".conv2");
    if (se_dec) x = g.se(x, prefix + ".se", options.bypass_se);
  }

  const VarId head_k = g.take("head.kernel");
  const VarId head_b = g.take("head.bias");
  x = tape.activation(tape.conv2d(x, head_k, head_b, Padding::same), Activation::sigmoid);
  binding.output = x;

  if (!tape.value(x).all_finite()) {
    throw std::runtime_error("model_forward: non-finite activations in output");
  }
  return binding;
}

Tensor forward(const ModelState& state, const Tensor& batch,
               const ForwardOptions& options) {
  Tape tape;
  const ForwardBinding binding = model_forward(tape, state, batch, options);
  return tape.value(binding.output);
}

Tensor se_block_forward(const Tensor& features, const Tensor& w_reduce,
                        const Tensor& w_expand) {
  if (features.rank() != 4) {
    throw std::invalid_argument("se_block_forward: features must be (B,F,H,W), got " +
                                shape_str(features.shape()));
  }
  const std::size_t channels = features.dim(1);
  if (w_reduce.rank() != 2 || w_reduce.dim(0) != channels ||
      w_expand.rank() != 2 || w_expand.dim(1) != channels ||
      w_reduce.dim(1) != w_expand.dim(0)) {
    throw std::invalid_argument("se_block_forward: weight shapes " +
                                shape_str(w_reduce.shape()) + " and " +
                                shape_str(w_expand.shape()) +
                                " do not form a bottleneck over " +
                                std::to_string(channels) + " channels");
  }
  Tape tape;
  const VarId x = tape.constant(features);
  const VarId squeezed = tape.global_avg_pool(x);
  const VarId hidden = tape.activation(tape.matmul(squeezed, tape.constant(w_reduce)),
                                       Activation::relu);
  const VarId gates = tape.activation(tape.matmul(hidden, tape.constant(w_expand)),
                                      Activation::sigmoid);
  return tape.value(tape.scale_channels(x, gates));
}

void save_checkpoint(const ModelState& state, const std::filesystem::path& path) {
  json header;
  header["format"] = "zonalseg-checkpoint";
  header["version"] = 1;
  header["seed"] = state.seed;
  header["spec"] = {{"variant", to_string(state.spec.variant)},
                    {"depth", state.spec.depth},
                    {"base_width", state.spec.base_width},
                    {"se_reduction", state.spec.se_reduction},
                    {"in_channels", state.spec.in_channels}};
  json arrays = json::array();
  for (const auto& [name, tensor] : state.params) {
    arrays.push_back({{"name", name}, {"shape", tensor.shape()}});
  }
  header["arrays"] = arrays;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write("ZSCKPT01", 8);
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, tensor] : state.params) {
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "ZSCKPT01", 8) != 0) {
    throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint file");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(header_str);

  ModelState state;
  state.seed = header.at("seed").get<std::uint64_t>();
  const json& spec = header.at("spec");
  state.spec.variant = variant_from_string(spec.at("variant").get<std::string>());
  state.spec.depth = spec.at("depth").get<std::size_t>();
  state.spec.base_width = spec.at("base_width").get<std::size_t>();
  state.spec.se_reduction = spec.at("se_reduction").get<std::size_t>();
  state.spec.in_channels = spec.at("in_channels").get<std::size_t>();

  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    state.params.emplace_back(name, std::move(t));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path.string());
  return state;
}

}  // namespace zonalseg
