#include "temp/model/checkpoint.hpp"

#include <map>
#include <stdexcept>

#include "temp/model/binary_io.hpp"

namespace temp::model {

namespace {

constexpr char kMagic[8] = {'T', 'E', 'M', 'P', 'C', 'K', 'P', 'T'};

struct Array {
  diff::Shape shape;
  std::vector<float> values;
};

void write_array(BinaryWriter& w, const std::string& name, const diff::Shape& shape, std::span<const float> values) {
  w.str(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t e : shape) w.u32(static_cast<std::uint32_t>(e));
  w.f32s(values);
}

}  // namespace

void save_checkpoint(const std::string& path, const Extractor& extractor, const ClassifierHead* head) {
  const ExtractorConfig& cfg = extractor.config();
  const ParameterSet& params = extractor.params();
  BinaryWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  if (const auto* v = std::get_if<VectorInput>(&cfg.input)) {
    w.u32(0);
    w.u32(static_cast<std::uint32_t>(v->dim));
    w.u32(0);
    w.u32(0);
  } else {
    const auto& img = std::get<ImageInput>(cfg.input);
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(img.channels));
    w.u32(static_cast<std::uint32_t>(img.height));
    w.u32(static_cast<std::uint32_t>(img.width));
  }
  w.u32(static_cast<std::uint32_t>(cfg.feature_dim));
  w.u32(static_cast<std::uint32_t>(cfg.widths.size()));
  for (std::size_t width : cfg.widths) w.u32(static_cast<std::uint32_t>(width));
  w.u64(cfg.seed);

  std::uint32_t count = static_cast<std::uint32_t>(2 * params.size() + 3 * params.bn_layers().size() + (head ? 2 : 0));
  w.u32(count);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    write_array(w, "theta/" + e.name, e.value.shape(), e.value.values());
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    write_array(w, "theta0/" + e.name, e.value.shape(), e.source);
  }
  for (std::size_t l = 0; l < params.bn_layers().size(); ++l) {
    const BnState& bn = params.bn_layers()[l];
    const std::string prefix = "bn" + std::to_string(l);
    write_array(w, prefix + ".running_mean", {bn.channels()}, bn.running_mean);
    write_array(w, prefix + ".running_var", {bn.channels()}, bn.running_var);
    const float eps[1] = {bn.epsilon};
    write_array(w, prefix + ".epsilon", {1}, eps);
  }
  if (head) {
    write_array(w, "head.weight", head->weight.shape(), head->weight.values());
    write_array(w, "head.bias", head->bias.shape(), head->bias.values());
  }
  w.save(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  BinaryReader r = BinaryReader::open(path);
  auto magic = r.bytes(8);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw std::runtime_error(path + " is not a checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  ExtractorConfig cfg;
  const std::uint32_t kind = r.u32();
  const std::uint32_t d0 = r.u32(), d1 = r.u32(), d2 = r.u32();
  if (kind == 0) {
    cfg.input = VectorInput{d0};
  } else if (kind == 1) {
    cfg.input = ImageInput{d0, d1, d2};
  } else {
    throw std::runtime_error("unknown input kind in checkpoint");
  }
  cfg.feature_dim = r.u32();
  cfg.widths.resize(r.u32());
  for (std::size_t& width : cfg.widths) width = r.u32();
  cfg.seed = r.u64();

  std::map<std::string, Array> arrays;
  const std::uint32_t count = r.u32();
  for (std::uint32_t a = 0; a < count; ++a) {
    std::string name = r.str();
    Array arr;
    arr.shape.resize(r.u32());
    for (std::size_t& e : arr.shape) e = r.u32();
    arr.values = r.f32s(diff::shape_numel(arr.shape));
    arrays.emplace(std::move(name), std::move(arr));
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in checkpoint");

  auto take = [&](const std::string& name, const diff::Shape& shape) -> std::vector<float> {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint lacks array " + name);
    if (it->second.shape != shape) throw std::runtime_error("checkpoint array " + name + " has the wrong shape");
    return it->second.values;
  };

  Extractor extractor = Extractor::build(cfg);
  ParameterSet& params = extractor.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = params.entry(i).name;
    const diff::Shape shape = params.entry(i).value.shape();
    auto theta = take("theta/" + name, shape);
    std::copy(theta.begin(), theta.end(), params.tensor(i).mutable_values().begin());
    params.overwrite_source(i, take("theta0/" + name, shape));
  }
  for (std::size_t l = 0; l < params.bn_layers().size(); ++l) {
    BnState& bn = params.bn_layers()[l];
    const std::string prefix = "bn" + std::to_string(l);
    bn.running_mean = take(prefix + ".running_mean", {bn.channels()});
    bn.running_var = take(prefix + ".running_var", {bn.channels()});
    bn.epsilon = take(prefix + ".epsilon", {1})[0];
  }
  params.mask_bn_affine();

  std::optional<ClassifierHead> head;
  if (auto it = arrays.find("head.weight"); it != arrays.end()) {
    const diff::Shape shape = it->second.shape;
    if (shape.size() != 2 || shape[1] != cfg.feature_dim) throw std::runtime_error("bad classifier head shape");
    ClassifierHead h;
    h.weight = diff::Tensor::from(shape, it->second.values);
    h.bias = diff::Tensor::from({shape[0]}, take("head.bias", {shape[0]}));
    head = std::move(h);
  }
  return Checkpoint{std::move(extractor), std::move(head)};
}

}  // namespace temp::model
