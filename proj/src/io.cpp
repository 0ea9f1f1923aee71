#include "simnet/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include "simnet/error.hpp"

static_assert(std::endian::native == std::endian::little, "only little-endian hosts are supported");

namespace simnet {
namespace {

constexpr char kStoreMagic[4] = {'S', 'I', 'M', 'F'};
constexpr char kCheckpointMagic[4] = {'S', 'I', 'M', 'C'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_magic(const char (&m)[4]) { bytes_.insert(bytes_.end(), m, m + 4); }
  void put_u32(std::size_t v, const char* what) {
    if (v > UINT32_MAX) throw InvalidArgument(std::string(what) + " does not fit in 32 bits");
    put(static_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void expect_magic(const char (&m)[4]) {
    need(4, "magic");
    if (std::memcmp(bytes_.data() + pos_, m, 4) != 0) {
      throw FormatError("bad magic, expected \"" + std::string(m, 4) + "\"", pos_);
    }
    pos_ += 4;
  }
  void need(std::uint64_t n, const char* what) const {
    if (n > remaining()) {
      throw FormatError(std::string("truncated file while reading ") + what + " (need " +
                            std::to_string(n) + " bytes, " + std::to_string(remaining()) + " left)",
                        pos_);
    }
  }
  std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::uint64_t offset() const noexcept { return pos_; }
  void expect_end() const {
    if (remaining() != 0) {
      throw FormatError(std::to_string(remaining()) + " unexpected trailing bytes", pos_);
    }
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::uint64_t pos_ = 0;
};

void check_version(Reader& r, std::uint32_t supported) {
  const std::uint64_t at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != supported) {
    throw FormatError("unsupported format version " + std::to_string(version) + " (this build reads " +
                          std::to_string(supported) + ")",
                      at);
  }
}

std::filesystem::path sidecar(const std::filesystem::path& store, const char* ext) {
  auto p = store;
  p += ext;
  return p;
}

bool ids_are_indices(const Dataset& d) {
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    if (d.ids[i] != std::to_string(i)) return false;
  }
  return true;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---- checkpoint payloads ----

void put_network(Writer& w, const nn::Network& net) {
  w.put_u32(net.input_dim(), "network input dim");
  w.put_u32(net.layers().size(), "layer count");
  for (const auto& layer : net.layers()) {
    w.put_u32(layer.weights.rows(), "layer width");
    w.put_u32(layer.weights.cols(), "layer input width");
    w.put(static_cast<std::uint8_t>(layer.activation));
    for (double v : layer.weights.values()) w.put(v);
    for (double v : layer.bias) w.put(v);
  }
}

nn::Network get_network(Reader& r) {
  const std::uint64_t start = r.offset();
  const auto input_dim = r.get<std::uint32_t>("network input dim");
  const auto n_layers = r.get<std::uint32_t>("layer count");
  std::vector<nn::DenseLayer> layers;
  std::size_t expected_in = input_dim;
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    const std::uint64_t at = r.offset();
    const auto out = r.get<std::uint32_t>("layer width");
    const auto in = r.get<std::uint32_t>("layer input width");
    if (in != expected_in) {
      throw FormatError("layer " + std::to_string(l) + " expects " + std::to_string(in) +
                            " inputs but the previous layer produces " + std::to_string(expected_in),
                        at);
    }
    const std::uint64_t act_at = r.offset();
    const auto act = r.get<std::uint8_t>("activation");
    if (act > static_cast<std::uint8_t>(nn::Activation::Identity)) {
      throw FormatError("unknown activation code " + std::to_string(act), act_at);
    }
    r.need((static_cast<std::uint64_t>(out) * in + out) * sizeof(double), "layer parameters");
    nn::DenseLayer layer;
    layer.activation = static_cast<nn::Activation>(act);
    layer.weights = Matrix(out, in);
    for (double& v : layer.weights.values()) v = r.get<double>("weight");
    layer.bias.resize(out);
    for (double& v : layer.bias) v = r.get<double>("bias");
    layers.push_back(std::move(layer));
    expected_in = out;
  }
  try {
    return nn::Network(input_dim, std::move(layers));
  } catch (const Error& e) {
    throw FormatError(std::string("invalid network: ") + e.what(), start);
  }
}

void put_simnet(Writer& w, const SimNetModel& m) {
  w.put(static_cast<std::uint8_t>(m.arch.preset));
  w.put_u32(m.arch.feature_dim, "feature dim");
  w.put(m.arch.width_scale);
  w.put(static_cast<std::uint8_t>(m.input_norm));
  w.put_u32(m.arch.hidden_dims.size(), "hidden layer count");
  for (std::size_t d : m.arch.hidden_dims) w.put_u32(d, "hidden dim");
  put_network(w, m.net);
}

SimNetModel get_simnet(Reader& r) {
  const std::uint64_t preset_at = r.offset();
  const auto preset = r.get<std::uint8_t>("arch preset");
  if (preset > static_cast<std::uint8_t>(ArchPreset::Custom)) {
    throw FormatError("unknown arch preset code " + std::to_string(preset), preset_at);
  }
  ArchConfig arch;
  arch.preset = static_cast<ArchPreset>(preset);
  arch.feature_dim = r.get<std::uint32_t>("feature dim");
  arch.width_scale = r.get<double>("width scale");
  const std::uint64_t norm_at = r.offset();
  const auto norm = r.get<std::uint8_t>("input normalization");
  if (norm > static_cast<std::uint8_t>(InputNorm::None)) {
    throw FormatError("unknown input normalization code " + std::to_string(norm), norm_at);
  }
  const auto n_hidden = r.get<std::uint32_t>("hidden layer count");
  r.need(static_cast<std::uint64_t>(n_hidden) * 4, "hidden dims");
  for (std::uint32_t h = 0; h < n_hidden; ++h) arch.hidden_dims.push_back(r.get<std::uint32_t>("hidden dim"));
  const std::uint64_t net_at = r.offset();
  SimNetModel m{arch, get_network(r), static_cast<InputNorm>(norm)};
  try {
    arch.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("invalid architecture: ") + e.what(), preset_at);
  }
  const auto dims = arch.scaled_hidden_dims();
  bool consistent = m.net.input_dim() == arch.input_dim() && m.net.layers().size() == dims.size() + 1;
  for (std::size_t l = 0; consistent && l < dims.size(); ++l) {
    consistent = m.net.layer(l).weights.rows() == dims[l];
  }
  if (!consistent || !m.net.has_standard_topology()) {
    throw FormatError("network does not match the stored architecture", net_at);
  }
  return m;
}

void put_linear(Writer& w, const LinearModel& m) {
  w.put_u32(m.feature_dim(), "feature dim");
  for (double v : m.weights) w.put(v);
  w.put(m.bias);
}

LinearModel get_linear(Reader& r) {
  const auto k = r.get<std::uint32_t>("feature dim");
  r.need((2 * static_cast<std::uint64_t>(k) + 1) * sizeof(double), "linear parameters");
  LinearModel m;
  m.weights.resize(2 * static_cast<std::size_t>(k));
  for (double& v : m.weights) v = r.get<double>("weight");
  m.bias = r.get<double>("bias");
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_feature_store(const Dataset& dataset) {
  dataset.validate();
  Writer w;
  w.put_magic(kStoreMagic);
  w.put(kFeatureStoreVersion);
  w.put(static_cast<std::uint64_t>(dataset.size()));
  w.put_u32(dataset.dim(), "feature dim");
  w.put(static_cast<std::uint8_t>(dataset.has_labels() ? 1 : 0));
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.has_labels()) w.put(dataset.labels[i]);
    for (double v : dataset.feature(i)) w.put(static_cast<float>(v));
  }
  return w.take();
}

Dataset decode_feature_store(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic(kStoreMagic);
  check_version(r, kFeatureStoreVersion);
  const auto n = r.get<std::uint64_t>("record count");
  const auto k = r.get<std::uint32_t>("feature dim");
  const std::uint64_t kind_at = r.offset();
  const auto label_kind = r.get<std::uint8_t>("label kind");
  if (label_kind > 1) throw FormatError("unknown label kind " + std::to_string(label_kind), kind_at);

  const std::uint64_t record = (label_kind ? 4u : 0u) + 4ull * k;
  if (record == 0 && n > 0) throw FormatError("zero-width records with a nonzero count", kind_at);
  if (record > 0 && n > r.remaining() / record) {
    throw FormatError("truncated file: header declares " + std::to_string(n) + " records of " +
                          std::to_string(record) + " bytes but only " +
                          std::to_string(r.remaining()) + " bytes follow",
                      r.offset());
  }
  if (record > 0 && r.remaining() != n * record) {
    throw FormatError("file length does not match " + std::to_string(n) + " records of dim " +
                          std::to_string(k),
                      r.offset() + n * record);
  }

  Dataset d;
  d.features = Matrix(static_cast<std::size_t>(n), k);
  if (label_kind) d.labels.resize(static_cast<std::size_t>(n));
  d.ids.reserve(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (label_kind) d.labels[i] = r.get<std::int32_t>("label");
    auto row = d.features.row(i);
    for (std::size_t c = 0; c < k; ++c) row[c] = static_cast<double>(r.get<float>("feature"));
    d.ids.push_back(std::to_string(i));
  }
  r.expect_end();
  return d;
}

void write_feature_store(const std::filesystem::path& path, const Dataset& dataset) {
  const auto bytes = encode_feature_store(dataset);
  const auto ids_path = sidecar(path, ".ids");
  const auto queries_path = sidecar(path, ".queries");
  if (!ids_are_indices(dataset)) {
    std::string text;
    for (const auto& id : dataset.ids) {
      if (id.find('\n') != std::string::npos) throw InvalidArgument("id contains a newline: " + id);
      text += id + "\n";
    }
    write_text_atomic(ids_path, text);
  } else {
    std::filesystem::remove(ids_path);
  }
  if (!dataset.query_indices.empty()) {
    std::string text;
    for (std::size_t q : dataset.query_indices) text += std::to_string(q) + "\n";
    write_text_atomic(queries_path, text);
  } else {
    std::filesystem::remove(queries_path);
  }
  write_file_atomic(path, bytes);
}

Dataset read_feature_store(const std::filesystem::path& path) {
  Dataset d = decode_feature_store(read_file_bytes(path));
  d.name = path.stem().string();
  const auto ids_path = sidecar(path, ".ids");
  if (std::filesystem::exists(ids_path)) {
    auto ids = read_lines(ids_path);
    if (ids.size() != d.size()) throw DimensionError("id sidecar " + ids_path.string(), d.size(), ids.size());
    d.ids = std::move(ids);
  }
  const auto queries_path = sidecar(path, ".queries");
  if (std::filesystem::exists(queries_path)) {
    for (const auto& line : read_lines(queries_path)) {
      if (line.empty()) continue;
      std::size_t used = 0;
      unsigned long long q = 0;
      try {
        q = std::stoull(line, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != line.size()) throw Error("bad query index '" + line + "' in " + queries_path.string());
      d.query_indices.push_back(static_cast<std::size_t>(q));
    }
  }
  d.validate();
  return d;
}

ModelKind kind_of(const AnyModel& model) noexcept {
  switch (model.index()) {
    case 0: return ModelKind::SimNet;
    case 1: return ModelKind::Linear;
    default: return ModelKind::EncoderSimNet;
  }
}

std::vector<std::uint8_t> encode_checkpoint(const AnyModel& model) {
  Writer w;
  w.put_magic(kCheckpointMagic);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint8_t>(kind_of(model)));
  if (const auto* s = std::get_if<SimNetModel>(&model)) {
    put_simnet(w, *s);
  } else if (const auto* l = std::get_if<LinearModel>(&model)) {
    put_linear(w, *l);
  } else {
    const auto& e = std::get<EncoderSimNet>(model);
    put_network(w, e.encoder);
    put_simnet(w, e.model);
  }
  return w.take();
}

AnyModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic(kCheckpointMagic);
  check_version(r, kCheckpointVersion);
  const std::uint64_t kind_at = r.offset();
  const auto kind = r.get<std::uint8_t>("model kind");
  AnyModel out;
  switch (kind) {
    case static_cast<std::uint8_t>(ModelKind::SimNet):
      out = get_simnet(r);
      break;
    case static_cast<std::uint8_t>(ModelKind::Linear):
      out = get_linear(r);
      break;
    case static_cast<std::uint8_t>(ModelKind::EncoderSimNet): {
      const std::uint64_t enc_at = r.offset();
      nn::Network encoder = get_network(r);
      SimNetModel model = get_simnet(r);
      if (!encoder.layers().empty() && encoder.output_dim() != model.feature_dim()) {
        throw FormatError("encoder output does not match the similarity network input", enc_at);
      }
      out = EncoderSimNet{std::move(encoder), std::move(model)};
      break;
    }
    default:
      throw FormatError("unknown model kind " + std::to_string(kind), kind_at);
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const AnyModel& model) {
  write_file_atomic(path, encode_checkpoint(model));
}

AnyModel load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

namespace {

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::SimNet: return "simnet";
    case ModelKind::Linear: return "linear";
    case ModelKind::EncoderSimNet: return "encoder+simnet";
  }
  return "unknown";
}

template <typename T>
T load_typed(const std::filesystem::path& path, ModelKind want) {
  AnyModel m = load_checkpoint(path);
  if (kind_of(m) != want) {
    throw FormatError(path.string() + ": checkpoint holds a " + kind_name(kind_of(m)) +
                          " model, expected " + kind_name(want),
                      8);
  }
  return std::get<T>(std::move(m));
}

}  // namespace

SimNetModel load_simnet(const std::filesystem::path& path) {
  return load_typed<SimNetModel>(path, ModelKind::SimNet);
}

LinearModel load_linear(const std::filesystem::path& path) {
  return load_typed<LinearModel>(path, ModelKind::Linear);
}

EncoderSimNet load_encoder_simnet(const std::filesystem::path& path) {
  return load_typed<EncoderSimNet>(path, ModelKind::EncoderSimNet);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("write failed: " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace simnet
