#include "malcnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <vector>

#include "malcnn/errors.hpp"
#include "malcnn/util.hpp"

namespace malcnn {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) const {
    if (bytes.size() - pos < n) throw FormatError(std::string("checkpoint: truncated ") + what, pos);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint32_t len = u32(what);
    need(len, what);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
    return s;
  }
};

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
  put_string(out, name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (std::size_t i = 0; i < t.numel(); ++i) put_f64(out, t[i]);
}

void read_tensor_into(Reader& r, const std::string& expected_name, Tensor& t) {
  const std::string name = r.str("tensor name");
  if (name != expected_name) {
    throw FormatError("checkpoint: tensor \"" + name + "\" where \"" + expected_name +
                          "\" was expected",
                      r.pos);
  }
  const std::uint32_t rank = r.u32("tensor rank");
  std::vector<std::size_t> shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) shape[i] = r.u64("tensor dim");
  if (shape != t.shape()) {
    throw FormatError("checkpoint: tensor \"" + name + "\" has shape " + shape_str(shape) +
                          ", layer specs imply " + shape_str(t.shape()),
                      r.pos);
  }
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = r.f64("tensor data");
}

}  // namespace

void save_checkpoint(Network& net, std::uint64_t seed, const std::string& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kVersion);
  put_u64(out, seed);
  put_u64(out, net.in_channels());
  put_u64(out, net.in_height());
  put_u64(out, net.in_width());
  put_u32(out, static_cast<std::uint32_t>(net.num_layers()));
  for (const LayerSpec& s : net.specs()) {
    put_u32(out, static_cast<std::uint32_t>(s.kind));
    put_u64(out, s.in_channels);
    put_u64(out, s.out_channels);
    put_u64(out, s.channels);
    put_u64(out, s.in_features);
    put_u64(out, s.out_features);
    put_f64(out, s.dropout_p);
    put_f64(out, s.bn_eps);
    put_f64(out, s.bn_momentum);
  }
  const auto params = net.params();
  const auto buffers = net.buffers();
  put_u32(out, static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (const ParamRef& p : params) put_tensor(out, p.name, *p.value);
  for (const ParamRef& b : buffers) put_tensor(out, b.name, *b.value);
  write_file_bytes(path, out.data(), out.size());
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  Reader r{bytes};
  r.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic", 0);
  }
  r.pos = 4;
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version), 4);
  }
  Checkpoint ck;
  ck.seed = r.u64("seed");
  const std::size_t in_c = r.u64("input channels");
  const std::size_t in_h = r.u64("input height");
  const std::size_t in_w = r.u64("input width");
  const std::uint32_t n_layers = r.u32("layer count");
  std::vector<LayerSpec> specs(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec& s = specs[i];
    const std::uint32_t kind = r.u32("layer kind");
    if (kind > static_cast<std::uint32_t>(LayerKind::kDropout)) {
      throw FormatError("checkpoint: unknown layer kind " + std::to_string(kind), r.pos);
    }
    s.kind = static_cast<LayerKind>(kind);
    s.in_channels = r.u64("in_channels");
    s.out_channels = r.u64("out_channels");
    s.channels = r.u64("channels");
    s.in_features = r.u64("in_features");
    s.out_features = r.u64("out_features");
    s.dropout_p = r.f64("dropout_p");
    s.bn_eps = r.f64("bn_eps");
    s.bn_momentum = r.f64("bn_momentum");
  }
  ck.net = std::make_unique<Network>(std::move(specs), in_c, in_h, in_w);
  const std::uint32_t n_tensors = r.u32("tensor count");
  const auto params = ck.net->params();
  const auto buffers = ck.net->buffers();
  if (n_tensors != params.size() + buffers.size()) {
    throw FormatError("checkpoint: tensor count " + std::to_string(n_tensors) +
                          " does not match the layer specs",
                      r.pos);
  }
  for (const ParamRef& p : params) read_tensor_into(r, p.name, *p.value);
  for (const ParamRef& b : buffers) read_tensor_into(r, b.name, *b.value);
  if (r.pos != bytes.size()) {
    throw FormatError("checkpoint: trailing bytes", r.pos);
  }
  return ck;
}

}  // namespace malcnn
