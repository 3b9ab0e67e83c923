#include "gapforge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "gapforge/errors.hpp"

namespace gapforge {

static_assert(std::numeric_limits<double>::is_iec559,
              "IEEE-754 doubles required");

namespace {

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::byte>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes) : bytes_(bytes) {}

  std::size_t consumed() const { return pos_; }

  void raw(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size())
      throw IoError("checkpoint: truncated payload");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }

  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  void f64_block(double* dst, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = f64();
  }

 private:
  std::uint8_t byte() {
    if (pos_ >= bytes_.size()) throw IoError("checkpoint: truncated payload");
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

void put_vec(std::vector<std::byte>& out, const std::vector<double>& v) {
  for (double x : v) put_f64(out, x);
}

}  // namespace

std::vector<std::byte> serialize_params(const ModelParams& params) {
  params.validate();
  std::vector<std::byte> out;
  out.reserve(20 + params.layers.size() * 12);
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::byte>(c));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    put_u32(out, static_cast<std::uint32_t>(l.spec.in_dim));
    put_u32(out, static_cast<std::uint32_t>(l.spec.out_dim));
    const std::uint32_t flags =
        (l.spec.batchnorm ? 1u : 0u) |
        (static_cast<std::uint32_t>(l.spec.activation) << 1);
    put_u32(out, flags);
  }
  for (const auto& l : params.layers) {
    for (double v : l.w.flat()) put_f64(out, v);
    put_vec(out, l.b);
    put_vec(out, l.bn_gamma);
    put_vec(out, l.bn_beta);
    put_vec(out, l.bn_running_mean);
    put_vec(out, l.bn_running_var);
  }
  return out;
}

ModelParams deserialize_params(std::span<const std::byte> bytes,
                               std::size_t* consumed) {
  Reader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint: unsupported format version " +
                  std::to_string(version));
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0) throw IoError("checkpoint: zero layers");

  ModelParams p;
  p.layers.resize(n_layers);
  for (auto& l : p.layers) {
    l.spec.in_dim = r.u32();
    l.spec.out_dim = r.u32();
    const std::uint32_t flags = r.u32();
    l.spec.batchnorm = (flags & 1u) != 0;
    const std::uint32_t act = (flags >> 1) & 3u;
    if (act > 2u) throw IoError("checkpoint: unknown activation code");
    l.spec.activation = static_cast<Activation>(act);
  }
  for (auto& l : p.layers) {
    l.w = Matrix(l.spec.out_dim, l.spec.in_dim);
    r.f64_block(l.w.data(), l.w.size());
    l.b.resize(l.spec.batchnorm ? 0 : l.spec.out_dim);
    r.f64_block(l.b.data(), l.b.size());
    if (l.spec.batchnorm) {
      for (auto* vec :
           {&l.bn_gamma, &l.bn_beta, &l.bn_running_mean, &l.bn_running_var}) {
        vec->resize(l.spec.out_dim);
        r.f64_block(vec->data(), vec->size());
      }
    }
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  if (consumed) *consumed = r.consumed();
  return p;
}

void save_params(const std::filesystem::path& path, const ModelParams& params) {
  const auto bytes = serialize_params(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  return deserialize_params(
      std::as_bytes(std::span<const char>(raw.data(), raw.size())));
}

std::vector<std::byte> serialize_disc_payload(const ModelParams& params,
                                              const AdamState& opt) {
  std::vector<std::byte> out = serialize_params(params);
  put_u64(out, opt.step);
  put_f64(out, opt.lr);
  put_f64(out, opt.beta1);
  put_f64(out, opt.beta2);
  put_f64(out, opt.eps);
  for (const GradStore* store : {&opt.m, &opt.v}) {
    visit_grads(const_cast<GradStore&>(*store),
                [&](double& v) { put_f64(out, v); });
  }
  return out;
}

void deserialize_disc_payload(std::span<const std::byte> bytes,
                              ModelParams& params, AdamState& opt) {
  std::size_t consumed = 0;
  params = deserialize_params(bytes, &consumed);
  Reader r(bytes.subspan(consumed));
  opt.step = r.u64();
  opt.lr = r.f64();
  opt.beta1 = r.f64();
  opt.beta2 = r.f64();
  opt.eps = r.f64();
  opt.m = GradStore::zeros_like(params);
  opt.v = GradStore::zeros_like(params);
  for (GradStore* store : {&opt.m, &opt.v})
    visit_grads(*store, [&](double& v) { v = r.f64(); });
}

}  // namespace gapforge
