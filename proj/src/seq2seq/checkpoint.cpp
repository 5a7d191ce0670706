#include "gst/seq2seq/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gst/errors.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::seq2seq {

namespace {

constexpr char kMagic[8] = {'G', 'S', 'T', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(pos_ + i)) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  unsigned char byte(std::size_t i) const { return static_cast<unsigned char>(in_[i]); }
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw FormatError("checkpoint: truncated file");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize(const Checkpoint& ckpt, std::uint64_t vocab_hash) {
  const ModelParams& p = ckpt.params;
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u64(p.config.hash());
  w.u64(vocab_hash);
  w.u64(ckpt.seed);
  const ModelConfig& c = p.config;
  for (int v : {c.vocab_size, c.d_model, c.heads, c.ffn, c.feature_dim, c.regions, c.max_ctx,
                c.max_target}) {
    w.i32(v);
  }
  w.u32(p.role == Role::Answerer ? 0 : 1);
  const auto named = p.named();
  w.u32(static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t->rank()));
    for (std::size_t d : t->shape()) w.u64(d);
    for (double x : t->data()) w.f64(x);
  }
  return w.take();
}

Checkpoint deserialize(const std::string& bytes, std::uint64_t expected_vocab_hash) {
  Reader r(bytes);
  if (r.str(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw FormatError("checkpoint: bad magic");
  }
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format_version " + std::to_string(v));
  }
  const std::uint64_t config_hash = r.u64();
  const std::uint64_t vocab_hash = r.u64();
  if (vocab_hash != expected_vocab_hash) {
    throw HashMismatchError("checkpoint: vocabulary hash mismatch");
  }
  Checkpoint ckpt;
  ckpt.seed = r.u64();
  ModelConfig c;
  for (int* f : {&c.vocab_size, &c.d_model, &c.heads, &c.ffn, &c.feature_dim, &c.regions,
                 &c.max_ctx, &c.max_target}) {
    *f = r.i32();
  }
  if (c.hash() != config_hash) throw HashMismatchError("checkpoint: config hash mismatch");
  const std::uint32_t role = r.u32();
  if (role > 1) throw FormatError("checkpoint: bad role");

  // Initialize for the layout, then overwrite every array by name.
  ModelParams p = ModelParams::init(c, role == 0 ? Role::Answerer : Role::Questioner, 0);
  auto named = p.named();
  if (r.u32() != named.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (auto& [name, t] : named) {
    const std::string got = r.str(r.u32());
    if (got != name) throw FormatError("checkpoint: expected '" + name + "', found '" + got + "'");
    numkit::Shape shape(r.u32());
    for (auto& d : shape) d = r.u64();
    if (shape != t->shape()) throw FormatError("checkpoint: shape mismatch for " + name);
    std::vector<double> values(t->size());
    for (double& x : values) x = r.f64();
    *t = Tensor::from_data(shape, std::move(values), true);
  }
  if (!r.done()) throw FormatError("checkpoint: trailing bytes");
  ckpt.params = std::move(p);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize(ckpt, toyworld::Vocab::standard().hash());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("checkpoint: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), toyworld::Vocab::standard().hash());
}

}  // namespace gst::seq2seq
