#include <bit>
#include <cmath>
#include <cstring>

#include "ulrn/errors.hpp"
#include "ulrn/hashing.hpp"
#include "ulrn/model/transformer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace ulrn::model {

namespace {

constexpr std::string_view kMagic = "ULRN1";
constexpr std::string_view kConfigTensor = "meta.config";
constexpr std::size_t kConfigFields = 9;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::vector<float> encode_config(const ModelConfig& c) {
  return {static_cast<float>(c.vocab_size), static_cast<float>(c.hidden_size),
          static_cast<float>(c.ffn_size),   static_cast<float>(c.n_heads),
          static_cast<float>(c.n_layers),   static_cast<float>(c.max_context),
          c.rope_base,                      static_cast<float>(c.activation),
          c.norm_eps};
}

std::size_t as_size(float v, const char* field) {
  require(std::isfinite(v) && v >= 0.0f && v == std::floor(v) && v < 1e9f, ErrorKind::kFormat,
          std::string("checkpoint config field ") + field + " is not a count");
  return static_cast<std::size_t>(v);
}

ModelConfig decode_config(const std::vector<float>& v) {
  ModelConfig c;
  c.vocab_size = as_size(v[0], "vocab_size");
  c.hidden_size = as_size(v[1], "hidden_size");
  c.ffn_size = as_size(v[2], "ffn_size");
  c.n_heads = as_size(v[3], "n_heads");
  c.n_layers = as_size(v[4], "n_layers");
  c.max_context = as_size(v[5], "max_context");
  c.rope_base = v[6];
  const std::size_t act = as_size(v[7], "activation");
  require(act <= 1, ErrorKind::kFormat, "checkpoint has unknown activation code");
  c.activation = static_cast<Activation>(act);
  c.norm_eps = v[8];
  return c;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::kTruncated, std::string("checkpoint ends inside ") + what);
    }
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  ad::Shape shape;
};

}  // namespace

std::string serialize_checkpoint(const ModelParameters& params) {
  std::vector<NamedTensor> all;
  all.push_back({std::string(kConfigTensor), {kConfigFields},
                 std::make_shared<std::vector<float>>(encode_config(params.config()))});
  for (const NamedTensor& t : params.tensors()) all.push_back(t);

  std::string out(kMagic);
  put_u32(out, static_cast<std::uint32_t>(all.size()));
  for (const NamedTensor& t : all) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t payload_begin = out.size();
  for (const NamedTensor& t : all) {
    out.append(reinterpret_cast<const char*>(t.values->data()), t.values->size() * sizeof(float));
  }
  const auto payload = std::as_bytes(std::span<const char>(out).subspan(payload_begin));
  put_u32(out, crc32(payload));
  return out;
}

void save_checkpoint(const ModelParameters& params, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(params));
}

ModelParameters parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kMagic.size()) {
    require(kMagic.starts_with(bytes), ErrorKind::kFormat, "not a checkpoint (bad magic)");
    fail(ErrorKind::kTruncated, "checkpoint ends inside the magic header");
  }
  require(bytes.substr(0, kMagic.size()) == kMagic, ErrorKind::kFormat,
          "not a checkpoint (bad magic)");
  Reader in(bytes.substr(kMagic.size()));
  const std::uint32_t count = in.u32("the tensor count");
  require(count >= 1 && count < 100000, ErrorKind::kFormat, "implausible tensor count");

  std::vector<Entry> entries;
  std::size_t payload_floats = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const std::uint32_t len = in.u32("a tensor name length");
    require(len > 0 && len < 4096, ErrorKind::kFormat, "implausible tensor name length");
    e.name = std::string(in.take(len, "a tensor name"));
    const std::uint32_t rank = in.u32("a tensor rank");
    require(rank >= 1 && rank <= 8, ErrorKind::kFormat,
            "tensor '" + e.name + "' has implausible rank " + std::to_string(rank));
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(in.u32("a tensor shape"));
    payload_floats += ad::numel(e.shape);
    entries.push_back(std::move(e));
  }
  require(entries[0].name == kConfigTensor && entries[0].shape == ad::Shape{kConfigFields},
          ErrorKind::kFormat, "checkpoint lacks its config record");

  const std::size_t payload_begin = in.position();
  std::vector<std::shared_ptr<std::vector<float>>> values;
  for (const Entry& e : entries) {
    auto v = std::make_shared<std::vector<float>>(ad::numel(e.shape));
    auto raw = in.take(v->size() * sizeof(float), ("the payload of '" + e.name + "'").c_str());
    std::memcpy(v->data(), raw.data(), raw.size());
    values.push_back(std::move(v));
  }
  const std::uint32_t stored = in.u32("the checksum");
  require(in.remaining() == 0, ErrorKind::kFormat, "trailing bytes after checkpoint checksum");
  const auto payload = std::as_bytes(std::span<const char>(
      bytes.data() + kMagic.size() + payload_begin, payload_floats * sizeof(float)));
  require(crc32(payload) == stored, ErrorKind::kIntegrity, "checkpoint checksum mismatch");

  const ModelConfig config = decode_config(*values[0]);
  std::vector<NamedTensor> tensors;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    tensors.push_back({entries[i].name, entries[i].shape, values[i]});
  }
  return ModelParameters(config, std::move(tensors));
}

ModelParameters load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path));
}

ModelParameters load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  ModelParameters params = load_checkpoint(path);
  const auto want = ModelParameters::layout(expected);
  const auto& have = params.tensors();
  for (std::size_t i = 0; i < std::max(want.size(), have.size()); ++i) {
    if (i >= want.size()) fail(ErrorKind::kShape, "unexpected tensor '" + have[i].name + "'");
    if (i >= have.size()) fail(ErrorKind::kShape, "missing tensor '" + want[i].first + "'");
    require(have[i].name == want[i].first, ErrorKind::kShape,
            "expected tensor '" + want[i].first + "', found '" + have[i].name + "'");
    require(have[i].shape == want[i].second, ErrorKind::kShape,
            "tensor '" + have[i].name + "' has shape " + ad::shape_string(have[i].shape) +
                ", expected " + ad::shape_string(want[i].second));
  }
  require(params.config() == expected, ErrorKind::kShape,
          "checkpoint model config differs from the expected one");
  return params;
}

}  // namespace ulrn::model
