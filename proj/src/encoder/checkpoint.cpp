#include "ps3/encoder/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ps3/core/errors.hpp"

namespace ps3 {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'S', '3', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw DataError(source_ + ": checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string cfg = nlohmann::json(ckpt.config).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put<std::uint64_t>(out, d);
    put<std::uint8_t>(out, 0);
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (r.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw DataError(source + ": not a checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string cfg = r.bytes(r.get<std::uint32_t>());
  try {
    ck.config = nlohmann::json::parse(cfg).get<EncoderConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(source + ": bad config header: " + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>()));
    if (r.get<std::uint8_t>() != 0) throw DataError(source + ": tensor " + name + " has an unknown dtype");
    Tensor<float> t(shape);
    std::string raw = r.bytes(t.size() * sizeof(float));
    std::memcpy(t.data(), raw.data(), raw.size());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) throw DataError(source + ": trailing bytes after checkpoint");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  // Write then rename so an interrupted run never leaves a half-written file.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str(), path.string());
}

Checkpoint make_checkpoint(const Ps3Model<float>& model, std::vector<std::pair<std::string, Tensor<float>>> extra) {
  Checkpoint ck;
  ck.config = model.cfg;
  for (std::size_t i = 0; i < model.params.size(); ++i)
    ck.tensors.emplace_back(model.params.names()[i], model.params.tensors()[i]);
  for (auto& e : extra) ck.tensors.push_back(std::move(e));
  return ck;
}

Ps3Model<float> model_from_checkpoint(const Checkpoint& ckpt) {
  ParameterSet<float> ps;
  for (const auto& [name, shape] : parameter_layout(ckpt.config)) {
    const Tensor<float>* t = ckpt.find(name);
    if (!t) throw DataError("checkpoint lacks parameter " + name);
    ps.add(name, *t);
  }
  try {
    return Ps3Model<float>(ckpt.config, std::move(ps));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ps3
