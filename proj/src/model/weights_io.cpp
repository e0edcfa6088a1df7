#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "seecg/model.hpp"
#include "seecg/random.hpp"

namespace seecg {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'E', 'C', 'G', 'W', 'T', 'S'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end, std::string path) : buf_(buf), end_(end), path_(std::move(path)) {}

  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw FormatError(path_ + ": truncated weight file at byte " + std::to_string(pos_));
  }
  template <typename U>
  U le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string path_;
};

template <typename T>
std::vector<ParamRef<T>> all_tensors(Model<T>& model) {
  auto out = model.parameters();
  for (auto& b : model.buffers()) out.push_back(b);
  return out;
}

}  // namespace

template <typename T>
void save_weights(Model<T>& model, const std::filesystem::path& path) {
  const auto tensors = all_tensors(model);
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.le<std::uint32_t>(kWeightFormatVersion);
  w.le<std::uint64_t>(model.config.fingerprint());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& p : tensors) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(p.tensor->rank()));
    for (std::size_t e : p.tensor->shape()) w.le<std::uint64_t>(e);
    for (T v : p.tensor->data()) w.f32(static_cast<float>(v));
  }
  w.le<std::uint64_t>(fnv1a64(w.str()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!out) throw Error("failed writing " + path.string());
}

template <typename T>
Model<T> load_weights(const ModelConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string();

  if (buf.size() < sizeof kMagic + 4 + 8 + 4 + 8) throw FormatError(where + ": truncated weight file");
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw FormatError(where + ": not a weight file");

  Reader header(buf, buf.size(), where);
  (void)header.str(sizeof kMagic);
  const auto version = header.le<std::uint32_t>();
  if (version != kWeightFormatVersion) {
    throw FormatError(where + ": unsupported format version " + std::to_string(version));
  }
  const auto fingerprint = header.le<std::uint64_t>();
  if (fingerprint != config.fingerprint()) {
    throw ConfigMismatchError(where + ": weights were saved for a different model config (expected fingerprint " +
                              std::to_string(config.fingerprint()) + ", file has " + std::to_string(fingerprint) +
                              "; config: " + config.canonical() + ")");
  }

  const std::size_t body = buf.size() - 8;
  Reader tail(buf, buf.size(), where);
  (void)tail.str(body);
  if (tail.le<std::uint64_t>() != fnv1a64(std::string_view(buf.data(), body))) {
    throw FormatError(where + ": checksum mismatch (file truncated or corrupted)");
  }

  Model<T> model = build<T>(config, 0);
  std::map<std::string, Tensor<T>*> slots;
  for (const auto& p : all_tensors(model)) slots.emplace(p.name, p.tensor);

  // Decode everything into staging tensors first; the model is only touched once the file is known good.
  Reader r(buf, body, where);
  (void)r.str(sizeof kMagic + 4 + 8);
  const auto count = r.le<std::uint32_t>();
  if (count != slots.size()) {
    throw FormatError(where + ": file holds " + std::to_string(count) + " tensors, model has " +
                      std::to_string(slots.size()));
  }
  std::map<std::string, Tensor<T>> staged;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.le<std::uint32_t>());
    auto slot = slots.find(name);
    if (slot == slots.end()) throw FormatError(where + ": unknown tensor '" + name + "'");
    if (staged.count(name)) throw FormatError(where + ": duplicate tensor '" + name + "'");
    Shape shape(r.le<std::uint32_t>());
    for (auto& e : shape) e = static_cast<std::size_t>(r.le<std::uint64_t>());
    if (shape != slot->second->shape()) {
      throw FormatError(where + ": tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                        shape_str(slot->second->shape()));
    }
    Tensor<T> t(shape);
    for (auto& v : t.data()) v = static_cast<T>(r.f32());
    staged.emplace(name, std::move(t));
  }
  if (!r.done()) throw FormatError(where + ": trailing bytes after last tensor");

  for (auto& [name, t] : staged) *slots.at(name) = std::move(t);
  return model;
}

template void save_weights(Model<float>&, const std::filesystem::path&);
template void save_weights(Model<double>&, const std::filesystem::path&);
template Model<float> load_weights(const ModelConfig&, const std::filesystem::path&);
template Model<double> load_weights(const ModelConfig&, const std::filesystem::path&);

}  // namespace seecg
