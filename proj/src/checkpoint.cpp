#include "mman/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mman {

namespace {

constexpr char kMagic[4] = {'M', 'M', 'A', 'N'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str32(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void reals(std::span<const double> values) {
    u64(values.size());
    for (double v : values) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw CheckpointCorruptError(std::string("checkpoint truncated while reading ") + what + " (need " +
                                   std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", file has " +
                                   std::to_string(in_.size()) + ")");
    }
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * i);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::vector<double> reals(const char* what) {
    const std::uint64_t n = u64(what);
    if (n > (in_.size() - pos_) / 8) {
      throw CheckpointCorruptError(std::string("checkpoint truncated: ") + what + " declares " + std::to_string(n) +
                                   " values but only " + std::to_string(in_.size() - pos_) + " bytes remain");
    }
    std::vector<double> out(n);
    for (auto& v : out) v = f64(what);
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << v;
  return out.str();
}

std::uint64_t lookup_hex(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key + "=", 0) == 0) {
      try {
        return std::stoull(line.substr(key.size() + 1), nullptr, 16);
      } catch (const std::logic_error&) {
        break;
      }
    }
  }
  throw CheckpointCorruptError("checkpoint config lacks a valid '" + key + "' entry");
}

}  // namespace

std::string Checkpoint::config_text() const {
  std::string text = config.to_text();
  text += "vocab_fingerprint=" + hex(vocab_fingerprint) + "\n";
  text += "categories_fingerprint=" + hex(categories_fingerprint) + "\n";
  std::istringstream in(run_config);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) text += "run." + line + "\n";
  }
  return text;
}

Checkpoint make_checkpoint(const Model& model, const Vocab& vocab, const CategorySet& categories,
                           std::string run_config, const AdamState* optimizer) {
  Checkpoint c;
  c.config = model.config();
  c.vocab_fingerprint = vocab.fingerprint();
  c.categories_fingerprint = categories.fingerprint();
  c.run_config = std::move(run_config);
  for (const auto& p : model.parameters()) c.tensors.push_back({p.name, p.value.detach()});
  if (optimizer) c.optimizer = *optimizer;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(checkpoint.version);
  const std::string text = checkpoint.config_text();
  w.u64(text.size());
  w.bytes(text.data(), text.size());
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    w.str32(t.name);
    w.u32(static_cast<std::uint32_t>(t.value.rank()));
    for (auto e : t.value.shape()) w.u64(e);
    w.reals(t.value.data());
  }
  w.u8(checkpoint.optimizer ? 1 : 0);
  if (checkpoint.optimizer) {
    const auto& s = *checkpoint.optimizer;
    w.u64(s.step);
    w.f64(s.options.lr);
    w.f64(s.options.beta1);
    w.f64(s.options.beta2);
    w.f64(s.options.eps);
    for (std::size_t k = 0; k < s.first_moment.size(); ++k) {
      w.reals(s.first_moment[k]);
      w.reals(s.second_moment[k]);
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kMagic, 4)) throw CheckpointCorruptError("not a checkpoint (bad magic bytes)");
  Checkpoint c;
  c.version = r.u32("version");
  if (c.version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " + std::to_string(c.version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t text_len = r.u64("config length");
  r.need(text_len, "config text");
  const std::string text = r.bytes(text_len, "config text");
  try {
    c.config = ModelConfig::from_text(text);
  } catch (const ConfigError& e) {
    throw CheckpointCorruptError(std::string("checkpoint config unreadable: ") + e.what());
  }
  c.vocab_fingerprint = lookup_hex(text, "vocab_fingerprint");
  c.categories_fingerprint = lookup_hex(text, "categories_fingerprint");
  {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("run.", 0) == 0) c.run_config += line.substr(4) + "\n";
    }
  }

  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = r.bytes(r.u32("tensor name length"), "tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) throw CheckpointCorruptError("tensor '" + t.name + "' has implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) e = r.u64("tensor extent");
    auto values = r.reals("tensor payload");
    try {
      t.value = Tensor::from(std::move(shape), std::move(values));
    } catch (const DimensionError& e) {
      throw CheckpointCorruptError("tensor '" + t.name + "' payload length check failed: " + e.what());
    }
    c.tensors.push_back(std::move(t));
  }
  if (r.u8("optimizer flag")) {
    AdamState s;
    s.step = r.u64("optimizer step");
    s.options.lr = r.f64("lr");
    s.options.beta1 = r.f64("beta1");
    s.options.beta2 = r.f64("beta2");
    s.options.eps = r.f64("eps");
    for (const auto& t : c.tensors) {
      s.first_moment.push_back(r.reals("first moment"));
      s.second_moment.push_back(r.reals("second moment"));
      if (s.first_moment.back().size() != t.value.size() || s.second_moment.back().size() != t.value.size()) {
        throw CheckpointCorruptError("optimizer moments for '" + t.name + "' fail the length check");
      }
    }
    c.optimizer = std::move(s);
  }
  if (!r.done()) throw CheckpointCorruptError("trailing bytes after checkpoint payload");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

Model restore_model(const Checkpoint& checkpoint) {
  Model model = [&] {
    try {
      return Model(checkpoint.config, 0);
    } catch (const ConfigError& e) {
      throw CheckpointConfigError(std::string("checkpoint describes an invalid model: ") + e.what());
    }
  }();
  auto params = model.parameters();
  if (params.size() != checkpoint.tensors.size()) {
    throw CheckpointConfigError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                                " tensors, model config declares " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& stored = checkpoint.tensors[k];
    if (stored.name != params[k].name || stored.value.shape() != params[k].value.shape()) {
      throw CheckpointConfigError("checkpoint tensor '" + stored.name + "' " + shape_to_string(stored.value.shape()) +
                                  " does not match model parameter '" + params[k].name + "' " +
                                  shape_to_string(params[k].value.shape()));
    }
    auto dst = params[k].value.mutable_data();
    std::copy(stored.value.data().begin(), stored.value.data().end(), dst.begin());
  }
  return model;
}

void check_compatible(const Checkpoint& checkpoint, const Vocab& vocab, const CategorySet& categories) {
  if (checkpoint.config.num_categories != categories.size()) {
    throw CheckpointConfigError("category count mismatch: checkpoint was trained with |C|=" +
                                std::to_string(checkpoint.config.num_categories) + ", category file has |C|=" +
                                std::to_string(categories.size()));
  }
  if (checkpoint.categories_fingerprint != categories.fingerprint()) {
    throw CheckpointConfigError("category set differs from the one the checkpoint was trained with (fingerprint " +
                                hex(checkpoint.categories_fingerprint) + " vs " + hex(categories.fingerprint()) + ")");
  }
  if (checkpoint.config.vocab_size != vocab.size()) {
    throw CheckpointConfigError("vocabulary size mismatch: checkpoint has " +
                                std::to_string(checkpoint.config.vocab_size) + ", vocab file gives " +
                                std::to_string(vocab.size()));
  }
  if (checkpoint.vocab_fingerprint != vocab.fingerprint()) {
    throw CheckpointConfigError("vocabulary differs from the one the checkpoint was trained with (fingerprint " +
                                hex(checkpoint.vocab_fingerprint) + " vs " + hex(vocab.fingerprint()) + ")");
  }
}

}  // namespace mman
