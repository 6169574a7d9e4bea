#include "lexprompt/checkpoint.h"

#include <cstring>
#include <fstream>
#include <iterator>

namespace lexprompt {

namespace {

constexpr char kMagic[8] = {'L', 'X', 'P', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_raw(const void* data, std::size_t size) {
    const auto* p = static_cast<const char*>(data);
    buf_.insert(buf_.end(), p, p + size);
  }
  std::vector<char>& buffer() { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& buf, std::size_t end, std::string source)
      : buf_(buf), end_(end), source_(std::move(source)) {}

  template <typename T>
  T get() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }
  void take(void* out, std::size_t n) {
    if (n > end_ - pos_) throw DataError(source_ + ": checkpoint record ends early");
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::vector<char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
  std::string source_;
};

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Writer w;
  w.put_raw(kMagic, sizeof(kMagic));
  w.put(kCheckpointVersion);
  w.put_string(ck.kind);
  w.put(ck.vocab_hash);
  w.put(static_cast<std::uint32_t>(ck.dims.size()));
  for (const auto& [k, v] : ck.dims) {
    w.put_string(k);
    w.put(v);
  }
  w.put(static_cast<std::uint32_t>(ck.arrays.size()));
  for (const auto& [name, m] : ck.arrays) {
    w.put_string(name);
    w.put(static_cast<std::int64_t>(m.rows()));
    w.put(static_cast<std::int64_t>(m.cols()));
    w.put_raw(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.put(sum);

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw DataError("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string src = path.string();

  constexpr std::size_t kHeader = sizeof(kMagic) + sizeof(std::uint32_t);
  if (buf.size() < kHeader || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(src + ": not a checkpoint file");
  }
  std::uint32_t version = 0;
  std::memcpy(&version, buf.data() + sizeof(kMagic), sizeof(version));
  if (version != kCheckpointVersion) {
    throw DataError(src + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  if (buf.size() < kHeader + sizeof(std::uint64_t)) throw DataError(src + ": checkpoint checksum mismatch");
  const std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::uint64_t stored = 0;
  std::memcpy(&stored, buf.data() + body, sizeof(stored));
  if (fnv1a(buf.data(), body) != stored) throw DataError(src + ": checkpoint checksum mismatch");

  Reader r(buf, body, src);
  char magic[sizeof(kMagic)];
  r.take(magic, sizeof(magic));
  r.get<std::uint32_t>();
  Checkpoint ck;
  ck.kind = r.get_string();
  ck.vocab_hash = r.get<std::uint64_t>();
  const auto n_dims = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_dims; ++i) {
    std::string k = r.get_string();
    ck.dims[k] = r.get<std::int64_t>();
  }
  const auto n_arrays = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_arrays; ++i) {
    std::string name = r.get_string();
    const auto rows = r.get<std::int64_t>();
    const auto cols = r.get<std::int64_t>();
    if (rows < 0 || cols < 0) throw DataError(src + ": negative array shape for " + name);
    Mat m(rows, cols);
    r.take(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
    ck.arrays.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw DataError(src + ": trailing bytes in checkpoint");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_vocab_hash) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.vocab_hash != expected_vocab_hash) {
    throw DataError(path.string() + ": checkpoint was built for a different vocabulary");
  }
  return ck;
}

Checkpoint capture(std::string kind, std::uint64_t vocab_hash, std::map<std::string, std::int64_t> dims,
                   const ParamList& params) {
  Checkpoint ck{std::move(kind), vocab_hash, std::move(dims), {}};
  for (const auto& p : params) ck.arrays.emplace_back(p.name, p.param->value);
  return ck;
}

void apply_checkpoint(const Checkpoint& ck, const ParamList& params) {
  std::map<std::string, const Mat*> by_name;
  for (const auto& [name, m] : ck.arrays) by_name[name] = &m;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw DataError("checkpoint has no array named " + p.name);
    const Mat& m = *it->second;
    if (m.rows() != p.param->value.rows() || m.cols() != p.param->value.cols()) {
      throw DataError("checkpoint array " + p.name + " has shape " + std::to_string(m.rows()) + "x" +
                      std::to_string(m.cols()));
    }
    p.param->value = m;
    p.param->zero_grad();
  }
}

namespace {

std::int64_t dim(const Checkpoint& ck, const std::string& key) {
  const auto it = ck.dims.find(key);
  if (it == ck.dims.end()) throw DataError("checkpoint lacks dimension " + key);
  return it->second;
}

}  // namespace

Checkpoint to_checkpoint(PromptModel& model, std::uint64_t vocab_hash) {
  const ModelDims& d = model.dims();
  std::map<std::string, std::int64_t> dims{{"vocab_size", static_cast<std::int64_t>(d.vocab_size)},
                                           {"d_model", d.d_model},
                                           {"layers", d.layers},
                                           {"heads", d.heads},
                                           {"ff", d.ff},
                                           {"max_len", static_cast<std::int64_t>(d.max_len)}};
  return capture("prompt_model", vocab_hash, std::move(dims), model.parameters());
}

PromptModel prompt_model_from(const Checkpoint& ck) {
  if (ck.kind != "prompt_model") throw DataError("checkpoint holds a " + ck.kind + ", not a prompt model");
  ModelDims d;
  d.vocab_size = static_cast<std::size_t>(dim(ck, "vocab_size"));
  d.d_model = static_cast<int>(dim(ck, "d_model"));
  d.layers = static_cast<int>(dim(ck, "layers"));
  d.heads = static_cast<int>(dim(ck, "heads"));
  d.ff = static_cast<int>(dim(ck, "ff"));
  d.max_len = static_cast<std::size_t>(dim(ck, "max_len"));
  PromptModel model(d, 0);
  apply_checkpoint(ck, model.parameters());
  return model;
}

Checkpoint to_checkpoint(SentenceEncoder& encoder, std::uint64_t vocab_hash) {
  std::map<std::string, std::int64_t> dims{{"vocab_size", static_cast<std::int64_t>(encoder.vocab_size())},
                                           {"dim", encoder.dim()}};
  return capture("retriever", vocab_hash, std::move(dims), encoder.parameters());
}

SentenceEncoder retriever_from(const Checkpoint& ck) {
  if (ck.kind != "retriever") throw DataError("checkpoint holds a " + ck.kind + ", not a retriever");
  SentenceEncoder encoder(static_cast<std::size_t>(dim(ck, "vocab_size")), static_cast<int>(dim(ck, "dim")), 0);
  apply_checkpoint(ck, encoder.parameters());
  return encoder;
}

}  // namespace lexprompt
