#include "rlm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>

#include "rlm/config.hpp"

namespace rlm {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian");

namespace {

constexpr char kMagic[] = "RLMCKPT1";

class Writer {
 public:
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    raw(v.data(), v.size() * sizeof(double));
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const auto n = u64();
    if (n > (in_.size() - pos_) / sizeof(double)) throw std::runtime_error("checkpoint truncated");
    std::vector<double> v(n);
    raw(v.data(), n * sizeof(double));
    return v;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > in_.size() - pos_) throw std::runtime_error("checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_params(Writer& w, const ParameterSet& ps) {
  w.u64(ps.size());
  for (const auto& p : ps) {
    w.str(p.name);
    w.u64(p.value.rank());
    for (auto d : p.value.shape()) w.u64(d);
    w.doubles(p.value.storage());
  }
}

ParameterSet read_params(Reader& r) {
  ParameterSet ps;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = r.str();
    std::vector<std::size_t> shape(r.u64());
    for (auto& d : shape) d = r.u64();
    auto data = r.doubles();
    ps.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ps;
}

void write_state(Writer& w, const AdamState& s) {
  w.u64(s.steps);
  w.u64(s.m.size());
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.doubles(s.m[i]);
    w.doubles(s.v[i]);
  }
}

AdamState read_state(Reader& r) {
  AdamState s;
  s.steps = r.u64();
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    s.m.push_back(r.doubles());
    s.v.push_back(r.doubles());
  }
  return s;
}

}  // namespace

std::string Checkpoint::serialize() const {
  Writer w;
  w.raw(kMagic, 8);
  nlohmann::ordered_json header;
  header["config"] = config;
  header["vocab"] = vocab;
  header["styles"] = styles;
  w.str(header.dump());
  w.u64(step);
  write_params(w, model);
  write_params(w, q);
  write_state(w, model_opt);
  write_state(w, q_opt);
  return w.take();
}

Checkpoint Checkpoint::deserialize(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, kMagic) != 0) {
    throw std::runtime_error("not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  char magic[8];
  r.raw(magic, 8);
  Checkpoint c;
  try {
    auto header = nlohmann::ordered_json::parse(r.str());
    c.config = header.at("config");
    c.vocab = header.at("vocab").get<std::vector<std::string>>();
    c.styles = header.at("styles").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bad checkpoint header: ") + e.what());
  }
  c.step = r.u64();
  c.model = read_params(r);
  c.q = read_params(r);
  c.model_opt = read_state(r);
  c.q_opt = read_state(r);
  if (!r.at_end()) throw std::runtime_error("trailing bytes after checkpoint");
  return c;
}

void Checkpoint::save(const std::string& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) {
  try {
    return deserialize(read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace rlm
