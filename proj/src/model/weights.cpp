#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rose/model.hpp"

namespace rose::model {

namespace {

constexpr char kMagic[] = "ROSEW001";
constexpr std::size_t kMagicLen = 8;

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : bytes_(b) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void WeightStore::add(const std::string& name, Tensor value, bool frozen) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  Tensor t = value.detach();
  t.set_requires_grad(!frozen);
  entries_[name] = {t, frozen};
}

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("missing parameter " + name);
  if (access_log_) access_log_->insert(name);
  return it->second.value;
}

void WeightStore::bind(const std::string& name, const Tensor& value) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("missing parameter " + name);
  if (it->second.value.shape() != value.shape())
    throw ad::ShapeError("bind " + name + ": shape " + ad::shape_str(value.shape()) + " vs " +
                         ad::shape_str(it->second.value.shape()));
  it->second.value = value;
}

bool WeightStore::frozen(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("missing parameter " + name);
  return it->second.frozen;
}

void WeightStore::freeze(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("missing parameter " + name);
  it->second.frozen = true;
  it->second.value.set_requires_grad(false);
}

void WeightStore::freeze_prefix(const std::string& prefix) {
  for (auto& [name, e] : entries_)
    if (name.rfind(prefix, 0) == 0) {
      e.frozen = true;
      e.value.set_requires_grad(false);
    }
}

bool WeightStore::all_frozen() const {
  for (const auto& [_, e] : entries_)
    if (!e.frozen) return false;
  return true;
}

std::vector<std::string> WeightStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<std::pair<std::string, Tensor>> WeightStore::trainable() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, e] : entries_)
    if (!e.frozen) out.emplace_back(name, e.value);
  return out;
}

std::size_t WeightStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.numel();
  return n;
}

WeightStore WeightStore::clone() const {
  WeightStore out;
  for (const auto& [name, e] : entries_) out.add(name, e.value, e.frozen);
  return out;
}

void WeightStore::zero_grad() {
  for (auto& [_, e] : entries_) e.value.zero_grad();
}

std::string WeightStore::serialize() const {
  std::string out(kMagic, kMagicLen);
  put_le<std::uint64_t>(out, entries_.size());
  for (const auto& [name, e] : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(e.frozen ? 1 : 0);
    const auto& shape = e.value.shape();
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_le<std::uint64_t>(out, d);
    for (double v : e.value.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

WeightStore WeightStore::deserialize(const std::string& bytes) {
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0)
    throw std::runtime_error("not a checkpoint: bad magic");
  Reader r(bytes);
  r.str(kMagicLen);
  const auto count = r.le<std::uint64_t>();
  WeightStore ws;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = r.le<std::uint32_t>();
    const std::string name = r.str(len);
    const auto frozen_flag = r.le<std::uint8_t>();
    if (frozen_flag > 1) throw std::runtime_error("checkpoint: bad frozen flag for " + name);
    const auto rank = r.le<std::uint32_t>();
    if (rank > 8) throw std::runtime_error("checkpoint: implausible rank for " + name);
    ad::Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto& d : shape) {
      d = r.le<std::uint64_t>();
      if (d != 0 && numel > (std::uint64_t{1} << 40) / d)
        throw std::runtime_error("checkpoint: implausible shape for " + name);
      numel *= d;
    }
    if (numel * 4 > bytes.size()) throw std::runtime_error("checkpoint truncated in " + name);
    std::vector<double> v(numel);
    for (auto& x : v) x = static_cast<double>(std::bit_cast<float>(r.le<std::uint32_t>()));
    ws.add(name, Tensor::from(shape, std::move(v)), frozen_flag == 1);
  }
  if (!r.done())
    throw std::runtime_error("checkpoint has " + std::to_string(bytes.size() - r.pos()) +
                             " trailing bytes");
  return ws;
}

void WeightStore::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

void WeightStore::start_access_log() const { access_log_ = std::make_shared<std::set<std::string>>(); }

std::set<std::string> WeightStore::take_access_log() const {
  std::set<std::string> out;
  if (access_log_) out = std::move(*access_log_);
  access_log_.reset();
  return out;
}

bool WeightStore::operator==(const WeightStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first || a->second.frozen != b->second.frozen) return false;
    if (a->second.value.shape() != b->second.value.shape()) return false;
    const auto x = a->second.value.data(), y = b->second.value.data();
    if (!std::equal(x.begin(), x.end(), y.begin())) return false;
  }
  return true;
}

}  // namespace rose::model
