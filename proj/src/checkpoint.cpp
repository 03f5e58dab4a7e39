#include "xmaml/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xmaml/errors.hpp"

namespace xmaml {
namespace {

constexpr char kMagic[8] = {'X', 'M', 'A', 'M', 'L', '0', '1', '\0'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little ||
                std::endian::native == std::endian::big);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  out.insert(out.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }
  std::size_t offset() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated checkpoint", pos_);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint64_t>(out, ckpt.config_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.segment_count()));
  for (const Segment& s : ckpt.params.segments()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.name.size()));
    out.insert(out.end(), s.name.begin(), s.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.value.rank()));
    for (std::size_t e : s.value.shape()) put<std::uint64_t>(out, e);
    for (double v : s.value.data()) put<double>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.bytes(8) != std::string(kMagic, 8)) throw FormatError("bad checkpoint magic", 0);
  Checkpoint ckpt;
  ckpt.config_hash = in.get<std::uint64_t>();
  const auto count = in.get<std::uint32_t>();
  std::vector<Segment> segments;
  for (std::uint32_t i = 0; i < count; ++i) {
    Segment s;
    s.name = in.bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& e : shape) {
      e = static_cast<std::size_t>(in.get<std::uint64_t>());
      n *= e;
    }
    if (n > bytes.size()) throw FormatError("segment larger than checkpoint", in.offset());
    std::vector<double> data(n);
    for (double& v : data) v = in.get<double>();
    s.value = Tensor(std::move(shape), std::move(data));
    segments.push_back(std::move(s));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint", in.offset());
  ckpt.params = ParamVector(std::move(segments));
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace xmaml
