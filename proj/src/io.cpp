#include "gaug/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace gaug {

namespace {

static_assert(std::endian::native == std::endian::little,
              "matrix files are written in host order and assume little-endian");

void put_u32(std::string& out, std::uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f32(std::string& out, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ParseError("matrix file truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  float f32() {
    float v;
    std::memcpy(&v, take(4).data(), 4);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_matrix_body(std::string& out, const Mat& m) {
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_f32(out, static_cast<float>(m(i, j)));
}

Mat read_matrix_body(Reader& r) {
  const auto rows = r.u32();
  const auto cols = r.u32();
  Mat m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
  return m;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 15]);
  }
  return hex;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  static std::atomic<unsigned> counter{0};
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("rename to " + path.string() + " failed: " + ec.message());
  }
}

std::string encode_matrix(std::string_view magic, const Mat& m) {
  std::string out(magic);
  out.reserve(magic.size() + 8 + 4 * static_cast<std::size_t>(m.size()));
  put_matrix_body(out, m);
  return out;
}

Mat decode_matrix(std::string_view magic, std::string_view bytes) {
  Reader r(bytes);
  if (r.take(magic.size()) != magic)
    throw ParseError("bad magic, expected " + std::string(magic));
  Mat m = read_matrix_body(r);
  if (!r.done()) throw ParseError("trailing bytes after matrix");
  return m;
}

void save_matrix(const std::filesystem::path& path, std::string_view magic, const Mat& m) {
  write_file_atomic(path, encode_matrix(magic, m));
}

Mat load_matrix(const std::filesystem::path& path, std::string_view magic) {
  return decode_matrix(magic, read_file(path));
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::string out(kCheckpointMagic);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_matrix_body(out, m);
  }
  write_file_atomic(path, out);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes);
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) throw ParseError("bad checkpoint magic");
  NamedTensors tensors;
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32();
    std::string name(r.take(len));
    tensors.emplace_back(std::move(name), read_matrix_body(r));
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint");
  return tensors;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void save_loss_trace(const std::filesystem::path& path, const std::vector<double>& losses) {
  std::string out = "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i)
    out += std::to_string(i) + "," + format_double(losses[i]) + "\n";
  write_file_atomic(path, out);
}

}  // namespace gaug
