#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rose/rng.hpp"
#include "rose/weather_sim.hpp"

namespace rose::sim {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  return f;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  return f;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string token(std::istream& in) {
  std::string t;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      while (in.get(ch) && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!t.empty()) return t;
      continue;
    }
    t.push_back(ch);
  }
  return t;
}

std::size_t header_size(std::istream& in, const fs::path& path) {
  const std::string t = token(in);
  try {
    const long v = std::stol(t);
    if (v <= 0) throw std::invalid_argument("nonpositive");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": bad header field '" + t + "'");
  }
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void put_f32le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
  out.write(b, 4);
}

float get_f32(const unsigned char* b, bool little) {
  const std::uint32_t bits =
      little ? (std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                std::uint32_t(b[3]) << 24)
             : (std::uint32_t(b[3]) | std::uint32_t(b[2]) << 8 | std::uint32_t(b[1]) << 16 |
                std::uint32_t(b[0]) << 24);
  return std::bit_cast<float>(bits);
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t n, const fs::path& path) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw std::runtime_error(path.string() + ": truncated payload");
  return buf;
}

}  // namespace

void write_ppm(const fs::path& path, const Image& img) {
  if (img.c != 1 && img.c != 3) throw std::invalid_argument("write_ppm: need 1 or 3 channels");
  auto f = open_out(path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<char> row(img.w * 3);
  for (std::size_t y = 0; y < img.h; ++y) {
    for (std::size_t x = 0; x < img.w; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch)
        row[x * 3 + ch] = static_cast<char>(quantize(img.at(img.c == 3 ? ch : 0, y, x)));
    f.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

Image read_ppm(const fs::path& path) {
  auto f = open_in(path);
  if (token(f) != "P6") throw std::runtime_error(path.string() + ": not a binary PPM");
  const auto w = header_size(f, path), h = header_size(f, path), maxval = header_size(f, path);
  if (maxval != 255) throw std::runtime_error(path.string() + ": only 8-bit PPM supported");
  const auto buf = read_payload(f, w * h * 3, path);
  Image img(3, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch)
        img.at(ch, y, x) = static_cast<double>(buf[(y * w + x) * 3 + ch]) / 255.0;
  return img;
}

void write_pfm(const fs::path& path, const Image& img) {
  if (img.c != 1 && img.c != 3) throw std::invalid_argument("write_pfm: need 1 or 3 channels");
  auto f = open_out(path);
  f << (img.c == 1 ? "Pf" : "PF") << "\n" << img.w << " " << img.h << "\n-1.0\n";
  for (std::size_t row = img.h; row-- > 0;)
    for (std::size_t x = 0; x < img.w; ++x)
      for (std::size_t ch = 0; ch < img.c; ++ch) put_f32le(f, img.at(ch, row, x));
}

Image read_pfm(const fs::path& path) {
  auto f = open_in(path);
  const std::string magic = token(f);
  std::size_t c = 0;
  if (magic == "Pf") c = 1;
  else if (magic == "PF") c = 3;
  else throw std::runtime_error(path.string() + ": not a PFM file");
  const auto w = header_size(f, path), h = header_size(f, path);
  const std::string scale_tok = token(f);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": bad PFM scale '" + scale_tok + "'");
  }
  if (scale == 0.0) throw std::runtime_error(path.string() + ": PFM scale must be nonzero");
  const bool little = scale < 0.0;
  const auto buf = read_payload(f, w * h * c * 4, path);
  Image img(c, h, w);
  std::size_t i = 0;
  for (std::size_t row = h; row-- > 0;)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch, i += 4) img.at(ch, row, x) = get_f32(&buf[i], little);
  return img;
}

void write_pgm(const fs::path& path, const Mask& m) {
  auto f = open_out(path);
  f << "P5\n" << m.w << " " << m.h << "\n255\n";
  std::vector<char> bytes(m.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = static_cast<char>(m.data[i] ? 255 : 0);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mask read_pgm(const fs::path& path) {
  auto f = open_in(path);
  if (token(f) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM");
  const auto w = header_size(f, path), h = header_size(f, path), maxval = header_size(f, path);
  if (maxval != 255) throw std::runtime_error(path.string() + ": only 8-bit PGM supported");
  const auto buf = read_payload(f, w * h, path);
  Mask m(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] ? 1 : 0;
  return m;
}

fs::path save_sample(const fs::path& root, const StereoSample& s) {
  const fs::path dir = root / std::string(to_string(s.condition)) / std::to_string(s.seed);
  fs::create_directories(dir);
  write_ppm(dir / "left.ppm", s.left);
  write_ppm(dir / "right.ppm", s.right);
  write_pfm(dir / "disp_left.pfm", s.disp_left);
  write_pfm(dir / "disp_right.pfm", s.disp_right);
  write_pgm(dir / "occ_left.pgm", s.occ_left);
  write_pgm(dir / "occ_right.pgm", s.occ_right);
  auto meta = open_out(dir / "meta.txt");
  meta << "condition = " << to_string(s.condition) << "\n"
       << "seed = " << s.seed << "\n"
       << "channels = " << s.left.c << "\n"
       << "height = " << s.left.h << "\n"
       << "width = " << s.left.w << "\n"
       << "rng = " << kRngAlgorithm << "\n";
  return dir;
}

StereoSample load_sample(const fs::path& dir) {
  StereoSample s;
  s.left = read_ppm(dir / "left.ppm");
  s.right = read_ppm(dir / "right.ppm");
  s.disp_left = read_pfm(dir / "disp_left.pfm");
  s.disp_right = read_pfm(dir / "disp_right.pfm");
  s.occ_left = read_pgm(dir / "occ_left.pgm");
  s.occ_right = read_pgm(dir / "occ_right.pgm");
  auto meta = open_in(dir / "meta.txt");
  std::map<std::string, std::string> kv;
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string t) {
      const auto b = t.find_first_not_of(" \t"), e = t.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : t.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  if (!kv.count("condition") || !kv.count("seed"))
    throw std::runtime_error(dir.string() + "/meta.txt: missing condition or seed");
  s.condition = parse_condition(kv["condition"]);
  s.seed = std::stoull(kv["seed"]);
  return s;
}

std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_mask(const Mask& m) {
  std::uint64_t h = fnv1a(&m.h, sizeof m.h);
  h = fnv1a(&m.w, sizeof m.w, h);
  return fnv1a(m.data.data(), m.data.size(), h);
}

std::uint64_t hash_image(const Image& img) {
  // Hash 8-bit quantized values so the golden is insensitive to last-ulp
  // differences in transcendental functions across libms.
  std::vector<std::uint8_t> q(img.data.size());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = quantize(img.data[i]);
  std::uint64_t h = fnv1a(&img.c, sizeof img.c);
  h = fnv1a(&img.h, sizeof img.h, h);
  h = fnv1a(&img.w, sizeof img.w, h);
  return fnv1a(q.data(), q.size(), h);
}

}  // namespace rose::sim
