#include "endodepth/io.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace endodepth {
namespace {

std::ofstream OpenOut(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError(path, "cannot open for writing");
  return out;
}

std::ifstream OpenIn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  return in;
}

// Netpbm-style header token: skips whitespace and '#' comments.
std::string HeaderToken(std::istream& in, const std::filesystem::path& path,
                        const char* what) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError(path, std::string("truncated header, missing ") + what);
  return tok;
}

int ParsePositiveInt(const std::string& tok, const std::filesystem::path& path,
                     const char* what) {
  int v = 0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v <= 0) {
    throw IoError(path, std::string("bad ") + what + " '" + tok + "'");
  }
  return v;
}

double ParseDouble(const std::string& tok, const std::filesystem::path& path,
                   const std::string& what) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || !std::isfinite(v)) {
    throw IoError(path, "bad " + what + " '" + tok + "'");
  }
  return v;
}

std::vector<std::string> SplitWhitespace(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

}  // namespace

IoError::IoError(const std::filesystem::path& path, const std::string& what)
    : std::runtime_error(path.string() + ": " + what) {}

std::string FormatDouble(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

void WritePfm(const std::filesystem::path& path, const Grid& grid) {
  if (grid.channels() != 1 && grid.channels() != 3) {
    throw IoError(path, "PFM holds 1 or 3 channels, got " +
                            std::to_string(grid.channels()));
  }
  std::ofstream out = OpenOut(path, true);
  out << (grid.channels() == 3 ? "PF" : "Pf") << '\n'
      << grid.width() << ' ' << grid.height() << '\n'
      << "-1.0\n";
  const std::size_t row = static_cast<std::size_t>(grid.width()) * grid.channels();
  std::vector<unsigned char> bytes(row * 4);
  for (int y = grid.height() - 1; y >= 0; --y) {
    for (std::size_t i = 0; i < row; ++i) {
      const float f = static_cast<float>(grid.values()[y * row + i]);
      std::uint32_t u = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(u >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError(path, "write failed");
}

Grid ReadPfm(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  const std::string magic = HeaderToken(in, path, "magic");
  int channels;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw IoError(path, "not a PFM file (magic '" + magic + "')");
  }
  const int w = ParsePositiveInt(HeaderToken(in, path, "width"), path, "width");
  const int h = ParsePositiveInt(HeaderToken(in, path, "height"), path, "height");
  const double scale = ParseDouble(HeaderToken(in, path, "scale"), path, "scale");
  if (scale == 0.0) throw IoError(path, "PFM scale must be non-zero");
  const bool little = scale < 0.0;
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  std::vector<unsigned char> bytes(row * h * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(path, "truncated PFM data: expected " + std::to_string(bytes.size()) +
                            " bytes, got " + std::to_string(in.gcount()));
  }
  std::vector<double> data(row * h);
  for (int r = 0; r < h; ++r) {
    const int y = h - 1 - r;
    for (std::size_t i = 0; i < row; ++i) {
      const unsigned char* p = &bytes[(static_cast<std::size_t>(r) * row + i) * 4];
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b) {
        const int shift = little ? 8 * b : 8 * (3 - b);
        u |= static_cast<std::uint32_t>(p[b]) << shift;
      }
      data[y * row + i] = static_cast<double>(std::bit_cast<float>(u));
    }
  }
  return Grid(w, h, channels, std::move(data));
}

DepthMap ReadDepthPfm(const std::filesystem::path& path) {
  Grid g = ReadPfm(path);
  if (g.channels() != 1) throw IoError(path, "depth PFM must have one channel");
  try {
    return DepthMap(g.width(), g.height(), g.values());
  } catch (const std::exception& e) {
    throw IoError(path, e.what());
  }
}

ImageBuffer ReadImagePfm(const std::filesystem::path& path) {
  Grid g = ReadPfm(path);
  try {
    return ImageBuffer(g.width(), g.height(), g.channels(), g.values());
  } catch (const std::exception& e) {
    throw IoError(path, e.what());
  }
}

void WritePnm(const std::filesystem::path& path, const ImageBuffer& image,
              int bit_depth) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw IoError(path, "PGM/PPM hold 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw IoError(path, "bit depth must be 8 or 16");
  const int maxval = bit_depth == 8 ? 255 : 65535;
  std::ofstream out = OpenOut(path, true);
  out << (image.channels() == 3 ? "P6" : "P5") << '\n'
      << image.width() << ' ' << image.height() << '\n'
      << maxval << '\n';
  std::vector<unsigned char> bytes;
  bytes.reserve(image.size() * (bit_depth / 8));
  for (double v : image.values()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (bit_depth == 16) bytes.push_back(static_cast<unsigned char>(q >> 8));
    bytes.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

ImageBuffer ReadPnm(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  const std::string magic = HeaderToken(in, path, "magic");
  int channels;
  if (magic == "P5") {
    channels = 1;
  } else if (magic == "P6") {
    channels = 3;
  } else {
    throw IoError(path, "not a binary PGM/PPM file (magic '" + magic + "')");
  }
  const int w = ParsePositiveInt(HeaderToken(in, path, "width"), path, "width");
  const int h = ParsePositiveInt(HeaderToken(in, path, "height"), path, "height");
  const int maxval = ParsePositiveInt(HeaderToken(in, path, "maxval"), path, "maxval");
  if (maxval > 65535) throw IoError(path, "maxval above 65535");
  const int bytes_per = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  std::vector<unsigned char> bytes(count * bytes_per);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError(path, "truncated pixel data");
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned q = bytes_per == 2 ? (bytes[2 * i] << 8) | bytes[2 * i + 1] : bytes[i];
    if (static_cast<int>(q) > maxval) throw IoError(path, "sample exceeds maxval");
    data[i] = static_cast<double>(q) / maxval;
  }
  return ImageBuffer(w, h, channels, std::move(data));
}

ImageBuffer ReadImage(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".pfm") return ReadImagePfm(path);
  if (ext == ".pgm" || ext == ".ppm") return ReadPnm(path);
  throw IoError(path, "unsupported image extension '" + ext + "' (pfm, pgm, ppm)");
}

void WritePly(const std::filesystem::path& path, const PointCloud& cloud) {
  const bool color = !cloud.colors.empty();
  if (color && cloud.colors.size() != cloud.points.size()) {
    throw IoError(path, "colour count differs from point count");
  }
  std::ofstream out = OpenOut(path, false);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.points.size() << '\n'
      << "property double x\nproperty double y\nproperty double z\n";
  if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    out << FormatDouble(p.x()) << ' ' << FormatDouble(p.y()) << ' ' << FormatDouble(p.z());
    if (color) {
      for (int c = 0; c < 3; ++c) {
        out << ' ' << std::lround(std::clamp(cloud.colors[i][c], 0.0, 1.0) * 255.0);
      }
    }
    out << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

PointCloud ReadPly(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::string line;
  int line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  auto fail = [&](const std::string& what) {
    throw IoError(path, "line " + std::to_string(line_no) + ": " + what);
  };
  if (!next() || line != "ply") fail("missing 'ply' magic");
  if (!next() || line != "format ascii 1.0") fail("only 'format ascii 1.0' is supported");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool have_vertex = false;
  while (true) {
    if (!next()) fail("missing end_header");
    if (line == "end_header") break;
    const auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0] == "comment") continue;
    if (tok[0] == "element") {
      if (tok.size() != 3 || tok[1] != "vertex") fail("only a vertex element is supported");
      count = static_cast<std::size_t>(ParsePositiveInt(tok[2], path, "vertex count"));
      have_vertex = true;
    } else if (tok[0] == "property" && tok.size() == 3) {
      props.push_back(tok[2]);
    } else {
      fail("unexpected header line '" + line + "'");
    }
  }
  if (!have_vertex) fail("no vertex element");
  const std::vector<std::string> xyz = {"x", "y", "z"};
  const std::vector<std::string> xyzrgb = {"x", "y", "z", "red", "green", "blue"};
  if (props != xyz && props != xyzrgb) fail("vertex properties must be x y z [red green blue]");
  const bool color = props.size() == 6;
  PointCloud cloud;
  for (std::size_t i = 0; i < count; ++i) {
    if (!next()) fail("expected " + std::to_string(count) + " vertices");
    const auto tok = SplitWhitespace(line);
    if (tok.size() != props.size()) fail("wrong number of vertex values");
    const std::string where = "value on line " + std::to_string(line_no);
    cloud.points.emplace_back(ParseDouble(tok[0], path, where),
                              ParseDouble(tok[1], path, where),
                              ParseDouble(tok[2], path, where));
    if (color) {
      Vec3 c;
      for (int k = 0; k < 3; ++k) {
        const double v = ParseDouble(tok[3 + k], path, where);
        if (v < 0 || v > 255 || v != std::floor(v)) fail("colour must be an integer 0..255");
        c[k] = v / 255.0;
      }
      cloud.colors.push_back(c);
    }
  }
  return cloud;
}

void WriteLossTraceCsv(const std::filesystem::path& path, const RefineResult& result) {
  std::ofstream out = OpenOut(path, false);
  out << "iteration,level,total,ph,ct,st,es\n";
  for (std::size_t i = 0; i < result.trace.size(); ++i) {
    const LossReport& r = result.trace[i];
    out << i << ',' << (i < result.trace_level.size() ? result.trace_level[i] : -1) << ','
        << FormatDouble(r.total) << ',' << FormatDouble(r.ph) << ',' << FormatDouble(r.ct)
        << ',' << FormatDouble(r.st) << ',' << FormatDouble(r.es) << '\n';
  }
  if (!out) throw IoError(path, "write failed");
}

void WriteIntrinsics(const std::filesystem::path& path, const Intrinsics& K) {
  std::ofstream out = OpenOut(path, false);
  out << "# fx fy cx cy width height\n"
      << FormatDouble(K.fx) << ' ' << FormatDouble(K.fy) << ' ' << FormatDouble(K.cx) << ' '
      << FormatDouble(K.cy) << ' ' << K.width << ' ' << K.height << '\n';
  if (!out) throw IoError(path, "write failed");
}

Intrinsics ReadIntrinsics(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = SplitWhitespace(line.substr(0, line.find('#')));
    if (tok.empty()) continue;
    const std::string where = "intrinsics on line " + std::to_string(line_no);
    if (tok.size() != 6) throw IoError(path, where + ": expected 6 values");
    Intrinsics K;
    K.fx = ParseDouble(tok[0], path, where);
    K.fy = ParseDouble(tok[1], path, where);
    K.cx = ParseDouble(tok[2], path, where);
    K.cy = ParseDouble(tok[3], path, where);
    K.width = ParsePositiveInt(tok[4], path, "width");
    K.height = ParsePositiveInt(tok[5], path, "height");
    try {
      K.Validate();
    } catch (const std::exception& e) {
      throw IoError(path, where + ": " + e.what());
    }
    return K;
  }
  throw IoError(path, "no intrinsics line");
}

void WritePoses(const std::filesystem::path& path,
                const std::vector<RigidTransform>& poses) {
  std::ofstream out = OpenOut(path, false);
  out << "# r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2\n";
  for (const RigidTransform& T : poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) out << FormatDouble(T.rotation()(r, c)) << ' ';
      out << FormatDouble(T.translation()[r]) << (r == 2 ? '\n' : ' ');
    }
  }
  if (!out) throw IoError(path, "write failed");
}

std::vector<RigidTransform> ReadPoses(const std::filesystem::path& path) {
  std::ifstream in = OpenIn(path);
  std::vector<RigidTransform> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tok = SplitWhitespace(line.substr(0, line.find('#')));
    if (tok.empty()) continue;
    const std::string where = "pose on line " + std::to_string(line_no);
    if (tok.size() != 12) throw IoError(path, where + ": expected 12 values");
    Mat3 R;
    Vec3 t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R(r, c) = ParseDouble(tok[r * 4 + c], path, where);
      t[r] = ParseDouble(tok[r * 4 + 3], path, where);
    }
    RigidTransform T(R, t);
    try {
      T.Validate(1e-9);
    } catch (const std::exception& e) {
      throw IoError(path, where + ": " + e.what());
    }
    poses.push_back(T);
  }
  return poses;
}

}  // namespace endodepth
