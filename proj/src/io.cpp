#include "shseed/io.hpp"

#include <png.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

namespace shseed {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return buf.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot replace '" + path.string() + "': " + ec.message());
}

// ---- OBJ ----------------------------------------------------------------------

namespace {

// Resolves a 1-based or negative OBJ index against `count` elements; -1 when absent.
int obj_index(const std::string& token, std::size_t count, const std::string& where) {
  if (token.empty()) return -1;
  int i = 0;
  try {
    std::size_t used = 0;
    i = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
  } catch (const std::exception&) {
    throw ConfigError(where + ": bad index '" + token + "'");
  }
  const long resolved = i > 0 ? i - 1 : static_cast<long>(count) + i;
  if (i == 0 || resolved < 0 || resolved >= static_cast<long>(count)) {
    throw ConfigError(where + ": index " + token + " out of range");
  }
  return static_cast<int>(resolved);
}

}  // namespace

TriangleMesh read_obj(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Vec3> positions, normals;
  std::vector<Vec2> texcoords;
  using Corner = std::tuple<int, int, int>;
  std::map<Corner, int> corner_vertex;
  std::vector<Corner> corners;
  std::vector<Triangle> triangles;
  bool all_uv = true, all_normal = true;

  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string where = path.string() + ":" + std::to_string(line_number);
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v" || tag == "vn") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw ConfigError(where + ": expected three numbers");
      (tag == "v" ? positions : normals).push_back(p);
    } else if (tag == "vt") {
      Vec2 t;
      if (!(ls >> t.x() >> t.y())) throw ConfigError(where + ": expected two numbers");
      texcoords.push_back(t);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string token;
      while (ls >> token) {
        std::string parts[3];
        int part = 0;
        for (char ch : token) {
          if (ch == '/') {
            if (++part > 2) throw ConfigError(where + ": bad face corner '" + token + "'");
          } else {
            parts[part] += ch;
          }
        }
        const Corner c{obj_index(parts[0], positions.size(), where), obj_index(parts[1], texcoords.size(), where),
                       obj_index(parts[2], normals.size(), where)};
        if (std::get<0>(c) < 0) throw ConfigError(where + ": face corner without a position");
        all_uv = all_uv && std::get<1>(c) >= 0;
        all_normal = all_normal && std::get<2>(c) >= 0;
        auto [it, added] = corner_vertex.try_emplace(c, static_cast<int>(corners.size()));
        if (added) corners.push_back(c);
        face.push_back(it->second);
      }
      if (face.size() < 3) throw ConfigError(where + ": face with fewer than three corners");
      for (std::size_t k = 1; k + 1 < face.size(); ++k) triangles.push_back({face[0], face[k], face[k + 1]});
    }
  }
  if (triangles.empty()) throw ConfigError(path.string() + ": no faces");

  // Files whose uv and normal indices equal the position index (as write_obj emits them)
  // keep the position list as is, including unreferenced positions.
  bool aligned = (!all_uv || texcoords.size() == positions.size()) && (!all_normal || normals.size() == positions.size());
  for (const auto& [v, t, n] : corners) aligned = aligned && (!all_uv || t == v) && (!all_normal || n == v);
  if (aligned) {
    for (Triangle& tri : triangles) {
      for (int& i : tri) i = std::get<0>(corners[i]);
    }
    corners.clear();
    for (int v = 0; v < static_cast<int>(positions.size()); ++v) corners.push_back({v, all_uv ? v : -1, all_normal ? v : -1});
  }

  TriangleMesh mesh;
  mesh.triangles = std::move(triangles);
  for (const auto& [v, t, n] : corners) {
    mesh.vertices.push_back(positions[v]);
    if (all_uv) mesh.uvs.push_back(texcoords[t]);
    if (all_normal) {
      const Vec3& normal = normals[n];
      mesh.normals.push_back(std::abs(normal.norm() - 1.0) > 1e-12 ? normal.normalized() : normal);
    }
  }
  if (!all_normal) compute_normals(mesh);
  mesh.validate();
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const fs::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const Vec2& t : mesh.uvs) out << "vt " << t.x() << ' ' << t.y() << '\n';
  for (const Vec3& n : mesh.normals) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
  const bool uv = mesh.has_uvs(), normal = !mesh.normals.empty();
  for (const Triangle& t : mesh.triangles) {
    out << 'f';
    for (int i : t) {
      out << ' ' << i + 1;
      if (uv || normal) out << '/';
      if (uv) out << i + 1;
      if (normal) out << '/' << i + 1;
    }
    out << '\n';
  }
  write_text(path, out.str());
}

// ---- PFM ----------------------------------------------------------------------

Image read_pfm(const fs::path& path) {
  const std::string bytes = read_text(path);
  std::istringstream in(bytes);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  if (!(in >> magic >> width >> height >> scale) || (magic != "PF" && magic != "Pf")) {
    throw ConfigError(path.string() + ": not a PFM file");
  }
  if (width < 1 || height < 1 || scale == 0.0) throw ConfigError(path.string() + ": bad PFM header");
  in.get();  // the single whitespace byte before the raster
  const int channels = magic == "PF" ? 3 : 1;
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() < offset + 4 * count) throw ConfigError(path.string() + ": truncated PFM raster");
  const bool little = scale < 0.0;
  Image image(width, height, channels);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = (static_cast<std::size_t>(height - 1 - y) * width + x) * channels + c;
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + offset + 4 * k, 4);
        if ((std::endian::native == std::endian::little) != little) bits = __builtin_bswap32(bits);
        float value;
        std::memcpy(&value, &bits, 4);
        image.at(x, y, c) = value;
      }
    }
  }
  return image;
}

void write_pfm(const Image& image, const fs::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ConfigError("PFM images must have 1 or 3 channels");
  std::string out = (image.channels == 3 ? "PF\n" : "Pf\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + 4 * image.data.size());
  std::size_t k = 0;
  for (int y = image.height - 1; y >= 0; --y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c, ++k) {
        const float value = static_cast<float>(image.at(x, y, c));
        std::uint32_t bits;
        std::memcpy(&bits, &value, 4);
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        std::memcpy(out.data() + header + 4 * k, &bits, 4);
      }
    }
  }
  write_text(path, out);
}

// ---- PNG ----------------------------------------------------------------------

double srgb_encode(double linear) {
  const double x = std::clamp(linear, 0.0, 1.0);
  return x <= 0.0031308 ? 12.92 * x : 1.055 * std::pow(x, 1.0 / 2.4) - 0.055;
}

double srgb_decode(double encoded) {
  const double x = std::clamp(encoded, 0.0, 1.0);
  return x <= 0.04045 ? x / 12.92 : std::pow((x + 0.055) / 1.055, 2.4);
}

Image read_png(const fs::path& path) {
  const std::string bytes = read_text(path);
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw ConfigError(path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raster(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raster.data(), 0, nullptr)) {
    const std::string message = png.message;
    png_image_free(&png);
    throw ConfigError(path.string() + ": " + message);
  }
  Image image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < image.data.size(); ++i) image.data[i] = srgb_decode(raster[i] / 255.0);
  return image;
}

void write_png(const Image& image, const fs::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ConfigError("PNG output needs 1 or 3 channels");
  std::vector<unsigned char> raster(image.data.size());
  for (std::size_t i = 0; i < raster.size(); ++i) {
    raster[i] = static_cast<unsigned char>(std::lround(255.0 * srgb_encode(image.data[i])));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, raster.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + png.message);
  }
  std::string encoded(size, '\0');
  if (!png_image_write_to_memory(&png, encoded.data(), &size, 0, raster.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + png.message);
  }
  encoded.resize(size);
  write_text(path, encoded);
}

Image read_image(const fs::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".png") return read_png(path);
  throw ConfigError(path.string() + ": unsupported image type (expected .pfm or .png)");
}

// ---- Spheres ------------------------------------------------------------------

SphereSet read_spheres(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Vec3> centers;
  std::vector<double> radii;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Vec3 c;
    double r;
    if (!(ls >> c.x())) continue;
    std::string extra;
    if (!(ls >> c.y() >> c.z() >> r) || (ls >> extra)) {
      throw ConfigError(path.string() + ":" + std::to_string(line_number) + ": expected 'x y z r'");
    }
    centers.push_back(c);
    radii.push_back(r);
  }
  SphereSet s = SphereSet::from_spheres(std::move(centers), std::move(radii));
  s.validate();
  return s;
}

void write_spheres(const SphereSet& spheres, const fs::path& path) {
  std::ostringstream out;
  out << "# x y z radius\n" << std::setprecision(17);
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    const Vec3& c = spheres.centers[i];
    out << c.x() << ' ' << c.y() << ' ' << c.z() << ' ' << spheres.radii[i] << '\n';
  }
  write_text(path, out.str());
}

// ---- Hashing ------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t fnv1a64_file(const fs::path& path) { return fnv1a64(read_text(path)); }

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

}  // namespace shseed
