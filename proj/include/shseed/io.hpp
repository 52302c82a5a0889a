#pragma once

// File formats: Wavefront OBJ meshes, PFM and PNG images, plain-text sphere sets.
// Images are linear in memory; PNG files are sRGB-encoded 8-bit.

#include "shseed/geometry.hpp"
#include "shseed/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace shseed {

/// Thrown on I/O failures (unreadable or unwritable files). Maps to the config exit code.
class IoError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Faces may be polygons (fan-triangulated) with v, v/vt, v//vn or v/vt/vn corners and
/// negative (relative) indices. Each distinct corner tuple becomes one vertex. Normals
/// are computed when any corner lacks one; UVs are kept only when every corner has one.
TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

/// "PF" (RGB) or "Pf" (gray) with either byte order. Rows are stored bottom to top.
Image read_pfm(const std::filesystem::path& path);
/// Writes little-endian float32; 1-channel images as "Pf", others must be RGB.
void write_pfm(const Image& image, const std::filesystem::path& path);

double srgb_encode(double linear);
double srgb_decode(double encoded);

/// Gray, gray+alpha, RGB or RGBA at 8 or 16 bits; alpha is dropped. Returns linear RGB.
Image read_png(const std::filesystem::path& path);
/// Clamps to [0, 1] and writes 8-bit sRGB, gray for 1-channel images.
void write_png(const Image& image, const std::filesystem::path& path);

/// Dispatches on the extension (.pfm or .png).
Image read_image(const std::filesystem::path& path);

/// One sphere per line: "x y z r". Blank lines and '#' comments are skipped.
SphereSet read_spheres(const std::filesystem::path& path);
void write_spheres(const SphereSet& spheres, const std::filesystem::path& path);

/// 64-bit FNV-1a of a byte string and of a file's contents.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
/// Lower-case 16-digit hex.
std::string hex64(std::uint64_t value);

std::string read_text(const std::filesystem::path& path);
/// Replaces the file atomically (temporary file then rename).
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace shseed
