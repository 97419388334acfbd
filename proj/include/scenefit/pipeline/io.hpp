#pragma once

// File formats: RGB as 8-bit PNG, depth as 16-bit gray PNG in millimeters
// (0 = invalid), masks as 8-bit gray PNGs (>127 = inside) listed in a
// manifest, meshes as ASCII OBJ, everything else as JSON.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "scenefit/camera/camera.hpp"
#include "scenefit/mesh_opt/pose.hpp"
#include "scenefit/pipeline/json_io.hpp"

namespace scenefit::pipeline {

namespace fs = std::filesystem;

/// Decoded PNG samples, row-major interleaved, at 8 or 16 bits.
struct RawImage {
  int width = 0, height = 0, channels = 1, bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const fs::path& p, const char* mode) {
  FilePtr f(std::fopen(p.c_str(), mode));
  if (!f) throw InvalidInput("cannot open '" + p.string() + "'");
  return f;
}

inline int color_type(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 3: return PNG_COLOR_TYPE_RGB;
    default: throw InvalidInput("PNG images must have 1 or 3 channels");
  }
}

}  // namespace detail

inline void write_png(const fs::path& path, const RawImage& img) {
  if (img.bit_depth != 8 && img.bit_depth != 16) throw InvalidInput("PNG bit depth must be 8 or 16");
  const int ct = detail::color_type(img.channels);
  if (img.samples.size() != static_cast<std::size_t>(img.width) * img.height * img.channels)
    throw InvalidInput("PNG sample count does not match its shape");
  auto f = detail::open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialization failed");
  }
  const std::size_t bytes = img.bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels * bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to write '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.width, img.height, img.bit_depth, ct, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t per_row = static_cast<std::size_t>(img.width) * img.channels;
  for (int r = 0; r < img.height; ++r) {
    for (std::size_t i = 0; i < per_row; ++i) {
      const std::uint16_t v = img.samples[r * per_row + i];
      if (bytes == 1) {
        row[i] = static_cast<png_byte>(v);
      } else {
        row[2 * i] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * i + 1] = static_cast<png_byte>(v & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline RawImage read_png(const fs::path& path) {
  auto f = detail::open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw InvalidInput("'" + path.string() + "' is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("libpng initialization failed");
  }
  RawImage img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InvalidInput("corrupt PNG '" + path.string() + "'");
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int ct = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (ct == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (ct & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  img.bit_depth = depth;
  if (img.channels != 1 && img.channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InvalidInput("unsupported PNG layout in '" + path.string() + "'");
  }
  const std::size_t per_row = static_cast<std::size_t>(img.width) * img.channels;
  row.resize(png_get_rowbytes(png, info));
  img.samples.resize(per_row * img.height);
  for (int r = 0; r < img.height; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t i = 0; i < per_row; ++i)
      img.samples[r * per_row + i] =
          depth == 16 ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]) : row[i];
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

inline std::uint16_t to_mm(double meters) {
  if (!(meters > 0.0)) return 0;
  return static_cast<std::uint16_t>(std::clamp<long>(std::lround(meters * 1000.0), 0, 65535));
}

inline void save_rgb(const fs::path& p, const ImageD& rgb) {
  RawImage r{rgb.width, rgb.height, 3, 8, {}};
  r.samples.reserve(rgb.data.size());
  for (double v : rgb.data) r.samples.push_back(to_u8(v));
  write_png(p, r);
}

inline ImageD load_rgb(const fs::path& p) {
  const RawImage r = read_png(p);
  if (r.channels != 3) throw InvalidInput("'" + p.string() + "' is not an RGB image");
  ImageD img(r.width, r.height, 3);
  const double scale = r.bit_depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = r.samples[i] / scale;
  return img;
}

inline void save_depth(const fs::path& p, const ImageD& depth) {
  RawImage r{depth.width, depth.height, 1, 16, {}};
  r.samples.reserve(depth.data.size());
  for (double v : depth.data) r.samples.push_back(to_mm(v));
  write_png(p, r);
}

inline ImageD load_depth(const fs::path& p) {
  const RawImage r = read_png(p);
  if (r.channels != 1 || r.bit_depth != 16) throw InvalidInput("'" + p.string() + "' is not a 16-bit depth image");
  ImageD img(r.width, r.height, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = r.samples[i] / 1000.0;
  return img;
}

inline void save_mask(const fs::path& p, const Mask& m) {
  RawImage r{m.width, m.height, 1, 8, {}};
  r.samples.reserve(m.data.size());
  for (auto v : m.data) r.samples.push_back(v ? 255 : 0);
  write_png(p, r);
}

inline Mask load_mask(const fs::path& p) {
  const RawImage r = read_png(p);
  if (r.channels != 1) throw InvalidInput("'" + p.string() + "' is not a gray mask");
  const int cut = r.bit_depth == 16 ? 32767 : 127;
  Mask m(r.width, r.height, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = r.samples[i] > cut;
  return m;
}

/// The observation as it reads back from the file formats.
inline ObservationSet quantize(const ObservationSet& obs) {
  ObservationSet q = obs;
  for (double& v : q.rgb.data) v = to_u8(v) / 255.0;
  for (double& v : q.depth.data) v = to_mm(v) / 1000.0;
  return q;
}

inline void write_text(const fs::path& p, const std::string& s) {
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot write '" + p.string() + "'");
  f << s;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw InvalidInput("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

inline json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw InvalidInput("bad JSON in '" + p.string() + "': " + e.what());
  }
}

/// Writes rgb.png, depth.png, mask_<k>.png, masks.json and intrinsics.json.
inline void save_observation(const fs::path& dir, const ObservationSet& obs) {
  fs::create_directories(dir);
  save_rgb(dir / "rgb.png", obs.rgb);
  save_depth(dir / "depth.png", obs.depth);
  json manifest = json::array();
  for (std::size_t k = 0; k < obs.masks.size(); ++k) {
    const std::string name = "mask_" + std::to_string(k) + ".png";
    save_mask(dir / name, obs.masks[k]);
    manifest.push_back(name);
  }
  write_json(dir / "masks.json", {{"masks", manifest}});
  write_json(dir / "intrinsics.json", obs.intrinsics);
}

/// Reads an observation; mask paths in the manifest are relative to it.
inline ObservationSet load_observation(const fs::path& rgb, const fs::path& depth, const fs::path& masks,
                                       const fs::path& intrinsics) {
  ObservationSet obs;
  obs.rgb = load_rgb(rgb);
  obs.depth = load_depth(depth);
  try {
    obs.intrinsics = read_json(intrinsics).get<CameraIntrinsics>();
    const json manifest = read_json(masks);
    for (const auto& name : manifest.at("masks")) obs.masks.push_back(load_mask(masks.parent_path() / name.get<std::string>()));
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad observation metadata: ") + e.what());
  }
  obs.validate();
  if (obs.masks.empty()) throw InvalidInput("observation has no masks");
  return obs;
}

inline std::string obj_string(const TriMesh& m) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& v : m.vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& f : m.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  return os.str();
}

inline void write_obj(const fs::path& p, const TriMesh& m) { write_text(p, obj_string(m)); }

/// Vertices and triangles of an OBJ; texture and normal indices are ignored.
inline TriMesh read_obj(const fs::path& p) {
  std::istringstream in(read_text(p));
  TriMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3d v;
      if (!(ls >> v.x >> v.y >> v.z)) throw InvalidInput("bad vertex line in '" + p.string() + "'");
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
      if (idx.size() < 3) throw InvalidInput("bad face line in '" + p.string() + "'");
      for (std::size_t i = 1; i + 1 < idx.size(); ++i) m.faces.push_back({idx[0], idx[i], idx[i + 1]});
    }
  }
  m.validate();
  return m;
}

/// 4×4 row-major [R t; 0 1].
inline json pose_json(const mesh_opt::Pose& p) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r)
    rows.push_back({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2), p.translation[r]});
  rows.push_back({0.0, 0.0, 0.0, 1.0});
  return rows;
}

inline mesh_opt::Pose pose_from_json(const json& j) {
  mesh_opt::Pose p;
  if (!j.is_array() || j.size() != 4) throw InvalidInput("pose must be a 4x4 matrix");
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = j[r][c].get<double>();
    p.translation[r] = j[r][3].get<double>();
  }
  return p;
}

}  // namespace scenefit::pipeline
