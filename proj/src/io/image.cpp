#include "protoseg/io/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "protoseg/core/error.hpp"

namespace protoseg::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

std::array<std::uint8_t, 3> RgbImage::pixel(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.rgb.data() + static_cast<std::size_t>(y) * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) throw IoError("cannot read PNG " + path.string());
  img.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode PNG " + path.string());
  }
  return out;
}

const char* plane_name(Plane p) {
  switch (p) {
    case Plane::Axial: return "axial";
    case Plane::Sagittal: return "sagittal";
    case Plane::Coronal: return "coronal";
  }
  return "?";
}

int mid_index(Dims3 d, Plane p) {
  switch (p) {
    case Plane::Axial: return d.d / 2;
    case Plane::Sagittal: return d.h / 2;
    case Plane::Coronal: return d.w / 2;
  }
  return 0;
}

SliceGrid slice_grid(Dims3 d, Plane p, int index) {
  const int extent = p == Plane::Axial ? d.d : p == Plane::Sagittal ? d.h : d.w;
  if (index < 0 || index >= extent)
    throw RangeError(std::string(plane_name(p)) + " slice " + std::to_string(index) + " outside [0, " +
                     std::to_string(extent) + ")");
  SliceGrid g;
  auto at = [&](int h, int w, int z) { return (static_cast<std::size_t>(h) * d.w + w) * d.d + z; };
  switch (p) {
    case Plane::Axial:  // columns h, rows w
      g.width = d.h;
      g.height = d.w;
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) g.voxel.push_back(at(x, g.height - 1 - y, index));
      break;
    case Plane::Sagittal:  // columns w, rows d
      g.width = d.w;
      g.height = d.d;
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) g.voxel.push_back(at(index, x, g.height - 1 - y));
      break;
    case Plane::Coronal:  // columns h, rows d
      g.width = d.h;
      g.height = d.d;
      for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) g.voxel.push_back(at(x, index, g.height - 1 - y));
      break;
  }
  return g;
}

RgbImage overlay_slice(std::span<const double> voxels, Dims3 dims, const data::LabelVolume* labels, Plane plane,
                       int index, double alpha) {
  if (voxels.size() != dims.size()) throw ShapeMismatch("overlay_slice: voxel count does not match grid");
  if (labels && labels->values.size() != dims.size()) throw ShapeMismatch("overlay_slice: label grid mismatch");
  const SliceGrid g = slice_grid(dims, plane, index);
  double lo = 1e300, hi = -1e300;
  for (std::size_t v : g.voxel) {
    lo = std::min(lo, voxels[v]);
    hi = std::max(hi, voxels[v]);
  }
  const double range = hi > lo ? hi - lo : 1.0;
  static constexpr double kColors[4][3] = {{0, 0, 0}, {255, 0, 0}, {0, 255, 0}, {255, 255, 0}};
  RgbImage img{g.width, g.height, std::vector<std::uint8_t>(g.voxel.size() * 3)};
  for (std::size_t i = 0; i < g.voxel.size(); ++i) {
    const std::uint8_t gray = to_byte(255.0 * (voxels[g.voxel[i]] - lo) / range);
    const int label = labels ? labels->values[g.voxel[i]] : 0;
    for (int c = 0; c < 3; ++c)
      img.rgb[i * 3 + c] = label == 0 ? gray : to_byte((1.0 - alpha) * gray + alpha * kColors[label][c]);
  }
  return img;
}

RgbImage heatmap_slice(std::span<const double> field, Dims3 dims, Plane plane, int index) {
  if (field.size() != dims.size()) throw ShapeMismatch("heatmap_slice: field size does not match grid");
  const SliceGrid g = slice_grid(dims, plane, index);
  double hi = 0.0;
  for (std::size_t v : g.voxel) hi = std::max(hi, field[v]);
  RgbImage img{g.width, g.height, std::vector<std::uint8_t>(g.voxel.size() * 3)};
  for (std::size_t i = 0; i < g.voxel.size(); ++i) {
    const double t = hi > 0.0 ? std::clamp(field[g.voxel[i]] / hi, 0.0, 1.0) : 0.0;
    img.rgb[i * 3] = to_byte(255.0 * std::min(1.0, 3.0 * t));
    img.rgb[i * 3 + 1] = to_byte(255.0 * std::clamp(3.0 * t - 1.0, 0.0, 1.0));
    img.rgb[i * 3 + 2] = to_byte(255.0 * std::clamp(3.0 * t - 2.0, 0.0, 1.0));
  }
  return img;
}

}  // namespace protoseg::io
