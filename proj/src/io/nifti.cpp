#include "protoseg/io/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "protoseg/core/error.hpp"

namespace protoseg::io {
namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1, intent_p2, intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope, scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax, glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code, sform_code;
  float quatern_b, quatern_c, quatern_d;
  float qoffset_x, qoffset_y, qoffset_z;
  float srow_x[4], srow_y[4], srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348);

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void swap_header(Nifti1Header& h) {
  swap_bytes(h.sizeof_hdr);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
}

class GzFile {
 public:
  GzFile(const std::filesystem::path& path, const char* mode) : f_(gzopen(path.string().c_str(), mode)) {
    if (!f_) throw IoError("cannot open " + path.string());
  }
  ~GzFile() {
    if (f_) gzclose(f_);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  void read(void* dst, std::size_t n, const std::filesystem::path& path) {
    auto* p = static_cast<unsigned char*>(dst);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int got = gzread(f_, p, chunk);
      if (got <= 0) throw IoError("truncated NIfTI file " + path.string());
      p += got;
      n -= static_cast<std::size_t>(got);
    }
  }
  void write(const void* src, std::size_t n, const std::filesystem::path& path) {
    const auto* p = static_cast<const unsigned char*>(src);
    while (n > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
      const int put = gzwrite(f_, p, chunk);
      if (put <= 0) throw IoError("write failed for " + path.string());
      p += put;
      n -= static_cast<std::size_t>(put);
    }
  }
  void close(const std::filesystem::path& path) {
    const int rc = gzclose(f_);
    f_ = nullptr;
    if (rc != Z_OK) throw IoError("close failed for " + path.string());
  }

 private:
  gzFile f_;
};

template <typename T>
void decode(const unsigned char* raw, std::size_t n, bool swap, std::vector<double>& out) {
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw + i * sizeof(T), sizeof(T));
    if (swap) swap_bytes(v);
    out[i] = static_cast<double>(v);
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

NiftiVolume read_nifti(const std::filesystem::path& path) {
  GzFile f(path, "rb");
  Nifti1Header h{};
  f.read(&h, sizeof(h), path);
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    swap_header(h);
    swap = true;
    if (h.sizeof_hdr != 348) throw IoError(path.string() + " is not a NIfTI-1 file");
  }
  if (std::strncmp(h.magic, "n+1", 3) != 0) throw IoError(path.string() + ": only single-file NIfTI-1 is supported");
  if (h.dim[0] < 3) throw ShapeError(path.string() + ": expected a 3-D volume");
  for (int a = 4; a <= h.dim[0] && a < 8; ++a)
    if (h.dim[a] > 1) throw ShapeError(path.string() + ": expected a single 3-D volume");

  NiftiVolume vol;
  vol.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a) vol.spacing[static_cast<std::size_t>(a)] = h.pixdim[a + 1] > 0 ? h.pixdim[a + 1] : 1.0;

  const auto offset = static_cast<std::size_t>(h.vox_offset);
  if (offset > sizeof(h)) {
    std::vector<unsigned char> skip(offset - sizeof(h));
    f.read(skip.data(), skip.size(), path);
  }
  const std::size_t n = vol.dims.size();
  const std::size_t bytes_per = static_cast<std::size_t>(h.bitpix) / 8;
  std::vector<unsigned char> raw(n * bytes_per);
  f.read(raw.data(), raw.size(), path);

  std::vector<double> file_order(n);
  switch (h.datatype) {
    case 2: decode<std::uint8_t>(raw.data(), n, swap, file_order); break;
    case 4: decode<std::int16_t>(raw.data(), n, swap, file_order); break;
    case 8: decode<std::int32_t>(raw.data(), n, swap, file_order); break;
    case 16: decode<float>(raw.data(), n, swap, file_order); break;
    case 64: decode<double>(raw.data(), n, swap, file_order); break;
    case 256: decode<std::int8_t>(raw.data(), n, swap, file_order); break;
    case 512: decode<std::uint16_t>(raw.data(), n, swap, file_order); break;
    case 768: decode<std::uint32_t>(raw.data(), n, swap, file_order); break;
    default: throw IoError(path.string() + ": unsupported NIfTI datatype " + std::to_string(h.datatype));
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope) && !(h.scl_slope == 1.0f && h.scl_inter == 0.0f))
    for (double& v : file_order) v = v * h.scl_slope + h.scl_inter;

  const Dims3 d = vol.dims;
  vol.voxels.resize(n);
  for (int k = 0; k < d.d; ++k)
    for (int j = 0; j < d.w; ++j)
      for (int i = 0; i < d.h; ++i)
        vol.voxels[(static_cast<std::size_t>(i) * d.w + j) * d.d + k] =
            file_order[i + static_cast<std::size_t>(d.h) * (j + static_cast<std::size_t>(d.w) * k)];
  return vol;
}

void write_nifti(const std::filesystem::path& path, const NiftiVolume& vol, NiftiType type) {
  const Dims3 d = vol.dims;
  if (vol.voxels.size() != d.size()) throw ShapeError("write_nifti: voxel count does not match dims");
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = static_cast<std::int16_t>(d.h);
  h.dim[2] = static_cast<std::int16_t>(d.w);
  h.dim[3] = static_cast<std::int16_t>(d.d);
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(vol.spacing[static_cast<std::size_t>(a)]);
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.xyzt_units = 2;  // mm
  h.qform_code = 0;
  h.sform_code = 1;
  h.srow_x[0] = h.pixdim[1];
  h.srow_y[1] = h.pixdim[2];
  h.srow_z[2] = h.pixdim[3];
  std::memcpy(h.magic, "n+1\0", 4);

  std::size_t bytes_per = 0;
  switch (type) {
    case NiftiType::UInt8: h.datatype = 2; bytes_per = 1; break;
    case NiftiType::Int16: h.datatype = 4; bytes_per = 2; break;
    case NiftiType::Float32: h.datatype = 16; bytes_per = 4; break;
    case NiftiType::Float64: h.datatype = 64; bytes_per = 8; break;
  }
  h.bitpix = static_cast<std::int16_t>(bytes_per * 8);

  const std::size_t n = d.size();
  std::vector<unsigned char> raw(n * bytes_per);
  for (int k = 0; k < d.d; ++k)
    for (int j = 0; j < d.w; ++j)
      for (int i = 0; i < d.h; ++i) {
        const double v = vol.voxels[(static_cast<std::size_t>(i) * d.w + j) * d.d + k];
        unsigned char* dst = raw.data() + (i + static_cast<std::size_t>(d.h) * (j + static_cast<std::size_t>(d.w) * k)) * bytes_per;
        switch (type) {
          case NiftiType::UInt8: {
            const auto x = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
            std::memcpy(dst, &x, 1);
            break;
          }
          case NiftiType::Int16: {
            const auto x = static_cast<std::int16_t>(std::clamp(std::lround(v), -32768L, 32767L));
            std::memcpy(dst, &x, 2);
            break;
          }
          case NiftiType::Float32: {
            const auto x = static_cast<float>(v);
            std::memcpy(dst, &x, 4);
            break;
          }
          case NiftiType::Float64: std::memcpy(dst, &v, 8); break;
        }
      }

  const bool gz = ends_with(path.string(), ".gz");
  GzFile f(path, gz ? "wb6" : "wbT");
  f.write(&h, sizeof(h), path);
  const char extension[4] = {0, 0, 0, 0};
  f.write(extension, 4, path);
  f.write(raw.data(), raw.size(), path);
  f.close(path);
}

}  // namespace protoseg::io
