#include "canseg/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <vector>

namespace canseg {

namespace {

#pragma pack(push, 1)
struct NiftiHeader {
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
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max, cal_min;
  float slice_duration, toffset;
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
static_assert(sizeof(NiftiHeader) == 348, "NIfTI-1 header must be 348 bytes");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_INT8 = 256;

struct RawImage {
  NiftiHeader hdr{};
  std::vector<char> payload;  // raw voxel bytes
  Int3 dims;
  Float3 spacing;
  Float3 origin;
};

// gzread handles plain files transparently, so all reads go through zlib.
RawImage read_raw(const std::string& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("nifti: cannot open " + path);
  RawImage img;
  struct Closer {
    gzFile f;
    ~Closer() { gzclose(f); }
  } closer{f};

  if (gzread(f, &img.hdr, sizeof(NiftiHeader)) != int(sizeof(NiftiHeader)))
    throw std::runtime_error("nifti: truncated header in " + path);
  const NiftiHeader& h = img.hdr;
  if (h.sizeof_hdr != 348)
    throw std::runtime_error("nifti: malformed header (sizeof_hdr != 348) in " + path);
  if (std::strncmp(h.magic, "n+1", 3) != 0)
    throw std::runtime_error("nifti: unsupported magic (expect single-file n+1) in " + path);
  if (h.dim[0] < 3) throw std::runtime_error("nifti: not a 3D image: " + path);
  for (int d = 4; d <= h.dim[0] && d < 8; ++d)
    if (h.dim[d] > 1) throw std::runtime_error("nifti: not a 3D image (4D+ data): " + path);
  for (int d = 1; d <= 3; ++d)
    if (h.dim[d] <= 0) throw std::runtime_error("nifti: non-positive dim in " + path);

  std::size_t bpp;
  switch (h.datatype) {
    case DT_UINT8:
    case DT_INT8:
      bpp = 1;
      break;
    case DT_INT16:
      bpp = 2;
      break;
    case DT_FLOAT32:
      bpp = 4;
      break;
    default:
      throw std::runtime_error("nifti: unsupported datatype " + std::to_string(h.datatype) +
                               " in " + path);
  }

  img.dims = {h.dim[1], h.dim[2], h.dim[3]};
  for (int a = 0; a < 3; ++a) {
    float s = h.pixdim[a + 1];
    img.spacing[a] = s > 0.f ? s : 1.f;
  }
  img.origin = {h.qoffset_x, h.qoffset_y, h.qoffset_z};

  long off = long(h.vox_offset);
  if (off < long(sizeof(NiftiHeader)) + 4) off = long(sizeof(NiftiHeader)) + 4;
  std::vector<char> skip(std::size_t(off) - sizeof(NiftiHeader));
  if (!skip.empty() && gzread(f, skip.data(), unsigned(skip.size())) != int(skip.size()))
    throw std::runtime_error("nifti: truncated extension block in " + path);

  std::size_t n = std::size_t(img.dims[0]) * img.dims[1] * img.dims[2];
  img.payload.resize(n * bpp);
  std::size_t got = 0;
  while (got < img.payload.size()) {
    unsigned chunk = unsigned(std::min<std::size_t>(img.payload.size() - got, 1u << 26));
    int r = gzread(f, img.payload.data() + got, chunk);
    if (r <= 0) throw std::runtime_error("nifti: truncated voxel data in " + path);
    got += std::size_t(r);
  }
  return img;
}

NiftiHeader make_header(const Int3& dims, const Float3& spacing, const Float3& origin,
                        std::int16_t datatype, std::int16_t bitpix) {
  NiftiHeader h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  h.dim[1] = std::int16_t(dims[0]);
  h.dim[2] = std::int16_t(dims[1]);
  h.dim[3] = std::int16_t(dims[2]);
  for (int d = 4; d < 8; ++d) h.dim[d] = 1;
  h.datatype = datatype;
  h.bitpix = bitpix;
  h.pixdim[0] = 1.f;
  h.pixdim[1] = spacing[0];
  h.pixdim[2] = spacing[1];
  h.pixdim[3] = spacing[2];
  h.vox_offset = 352.f;
  h.scl_slope = 1.f;
  h.scl_inter = 0.f;
  h.xyzt_units = 2;  // millimetres
  h.qform_code = 1;
  h.sform_code = 1;
  h.qoffset_x = origin[0];
  h.qoffset_y = origin[1];
  h.qoffset_z = origin[2];
  h.srow_x[0] = spacing[0];
  h.srow_x[3] = origin[0];
  h.srow_y[1] = spacing[1];
  h.srow_y[3] = origin[1];
  h.srow_z[2] = spacing[2];
  h.srow_z[3] = origin[2];
  std::memcpy(h.magic, "n+1", 4);
  return h;
}

bool gz_path(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_blob(const std::string& path, const NiftiHeader& h, const char* bytes,
                std::size_t nbytes) {
  const char extender[4] = {0, 0, 0, 0};
  if (gz_path(path)) {
    gzFile f = gzopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("nifti: cannot write " + path);
    bool ok = gzwrite(f, &h, sizeof(h)) == int(sizeof(h)) &&
              gzwrite(f, extender, 4) == 4;
    std::size_t put = 0;
    while (ok && put < nbytes) {
      unsigned chunk = unsigned(std::min<std::size_t>(nbytes - put, 1u << 26));
      ok = gzwrite(f, bytes + put, chunk) == int(chunk);
      put += chunk;
    }
    if (gzclose(f) != Z_OK || !ok) throw std::runtime_error("nifti: write failed for " + path);
  } else {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("nifti: cannot write " + path);
    bool ok = std::fwrite(&h, 1, sizeof(h), f) == sizeof(h) &&
              std::fwrite(extender, 1, 4, f) == 4 &&
              std::fwrite(bytes, 1, nbytes, f) == nbytes;
    if (std::fclose(f) != 0 || !ok) throw std::runtime_error("nifti: write failed for " + path);
  }
}

bool scaling_set(const NiftiHeader& h) {
  return h.scl_slope != 0.f && !(h.scl_slope == 1.f && h.scl_inter == 0.f);
}

}  // namespace

Volume3D load_volume(const std::string& path) {
  RawImage img = read_raw(path);
  Volume3D v(img.dims);
  v.spacing = img.spacing;
  v.origin = img.origin;
  const NiftiHeader& h = img.hdr;
  const std::size_t n = v.data.size();
  switch (h.datatype) {
    case DT_UINT8: {
      auto* p = reinterpret_cast<const std::uint8_t*>(img.payload.data());
      for (std::size_t i = 0; i < n; ++i) v.data[i] = float(p[i]);
      break;
    }
    case DT_INT8: {
      auto* p = reinterpret_cast<const std::int8_t*>(img.payload.data());
      for (std::size_t i = 0; i < n; ++i) v.data[i] = float(p[i]);
      break;
    }
    case DT_INT16: {
      auto* p = reinterpret_cast<const std::int16_t*>(img.payload.data());
      for (std::size_t i = 0; i < n; ++i) v.data[i] = float(p[i]);
      break;
    }
    case DT_FLOAT32:
      std::memcpy(v.data.data(), img.payload.data(), n * sizeof(float));
      break;
  }
  if (scaling_set(h))
    for (auto& x : v.data) x = x * h.scl_slope + h.scl_inter;
  return v;
}

LabelVolume load_label_volume(const std::string& path) {
  RawImage img = read_raw(path);
  const NiftiHeader& h = img.hdr;
  if (h.datatype == DT_FLOAT32)
    throw std::runtime_error("nifti: label volume must have an integer dtype: " + path);
  if (scaling_set(h))
    throw std::runtime_error("nifti: label volume must not carry intensity scaling: " + path);
  LabelVolume v(img.dims);
  v.spacing = img.spacing;
  v.origin = img.origin;
  const std::size_t n = v.data.size();
  switch (h.datatype) {
    case DT_UINT8:
      std::memcpy(v.data.data(), img.payload.data(), n);
      break;
    case DT_INT8: {
      auto* p = reinterpret_cast<const std::int8_t*>(img.payload.data());
      for (std::size_t i = 0; i < n; ++i) {
        if (p[i] < 0) throw std::runtime_error("nifti: negative label value in " + path);
        v.data[i] = std::uint8_t(p[i]);
      }
      break;
    }
    case DT_INT16: {
      auto* p = reinterpret_cast<const std::int16_t*>(img.payload.data());
      for (std::size_t i = 0; i < n; ++i) {
        if (p[i] < 0 || p[i] > 255)
          throw std::runtime_error("nifti: label value out of range in " + path);
        v.data[i] = std::uint8_t(p[i]);
      }
      break;
    }
  }
  return v;
}

void save_volume(const Volume3D& v, const std::string& path) {
  v.validate();
  NiftiHeader h = make_header(v.dims, v.spacing, v.origin, DT_FLOAT32, 32);
  write_blob(path, h, reinterpret_cast<const char*>(v.data.data()),
             v.data.size() * sizeof(float));
}

void save_volume(const LabelVolume& v, const std::string& path) {
  v.validate();
  NiftiHeader h = make_header(v.dims, v.spacing, v.origin, DT_UINT8, 8);
  write_blob(path, h, reinterpret_cast<const char*>(v.data.data()), v.data.size());
}

}  // namespace canseg
