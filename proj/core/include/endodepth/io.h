#ifndef ENDODEPTH_IO_H_
#define ENDODEPTH_IO_H_

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "endodepth/geometry.h"
#include "endodepth/grid.h"
#include "endodepth/refine.h"

namespace endodepth {

// Malformed or unreadable file; the message starts with the path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::filesystem::path& path, const std::string& what);
};

// PFM: "Pf" (1 channel) or "PF" (3 channels), negative scale for little
// endian, float32 rows stored bottom to top. Values are narrowed to float.
void WritePfm(const std::filesystem::path& path, const Grid& grid);
Grid ReadPfm(const std::filesystem::path& path);
DepthMap ReadDepthPfm(const std::filesystem::path& path);
ImageBuffer ReadImagePfm(const std::filesystem::path& path);

// Binary PGM (1 channel) or PPM (3 channels), maxval 255 or 65535.
void WritePnm(const std::filesystem::path& path, const ImageBuffer& image,
              int bit_depth = 8);
ImageBuffer ReadPnm(const std::filesystem::path& path);

// Reads .pfm, .pgm or .ppm by extension.
ImageBuffer ReadImage(const std::filesystem::path& path);

// ASCII PLY with double x y z and, when colours are present, uchar r g b.
void WritePly(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud ReadPly(const std::filesystem::path& path);

// iteration,level,total,ph,ct,st,es
void WriteLossTraceCsv(const std::filesystem::path& path,
                       const RefineResult& result);

// Plain-text intrinsics "fx fy cx cy width height" and pose lists with one
// row-major 3x4 [R|t] per line.
void WriteIntrinsics(const std::filesystem::path& path, const Intrinsics& K);
Intrinsics ReadIntrinsics(const std::filesystem::path& path);
void WritePoses(const std::filesystem::path& path,
                const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> ReadPoses(const std::filesystem::path& path);

// Doubles printed so that reading them back gives the same value.
std::string FormatDouble(double v);

}  // namespace endodepth

#endif  // ENDODEPTH_IO_H_
