#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2v/tensor.hpp"

namespace v2v {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit PNG to [0, 1]. Gray images become 1 channel, RGB(A) 3 channels
/// (alpha dropped). Palette and 16-bit images are converted.
Tensor read_png(const std::filesystem::path& path);

/// Writes 1 channel as gray, 3 channels as RGB. Values are clamped to
/// [0, 1] and quantized with round-half-up.
void write_png(const std::filesystem::path& path, const Tensor& image);

/// All *.png files in dir in lexicographic order, as 3-channel frames.
/// Throws IoError for a missing or empty directory and ShapeError naming
/// the first file whose dimensions differ from the first frame.
std::vector<Frame> load_frames(const std::filesystem::path& dir);

/// Writes prefix_0000.png, prefix_0001.png, ... creating dir if needed.
void save_frames(const std::filesystem::path& dir, const std::vector<Tensor>& frames,
                 const std::string& prefix = "frame");

std::string frame_filename(int index, const std::string& prefix = "frame", const std::string& ext = ".png");

}  // namespace v2v
