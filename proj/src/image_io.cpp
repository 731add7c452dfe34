#include "v2v/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace v2v {

Tensor read_png(const std::filesystem::path& path) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw IoError("cannot read " + path.string() + ": " + img.message);
    }
    const bool gray = (img.format & PNG_FORMAT_FLAG_COLOR) == 0;
    img.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    const int channels = gray ? 1 : 3;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
        const std::string msg = img.message;
        png_image_free(&img);
        throw IoError("cannot decode " + path.string() + ": " + msg);
    }
    const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
    Tensor out(channels, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                out.at(c, y, x) = buffer[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.0;
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.channels() != 1 && image.channels() != 3) {
        throw ShapeError("write_png: expected 1 or 3 channels, got " + image.shape_string());
    }
    if (image.empty()) throw ShapeError("write_png: empty image");
    const int w = image.width(), h = image.height(), channels = image.channels();
    std::vector<png_byte> buffer(static_cast<std::size_t>(w) * h * channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                buffer[(static_cast<std::size_t>(y) * w + x) * channels + c] =
                    static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
            }
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(w);
    img.height = static_cast<png_uint_32>(h);
    img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        throw IoError("cannot write " + path.string() + ": " + img.message);
    }
}

std::vector<Frame> load_frames(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
    }
    if (files.empty()) throw IoError("no PNG frames in " + dir.string());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    std::vector<Frame> frames;
    for (const auto& f : files) {
        Tensor t = read_png(f);
        if (t.channels() == 1) {
            Tensor rgb(3, t.height(), t.width());
            for (int c = 0; c < 3; ++c) std::copy(t.plane(0).begin(), t.plane(0).end(), rgb.plane(c).begin());
            t = std::move(rgb);
        }
        if (!frames.empty() && !t.same_shape(frames.front())) {
            throw ShapeError("dimension mismatch: " + f.string() + " is " + t.shape_string() + ", expected " +
                             frames.front().shape_string());
        }
        frames.push_back(std::move(t));
    }
    return frames;
}

std::string frame_filename(int index, const std::string& prefix, const std::string& ext) {
    char digits[16];
    std::snprintf(digits, sizeof digits, "%04d", index);
    return prefix + "_" + digits + ext;
}

void save_frames(const std::filesystem::path& dir, const std::vector<Tensor>& frames, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        write_png(dir / frame_filename(static_cast<int>(i), prefix), frames[i]);
    }
}

}  // namespace v2v
