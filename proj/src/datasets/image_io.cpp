#include <png.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

// jpeglib.h expects FILE and size_t to be declared first.
#include <jpeglib.h>

#include "vlcl/datasets.hpp"
#include "vlcl/error.hpp"

namespace vlcl::datasets {

namespace fs = std::filesystem;

namespace {

struct Decoded {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> rgb;  // height x width x 3 in [0, 1]
};

std::optional<Decoded> decode_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) return std::nullopt;
    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&image);
        return std::nullopt;
    }
    Decoded d{image.height, image.width, std::vector<double>(buf.size())};
    for (std::size_t i = 0; i < buf.size(); ++i) d.rgb[i] = buf[i] / 255.0;
    return d;
}

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_fail(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

std::optional<Decoded> decode_jpeg(const fs::path& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) return std::nullopt;
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_fail;
    // Locals touched after setjmp live in the heap-backed result.
    auto result = std::make_unique<Decoded>();
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        std::fclose(f);
        return std::nullopt;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    result->height = cinfo.output_height;
    result->width = cinfo.output_width;
    result->rgb.resize(result->height * result->width * 3);
    std::vector<unsigned char> row(result->width * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* rows[1] = {row.data()};
        const std::size_t y = cinfo.output_scanline;
        jpeg_read_scanlines(&cinfo, rows, 1);
        for (std::size_t i = 0; i < row.size(); ++i) result->rgb[y * row.size() + i] = row[i] / 255.0;
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    std::fclose(f);
    return std::move(*result);
}

// Binary PPM (P6) and PGM (P5), maxval < 256.
std::optional<Decoded> decode_pnm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    auto skip_comments = [&] {
        in >> std::ws;
        while (in.peek() == '#') {
            std::string line;
            std::getline(in, line);
            in >> std::ws;
        }
    };
    in >> magic;
    if (magic != "P6" && magic != "P5") return std::nullopt;
    skip_comments();
    in >> w;
    skip_comments();
    in >> h;
    skip_comments();
    in >> maxval;
    if (!in || w == 0 || h == 0 || maxval == 0 || maxval > 255) return std::nullopt;
    in.get();
    const std::size_t c = magic == "P6" ? 3 : 1;
    std::vector<unsigned char> buf(w * h * c);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) return std::nullopt;
    Decoded d{h, w, std::vector<double>(w * h * 3)};
    for (std::size_t i = 0; i < w * h; ++i)
        for (std::size_t ch = 0; ch < 3; ++ch)
            d.rgb[i * 3 + ch] = buf[i * c + (c == 3 ? ch : 0)] / static_cast<double>(maxval);
    return d;
}

std::optional<Decoded> decode(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") return decode_png(path);
    if (ext == ".jpg" || ext == ".jpeg") return decode_jpeg(path);
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return decode_pnm(path);
    return std::nullopt;
}

}  // namespace

std::vector<double> resize_image(std::span<const double> pixels, std::size_t height, std::size_t width,
                                 std::size_t channels, std::size_t out_h, std::size_t out_w) {
    if (pixels.size() != height * width * channels) throw std::invalid_argument("resize_image: size mismatch");
    if (height == out_h && width == out_w) return {pixels.begin(), pixels.end()};
    std::vector<double> out(out_h * out_w * channels);
    const double sy = static_cast<double>(height) / out_h, sx = static_cast<double>(width) / out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(height - 1));
        const std::size_t y0 = static_cast<std::size_t>(fy), y1 = std::min(y0 + 1, height - 1);
        const double wy = fy - y0;
        for (std::size_t x = 0; x < out_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(width - 1));
            const std::size_t x0 = static_cast<std::size_t>(fx), x1 = std::min(x0 + 1, width - 1);
            const double wx = fx - x0;
            for (std::size_t c = 0; c < channels; ++c) {
                auto at = [&](std::size_t yy, std::size_t xx) { return pixels[(yy * width + xx) * channels + c]; };
                out[(y * out_w + x) * channels + c] = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) +
                                                      wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
            }
        }
    }
    return out;
}

Dataset load_image_folder(const fs::path& root, std::size_t image_size) {
    if (image_size == 0) throw ConfigError("image_size must be positive");
    if (!fs::is_directory(root)) throw ConfigError("dataset directory '" + root.string() + "' does not exist");
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    if (class_dirs.empty()) throw ConfigError("no classes found under '" + root.string() + "'");
    std::sort(class_dirs.begin(), class_dirs.end());

    Dataset d;
    d.height = d.width = image_size;
    d.channels = 3;
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.is_regular_file()) files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        const int label = static_cast<int>(d.class_names.size());
        std::size_t loaded = 0;
        for (const auto& file : files) {
            const auto img = decode(file);
            if (!img) {
                spdlog::warn("skipping undecodable image {}", file.string());
                continue;
            }
            const auto resized = resize_image(img->rgb, img->height, img->width, 3, image_size, image_size);
            d.pixels.insert(d.pixels.end(), resized.begin(), resized.end());
            d.labels.push_back(label);
            d.fine_labels.push_back(label);
            ++loaded;
        }
        if (loaded == 0) throw ConfigError("class directory '" + dir.string() + "' holds no decodable images");
        d.class_names.push_back(dir.filename().string());
    }
    d.fine_names = d.class_names;
    return d;
}

void write_png(const fs::path& path, std::span<const double> pixels, std::size_t height, std::size_t width,
               std::size_t channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels supported");
    if (pixels.size() != height * width * channels) throw std::invalid_argument("write_png: size mismatch");
    std::vector<unsigned char> buf(pixels.size());
    for (std::size_t i = 0; i < buf.size(); ++i)
        buf[i] = static_cast<unsigned char>(std::lround(std::clamp(pixels[i], 0.0, 1.0) * 255.0));
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(width);
    image.height = static_cast<png_uint_32>(height);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
        throw std::runtime_error("cannot write PNG '" + path.string() + "': " + image.message);
    }
}

}  // namespace vlcl::datasets
