#include "softmesh/image.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace softmesh {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

uint8_t quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::floor(c * 255.0 + 0.5));
}

}  // namespace

void save_png(const std::string& path, const Array& image) {
    // volatile: read again after the setjmp landing point
    const volatile bool color = image.rank() == 3 && image.dim(2) == 3;
    const bool gray = image.rank() == 2;
    if (!color && !gray)
        throw TensorError("save_png: expected [H,W,3] or [H,W], got " +
                          shape_str(image.shape()));
    const int h = static_cast<int>(image.dim(0));
    const int w = static_cast<int>(image.dim(1));
    const int ch = color ? 3 : 1;

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw TensorError("save_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw TensorError("save_png: libpng init failed");
    }
    std::vector<uint8_t> buf(static_cast<size_t>(h) * w * ch);
    for (int64_t i = 0; i < image.size(); ++i) buf[static_cast<size_t>(i)] = quantize(image[i]);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int i = 0; i < h; ++i) rows[static_cast<size_t>(i)] = buf.data() + static_cast<size_t>(i) * w * ch;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw TensorError("save_png: libpng write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 color ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Array load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw TensorError("load_png: cannot open " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw TensorError("load_png: not a PNG file: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw TensorError("load_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw TensorError("load_png: libpng read failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_expand_gray_1_2_4_to_8(png);
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    const int h = static_cast<int>(png_get_image_height(png, info));
    const int w = static_cast<int>(png_get_image_width(png, info));
    const size_t rowbytes = png_get_rowbytes(png, info);
    if (rowbytes != static_cast<size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw TensorError("load_png: unexpected row size in " + path);
    }
    std::vector<uint8_t> buf(static_cast<size_t>(h) * rowbytes);
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int i = 0; i < h; ++i) rows[static_cast<size_t>(i)] = buf.data() + static_cast<size_t>(i) * rowbytes;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Array out({h, w, 3});
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<double>(buf[static_cast<size_t>(i)]) / 255.0;
    return out;
}

}  // namespace softmesh
