#pragma once

// PNG read/write (libpng) plus float<->byte image conversions.  Images in
// the library are CHW float tensors in [0,1]; on disk they are 8-bit
// grayscale or RGB PNGs.

#include <png.h>

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "crsdiff/core/common.hpp"
#include "crsdiff/core/tensor.hpp"

namespace crsdiff {

struct ImageU8 {
    int w = 0, h = 0, channels = 0;
    std::vector<uint8_t> data;  // row-major, interleaved
};

inline void write_png(const std::string& path, const ImageU8& img) {
    require<InputError>(img.channels == 1 || img.channels == 3, "write_png: 1 or 3 channels");
    FILE* fp = std::fopen(path.c_str(), "wb");
    require<IoError>(fp != nullptr, "cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] = const_cast<png_bytep>(
            img.data.data() + static_cast<size_t>(y) * img.w * img.channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

inline ImageU8 read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    require<IoError>(fp != nullptr, "cannot open for reading: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("png read failed: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color = png_get_color_type(png, info);
    png_byte depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    int channels = png_get_channels(png, info);
    ImageU8 img;
    img.w = static_cast<int>(w);
    img.h = static_cast<int>(h);
    img.channels = channels;
    img.data.resize(static_cast<size_t>(w) * h * channels);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = img.data.data() + static_cast<size_t>(y) * w * channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

// [C,H,W] float in [0,1] -> interleaved bytes.
inline ImageU8 to_u8(const Tensorf& chw) {
    require<InputError>(chw.rank() == 3, "to_u8: CHW tensor required");
    ImageU8 img;
    img.channels = chw.shape[0];
    img.h = chw.shape[1];
    img.w = chw.shape[2];
    img.data.resize(static_cast<size_t>(img.w) * img.h * img.channels);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.channels; ++c) {
                float v = clamp01(chw.at(c, y, x));
                img.data[(static_cast<size_t>(y) * img.w + x) * img.channels + c] =
                    static_cast<uint8_t>(v * 255.0f + 0.5f);
            }
    return img;
}

inline Tensorf from_u8(const ImageU8& img) {
    Tensorf chw({img.channels, img.h, img.w});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < img.channels; ++c)
                chw.at(c, y, x) =
                    img.data[(static_cast<size_t>(y) * img.w + x) * img.channels + c] / 255.0f;
    return chw;
}

inline double psnr(const Tensorf& a, const Tensorf& b) {
    require<InputError>(a.same_shape(b), "psnr: shape mismatch");
    double mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0) return 99.0;
    return 10.0 * std::log10(1.0 / mse);
}

// Tiles N CHW images into a roughly square contact sheet.
inline Tensorf tile_grid(const std::vector<Tensorf>& images, int pad = 2) {
    require<InputError>(!images.empty(), "tile_grid: no images");
    int C = images[0].shape[0], H = images[0].shape[1], W = images[0].shape[2];
    int n = static_cast<int>(images.size());
    int cols = 1;
    while (cols * cols < n) ++cols;
    int rows = static_cast<int>(idiv_ceil(n, cols));
    Tensorf grid({C, rows * (H + pad) + pad, cols * (W + pad) + pad});
    grid.fill(1.0f);
    for (int i = 0; i < n; ++i) {
        int r = i / cols, c = i % cols;
        int oy = pad + r * (H + pad), ox = pad + c * (W + pad);
        for (int ch = 0; ch < C; ++ch)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    grid.at(ch, oy + y, ox + x) = images[static_cast<size_t>(i)].at(ch, y, x);
    }
    return grid;
}

}  // namespace crsdiff
