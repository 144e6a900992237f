#include "sandesc/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace sandesc {

namespace {

uint8_t to_byte(float v) {
    const float c = std::min(std::max(v, 0.f), 1.f);
    return uint8_t(std::lround(c * 255.f));
}

void skip_pnm_whitespace(std::istream& in) {
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            return;
        }
    }
}

Image load_pnm(std::ifstream& in, const std::string& path) {
    char magic[2];
    in.read(magic, 2);
    SD_CHECK(in && magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6'),
             "image: '", path, "' is not a binary PGM/PPM file");
    const int channels = magic[1] == '6' ? 3 : 1;
    int w = 0, h = 0, maxval = 0;
    skip_pnm_whitespace(in);
    in >> w;
    skip_pnm_whitespace(in);
    in >> h;
    skip_pnm_whitespace(in);
    in >> maxval;
    SD_CHECK(in && w > 0 && h > 0, "image: malformed PNM header in '", path, "'");
    SD_CHECK(maxval == 255, "image: only maxval 255 PNM supported, '", path, "' has ", maxval);
    in.get();  // single whitespace after header

    std::vector<uint8_t> raw(size_t(w) * h * channels);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    SD_CHECK(in.gcount() == std::streamsize(raw.size()), "image: truncated PNM payload in '",
             path, "'");
    Image img(w, h, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = raw[(size_t(y) * w + x) * channels + c] / 255.f;
    return img;
}

Image load_png_file(const std::string& path) {
    FILE* fp = fopen(path.c_str(), "rb");
    SD_CHECK(fp, "image: cannot open '", path, "'");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        fclose(fp);
        fail("image: libpng init failed for '", path, "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fclose(fp);
        fail("image: libpng failed to decode '", path, "'");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int w = int(png_get_image_width(png, info));
    const int h = int(png_get_image_height(png, info));
    const int channels = int(png_get_channels(png, info));
    SD_CHECK(channels == 1 || channels == 3, "image: unsupported PNG channel count ", channels,
             " in '", path, "'");
    std::vector<uint8_t> raw(size_t(w) * h * channels);
    std::vector<png_bytep> rows(static_cast<size_t>(h), nullptr);
    for (int y = 0; y < h; ++y) rows[size_t(y)] = raw.data() + size_t(y) * w * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    fclose(fp);

    Image img(w, h, channels);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < channels; ++c)
                img.at(c, y, x) = raw[(size_t(y) * w + x) * channels + c] / 255.f;
    return img;
}

void save_pnm(const Image& img, const std::string& path, int channels) {
    std::ofstream out(path, std::ios::binary);
    SD_CHECK(out, "image: cannot write '", path, "'");
    out << (channels == 3 ? "P6\n" : "P5\n") << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(size_t(img.width) * img.height * channels);
    const Image src = channels == 3 ? to_rgb(img) : to_gray(img);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < channels; ++c)
                raw[(size_t(y) * img.width + x) * channels + c] = to_byte(src.at(c, y, x));
    out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
    SD_CHECK(out.good(), "image: short write to '", path, "'");
}

void save_png_file(const Image& img, const std::string& path) {
    const Image rgb = to_rgb(img);
    FILE* fp = fopen(path.c_str(), "wb");
    SD_CHECK(fp, "image: cannot write '", path, "'");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        fclose(fp);
        fail("image: libpng init failed for '", path, "'");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fclose(fp);
        fail("image: libpng failed to encode '", path, "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(rgb.width), png_uint_32(rgb.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<uint8_t> row(size_t(rgb.width) * 3);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x)
            for (int c = 0; c < 3; ++c) row[size_t(x) * 3 + c] = to_byte(rgb.at(c, y, x));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    fclose(fp);
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && 0 == s.compare(s.size() - suffix.size(), suffix.size(), suffix);
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SD_CHECK(in, "image: cannot open '", path, "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    SD_CHECK(in, "image: '", path, "' is empty");
    in.seekg(0);
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) return load_pnm(in, path);
    if (uint8_t(magic[0]) == 0x89 && magic[1] == 'P') {
        in.close();
        return load_png_file(path);
    }
    fail("image: '", path, "' is neither PGM/PPM nor PNG");
}

void save_image(const Image& img, const std::string& path) {
    SD_CHECK(!img.empty(), "image: refusing to save an empty image");
    if (ends_with(path, ".pgm"))
        save_pnm(img, path, 1);
    else if (ends_with(path, ".ppm"))
        save_pnm(img, path, 3);
    else if (ends_with(path, ".png"))
        save_png_file(img, path);
    else
        fail("image: unsupported extension in '", path, "' (use .pgm/.ppm/.png)");
}

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    SD_CHECK(img.channels == 1, "image: cannot convert ", img.channels, " channels to RGB");
    Image out(img.width, img.height, 3);
    for (int c = 0; c < 3; ++c)
        std::copy(img.data.begin(), img.data.end(),
                  out.data.begin() + size_t(c) * img.height * img.width);
    return out;
}

Image to_gray(const Image& img) {
    if (img.channels == 1) return img;
    SD_CHECK(img.channels == 3, "image: cannot convert ", img.channels, " channels to gray");
    Image out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) = 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) +
                              0.114f * img.at(2, y, x);
    return out;
}

Image pad_to_multiple(const Image& img, int multiple) {
    SD_CHECK(multiple > 0, "image: pad multiple must be positive");
    const int w = (img.width + multiple - 1) / multiple * multiple;
    const int h = (img.height + multiple - 1) / multiple * multiple;
    if (w == img.width && h == img.height) return img;
    Image out(w, h, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y) {
            const int sy = std::min(y, img.height - 1);
            for (int x = 0; x < w; ++x)
                out.at(c, y, x) = img.at(c, sy, std::min(x, img.width - 1));
        }
    return out;
}

Image crop_region(const Image& img, int x0, int y0, int w, int h) {
    SD_CHECK(x0 >= 0 && y0 >= 0 && x0 + w <= img.width && y0 + h <= img.height,
             "image: crop ", w, "x", h, "+", x0, "+", y0, " outside ", img.width, "x",
             img.height);
    Image out(w, h, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

float sample_bilinear(const Image& img, int channel, double x, double y) {
    const double cx = std::min(std::max(x, 0.0), double(img.width - 1));
    const double cy = std::min(std::max(y, 0.0), double(img.height - 1));
    const int x0 = int(std::floor(cx)), y0 = int(std::floor(cy));
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const float fx = float(cx - x0), fy = float(cy - y0);
    const float top = img.at(channel, y0, x0) +
                      fx * (img.at(channel, y0, x1) - img.at(channel, y0, x0));
    const float bot = img.at(channel, y1, x0) +
                      fx * (img.at(channel, y1, x1) - img.at(channel, y1, x0));
    return top + fy * (bot - top);
}

Tensor<float> image_tensor(const Image& rgb) {
    SD_CHECK(rgb.channels == 3, "image_tensor: expected 3 channels, got ", rgb.channels);
    Tensor<float> t(Shape{1, 3, rgb.height, rgb.width});
    std::copy(rgb.data.begin(), rgb.data.end(), t.data());
    return t;
}

Image tensor_image(const Tensor<float>& t) {
    SD_CHECK(t.rank() == 4 && t.dim(1) == 3, "tensor_image: expected 1 x 3 x H x W");
    Image img(t.dim(3), t.dim(2), 3);
    std::copy(t.data(), t.data() + img.data.size(), img.data.begin());
    return img;
}

}  // namespace sandesc
