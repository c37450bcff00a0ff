// PNG output for covariance heatmaps and bar plots (libpng).
#pragma once

#include "kronband/core.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace kronband::tools
{

struct Image
{
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Image(int w, int h, std::array<std::uint8_t, 3> fill = {255, 255, 255})
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3)
    {
        for (std::size_t i = 0; i < rgb.size(); i += 3)
            std::copy(fill.begin(), fill.end(), rgb.begin() + static_cast<std::ptrdiff_t>(i));
    }

    void set(int x, int y, std::array<std::uint8_t, 3> c)
    {
        auto* px = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
        px[0] = c[0];
        px[1] = c[1];
        px[2] = c[2];
    }

    void fill_rect(int x0, int y0, int w, int h, std::array<std::uint8_t, 3> c)
    {
        for (int y = std::max(0, y0); y < std::min(height, y0 + h); ++y)
            for (int x = std::max(0, x0); x < std::min(width, x0 + w); ++x)
                set(x, y, c);
    }
};

inline void write_png(const std::string& path, const Image& img)
{
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp)
        throw IoError("cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info)
    {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png)))
    {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed writing PNG '" + path + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, const_cast<png_bytep>(&img.rgb[static_cast<std::size_t>(y) * img.width * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0)
        throw IoError("failed closing '" + path + "'");
}

/// Blue (-1) .. white (0) .. red (+1).
inline std::array<std::uint8_t, 3> diverging(double t)
{
    t = std::clamp(t, -1.0, 1.0);
    const auto mix = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
    if (t >= 0.0)
        return {mix(255, 178, t), mix(255, 24, t), mix(255, 43, t)};
    return {mix(255, 33, -t), mix(255, 102, -t), mix(255, 172, -t)};
}

/**
 * Heatmap of `m` divided by its largest entry (so that entry shows as 1),
 * colored on a symmetric scale over [-maxabs, +maxabs] of the scaled
 * matrix. Each entry is a cell x cell square; row 0 is at the top.
 */
inline Image heatmap(const Eigen::Ref<const Matrix>& m, int cell)
{
    Matrix s = m;
    const double top = s.maxCoeff();
    if (top > 0.0)
        s /= top;
    const double maxabs = s.cwiseAbs().maxCoeff();
    Image img(static_cast<int>(m.cols()) * cell, static_cast<int>(m.rows()) * cell);
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j)
            img.fill_rect(static_cast<int>(j) * cell, static_cast<int>(i) * cell, cell, cell,
                          diverging(maxabs > 0.0 ? s(i, j) / maxabs : 0.0));
    return img;
}

/// Vertical bars of `values` (all >= 0) scaled to the largest one.
inline Image bar_plot(const std::vector<double>& values, int bar_width = 40, int height = 240)
{
    const int gap = bar_width / 2;
    const int n = static_cast<int>(values.size());
    Image img(std::max(1, n * (bar_width + gap) + gap), height);
    double top = 0.0;
    for (double v : values)
        top = std::max(top, v);
    for (int i = 0; i < n; ++i)
    {
        const int h = top > 0.0 ? static_cast<int>(std::lround((height - 10) * values[static_cast<std::size_t>(i)] / top)) : 0;
        img.fill_rect(gap + i * (bar_width + gap), height - h, bar_width, h, diverging(0.35 + 0.65 * (i % 2)));
    }
    return img;
}

}  // namespace kronband::tools
