#pragma once
// Pixel-level transforms on [0,1] images. Intensity ops mirror the classic
// 8-bit photometric definitions (enhancement blends, histogram ops, bit
// reduction) applied through a 256-level quantization where the definition is
// inherently discrete.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "resmatch/core.hpp"

namespace resmatch {

inline int quantize255(double v) {
    return std::clamp(static_cast<int>(std::floor(v * 255.0 + 0.5)), 0, 255);
}

inline double luminance(double r, double g, double b) {
    return 0.299 * r + 0.587 * g + 0.114 * b;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

inline Image hflip(const Image& im) {
    Image out = im;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x)
                out.at(c, y, x) = im.at(c, y, im.width - 1 - x);
    return out;
}

inline Mask hflip(const Mask& m) {
    Mask out = m;
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            out.at(y, x) = m.at(y, m.width - 1 - x);
    return out;
}

inline Image resize_bilinear(const Image& im, int h, int w) {
    if (h == im.height && w == im.width) return im;
    Image out = Image::filled(h, w, 0.0);
    const double sy = static_cast<double>(im.height) / h;
    const double sx = static_cast<double>(im.width) / w;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            double wy = fy - y0;
            int y0c = std::clamp(y0, 0, im.height - 1);
            int y1c = std::clamp(y0 + 1, 0, im.height - 1);
            for (int x = 0; x < w; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                int x0 = static_cast<int>(std::floor(fx));
                double wx = fx - x0;
                int x0c = std::clamp(x0, 0, im.width - 1);
                int x1c = std::clamp(x0 + 1, 0, im.width - 1);
                double top = (1 - wx) * im.at(c, y0c, x0c) + wx * im.at(c, y0c, x1c);
                double bot = (1 - wx) * im.at(c, y1c, x0c) + wx * im.at(c, y1c, x1c);
                out.at(c, y, x) = (1 - wy) * top + wy * bot;
            }
        }
    }
    return out;
}

// Masks resize by nearest neighbour so values stay binary.
inline Mask resize_nearest(const Mask& m, int h, int w) {
    if (h == m.height && w == m.width) return m;
    Mask out = Mask::zeros(h, w);
    const double sy = static_cast<double>(m.height) / h;
    const double sx = static_cast<double>(m.width) / w;
    for (int y = 0; y < h; ++y) {
        int ys = std::clamp(static_cast<int>((y + 0.5) * sy), 0, m.height - 1);
        for (int x = 0; x < w; ++x) {
            int xs = std::clamp(static_cast<int>((x + 0.5) * sx), 0, m.width - 1);
            out.at(y, x) = m.at(ys, xs);
        }
    }
    return out;
}

// Crop a window at (top, left); areas outside the source are zero-padded.
inline Image crop_pad(const Image& im, int top, int left, int h, int w) {
    Image out = Image::filled(h, w, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y) {
            int ys = top + y;
            if (ys < 0 || ys >= im.height) continue;
            for (int x = 0; x < w; ++x) {
                int xs = left + x;
                if (xs < 0 || xs >= im.width) continue;
                out.at(c, y, x) = im.at(c, ys, xs);
            }
        }
    return out;
}

inline Mask crop_pad(const Mask& m, int top, int left, int h, int w) {
    Mask out = Mask::zeros(h, w);
    for (int y = 0; y < h; ++y) {
        int ys = top + y;
        if (ys < 0 || ys >= m.height) continue;
        for (int x = 0; x < w; ++x) {
            int xs = left + x;
            if (xs < 0 || xs >= m.width) continue;
            out.at(y, x) = m.at(ys, xs);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Intensity ops
// ---------------------------------------------------------------------------

// Enhancement blends: out = base + factor * (image - base). Factor 1 is the
// identity, factor 0 the fully degenerate base.
inline Image brightness(const Image& im, double factor) {
    Image out = im;
    for (double& v : out.pixels) v = std::clamp(v * factor, 0.0, 1.0);
    return out;
}

inline Image contrast(const Image& im, double factor) {
    double mean = 0.0;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            mean += luminance(im.at(0, y, x), im.at(1, y, x), im.at(2, y, x));
    mean /= static_cast<double>(im.height) * im.width;
    Image out = im;
    for (double& v : out.pixels)
        v = std::clamp(mean + factor * (v - mean), 0.0, 1.0);
    return out;
}

inline Image color_balance(const Image& im, double factor) {
    Image out = im;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
            double l = luminance(im.at(0, y, x), im.at(1, y, x), im.at(2, y, x));
            for (int c = 0; c < 3; ++c)
                out.at(c, y, x) =
                    std::clamp(l + factor * (im.at(c, y, x) - l), 0.0, 1.0);
        }
    return out;
}

inline Image sharpness(const Image& im, double factor) {
    // Blend with a 3x3 smoothed copy; the one-pixel border stays unsmoothed.
    static constexpr std::array<double, 9> k = {1, 1, 1, 1, 5, 1, 1, 1, 1};
    Image smooth = im;
    for (int c = 0; c < 3; ++c)
        for (int y = 1; y + 1 < im.height; ++y)
            for (int x = 1; x + 1 < im.width; ++x) {
                double acc = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        acc += k[(dy + 1) * 3 + (dx + 1)] *
                               im.at(c, y + dy, x + dx);
                smooth.at(c, y, x) = acc / 13.0;
            }
    Image out = im;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] = std::clamp(
            smooth.pixels[i] + factor * (im.pixels[i] - smooth.pixels[i]), 0.0,
            1.0);
    return out;
}

inline Image autocontrast(const Image& im) {
    Image out = im;
    const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
    for (int c = 0; c < 3; ++c) {
        double lo = 1.0, hi = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            double v = im.pixels[c * plane + i];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi <= lo) continue;  // constant channel stays as is
        double scale = 1.0 / (hi - lo);
        for (std::size_t i = 0; i < plane; ++i)
            out.pixels[c * plane + i] =
                std::clamp((im.pixels[c * plane + i] - lo) * scale, 0.0, 1.0);
    }
    return out;
}

inline Image equalize(const Image& im) {
    Image out = im;
    const std::size_t plane = static_cast<std::size_t>(im.height) * im.width;
    for (int c = 0; c < 3; ++c) {
        std::array<std::int64_t, 256> hist{};
        for (std::size_t i = 0; i < plane; ++i)
            ++hist[quantize255(im.pixels[c * plane + i])];
        // classic equalization LUT: step from the histogram mass minus the
        // last non-empty bin, then a running cumulative sum
        std::int64_t total = static_cast<std::int64_t>(plane);
        int last_nonzero = 255;
        while (last_nonzero > 0 && hist[last_nonzero] == 0) --last_nonzero;
        std::int64_t step = (total - hist[last_nonzero]) / 255;
        std::array<int, 256> lut{};
        if (step == 0) {
            for (int i = 0; i < 256; ++i) lut[i] = i;
        } else {
            std::int64_t n = step / 2;
            for (int i = 0; i < 256; ++i) {
                lut[i] = static_cast<int>(std::clamp<std::int64_t>(n / step, 0, 255));
                n += hist[i];
            }
        }
        for (std::size_t i = 0; i < plane; ++i)
            out.pixels[c * plane + i] =
                lut[quantize255(im.pixels[c * plane + i])] / 255.0;
    }
    return out;
}

inline Image gaussian_blur(const Image& im, double sigma) {
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    Image tmp = im, out = im;
    // horizontal pass with edge replication
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           im.at(c, y, std::clamp(x + i, 0, im.width - 1));
                tmp.at(c, y, x) = acc;
            }
    // vertical pass
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < im.height; ++y)
            for (int x = 0; x < im.width; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] *
                           tmp.at(c, std::clamp(y + i, 0, im.height - 1), x);
                out.at(c, y, x) = std::clamp(acc, 0.0, 1.0);
            }
    return out;
}

// Keep the top `bits` bits of the 8-bit quantized value.
inline Image posterize(const Image& im, int bits) {
    int mask = ~((1 << (8 - bits)) - 1) & 0xFF;
    Image out = im;
    for (double& v : out.pixels) v = (quantize255(v) & mask) / 255.0;
    return out;
}

inline Image invert(const Image& im) {
    Image out = im;
    for (double& v : out.pixels) v = 1.0 - v;
    return out;
}

// Invert every pixel whose 8-bit value is at or above the threshold.
inline Image solarize(const Image& im, int threshold8) {
    Image out = im;
    for (double& v : out.pixels)
        if (quantize255(v) >= threshold8) v = 1.0 - v;
    return out;
}

inline Image hue_shift(const Image& im, double delta) {
    Image out = im;
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
            double r = im.at(0, y, x), g = im.at(1, y, x), b = im.at(2, y, x);
            double mx = std::max({r, g, b}), mn = std::min({r, g, b});
            double d = mx - mn;
            double h = 0.0;
            if (d > 0.0) {
                if (mx == r)
                    h = std::fmod((g - b) / d, 6.0);
                else if (mx == g)
                    h = (b - r) / d + 2.0;
                else
                    h = (r - g) / d + 4.0;
                h /= 6.0;
                if (h < 0.0) h += 1.0;
            }
            double s = mx <= 0.0 ? 0.0 : d / mx;
            double v = mx;
            h = std::fmod(h + delta, 1.0);
            if (h < 0.0) h += 1.0;
            double c = v * s;
            double hp = h * 6.0;
            double xcomp = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
            double r1 = 0, g1 = 0, b1 = 0;
            switch (static_cast<int>(hp) % 6) {
                case 0: r1 = c; g1 = xcomp; break;
                case 1: r1 = xcomp; g1 = c; break;
                case 2: g1 = c; b1 = xcomp; break;
                case 3: g1 = xcomp; b1 = c; break;
                case 4: r1 = xcomp; b1 = c; break;
                default: r1 = c; b1 = xcomp; break;
            }
            double m = v - c;
            out.at(0, y, x) = std::clamp(r1 + m, 0.0, 1.0);
            out.at(1, y, x) = std::clamp(g1 + m, 0.0, 1.0);
            out.at(2, y, x) = std::clamp(b1 + m, 0.0, 1.0);
        }
    return out;
}

}  // namespace resmatch
