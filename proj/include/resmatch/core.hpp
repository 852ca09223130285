#pragma once
// Shared domain types for referring expression segmentation: images in [0,1],
// tokenized expressions, binary masks, per-pixel two-class prediction maps,
// the overall-IoU metric and the mask run-length wire format.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace resmatch {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Shape/length preconditions violated (dimension mismatch and the like).
struct StructuralError : Error {
    using Error::Error;
};
// A numeric computation cannot proceed (e.g. zero-norm embedding).
struct ComputeError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
// Dataset files: missing images, malformed records, bad run-length data.
struct DataError : Error {
    using Error::Error;
};
struct TransportError : Error {
    using Error::Error;
};
struct ProtocolError : Error {
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Image: 3-channel planar grid, channel-major, all values in [0,1].
// ---------------------------------------------------------------------------
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;  // size 3*height*width, index (c*H + y)*W + x

    static Image filled(int h, int w, double value) {
        if (h <= 0 || w <= 0)
            throw StructuralError("Image dimensions must be positive");
        Image im;
        im.height = h;
        im.width = w;
        im.pixels.assign(static_cast<std::size_t>(3) * h * w, value);
        return im;
    }

    double& at(int c, int y, int x) {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const Image& other) const {
        return height == other.height && width == other.width;
    }

    void clamp01() {
        for (double& v : pixels) v = std::clamp(v, 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// Expression: lowercase whitespace tokenization of a referring expression.
// ---------------------------------------------------------------------------
struct Expression {
    std::vector<std::string> tokens;
    std::string raw;

    static Expression from_raw(std::string_view text) {
        Expression e;
        std::string lowered;
        lowered.reserve(text.size());
        for (char c : text)
            lowered.push_back(static_cast<char>(
                std::tolower(static_cast<unsigned char>(c))));
        std::istringstream iss(lowered);
        std::string tok;
        while (iss >> tok) e.tokens.push_back(tok);
        if (e.tokens.empty())
            throw StructuralError("expression has no tokens: \"" +
                                  std::string(text) + "\"");
        e.raw = join(e.tokens);
        return e;
    }

    static Expression from_tokens(std::vector<std::string> toks) {
        if (toks.empty())
            throw StructuralError("expression has no tokens");
        Expression e;
        e.tokens = std::move(toks);
        e.raw = join(e.tokens);
        return e;
    }

    bool operator==(const Expression& other) const {
        return tokens == other.tokens;
    }

  private:
    static std::string join(const std::vector<std::string>& toks) {
        std::string out;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) out.push_back(' ');
            out += toks[i];
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Mask: binary grid, dimensions matching the paired image.
// ---------------------------------------------------------------------------
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values;  // row-major, strictly {0,1}

    static Mask zeros(int h, int w) {
        if (h <= 0 || w <= 0)
            throw StructuralError("Mask dimensions must be positive");
        Mask m;
        m.height = h;
        m.width = w;
        m.values.assign(static_cast<std::size_t>(h) * w, 0);
        return m;
    }

    std::uint8_t& at(int y, int x) {
        return values[static_cast<std::size_t>(y) * width + x];
    }
    std::uint8_t at(int y, int x) const {
        return values[static_cast<std::size_t>(y) * width + x];
    }

    bool same_shape(const Mask& other) const {
        return height == other.height && width == other.width;
    }

    std::int64_t area() const {
        std::int64_t a = 0;
        for (auto v : values) a += v;
        return a;
    }

    bool operator==(const Mask& other) const {
        return height == other.height && width == other.width &&
               values == other.values;
    }
};

// ---------------------------------------------------------------------------
// Sample: one image/expression pair; labeled iff a mask is attached.
// ---------------------------------------------------------------------------
struct Sample {
    std::string id;
    Image image;
    Expression expression;
    std::optional<Mask> mask;

    bool labeled() const { return mask.has_value(); }
};

// ---------------------------------------------------------------------------
// PredictionMap: per-pixel (foreground, background) probability pairs.
// ---------------------------------------------------------------------------
struct PredictionMap {
    int height = 0;
    int width = 0;
    std::vector<double> fg;  // row-major foreground probabilities
    std::vector<double> bg;  // row-major background probabilities

    static PredictionMap uniform(int h, int w, double p_fg) {
        if (h <= 0 || w <= 0)
            throw StructuralError("PredictionMap dimensions must be positive");
        PredictionMap pm;
        pm.height = h;
        pm.width = w;
        pm.fg.assign(static_cast<std::size_t>(h) * w, p_fg);
        pm.bg.assign(static_cast<std::size_t>(h) * w, 1.0 - p_fg);
        return pm;
    }

    double fg_at(int y, int x) const {
        return fg[static_cast<std::size_t>(y) * width + x];
    }
    double bg_at(int y, int x) const {
        return bg[static_cast<std::size_t>(y) * width + x];
    }
    std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width;
    }

    bool same_shape(const PredictionMap& other) const {
        return height == other.height && width == other.width;
    }

    // Probabilities in [0,1] and pairs summing to one within tolerance.
    void validate(double tol = 1e-6) const {
        if (height <= 0 || width <= 0 || fg.size() != pixel_count() ||
            bg.size() != pixel_count())
            throw StructuralError("PredictionMap has inconsistent dimensions");
        for (std::size_t i = 0; i < fg.size(); ++i) {
            if (fg[i] < -tol || fg[i] > 1.0 + tol || bg[i] < -tol ||
                bg[i] > 1.0 + tol || std::abs(fg[i] + bg[i] - 1.0) > tol)
                throw StructuralError(
                    "PredictionMap probabilities out of range at pixel " +
                    std::to_string(i));
        }
    }
};

// ---------------------------------------------------------------------------
// Overall IoU: cumulative intersection over cumulative union across samples.
// ---------------------------------------------------------------------------
inline double overall_iou(const std::vector<Mask>& predictions,
                          const std::vector<Mask>& ground_truths) {
    if (predictions.size() != ground_truths.size())
        throw StructuralError("overall_iou: list length mismatch (" +
                              std::to_string(predictions.size()) + " vs " +
                              std::to_string(ground_truths.size()) + ")");
    std::int64_t intersection = 0;
    std::int64_t uni = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const Mask& p = predictions[i];
        const Mask& g = ground_truths[i];
        if (!p.same_shape(g))
            throw StructuralError("overall_iou: dimension mismatch in pair " +
                                  std::to_string(i));
        for (std::size_t k = 0; k < p.values.size(); ++k) {
            intersection += p.values[k] & g.values[k];
            uni += p.values[k] | g.values[k];
        }
    }
    if (uni == 0) return 1.0;  // all masks empty: vacuously perfect
    return static_cast<double>(intersection) / static_cast<double>(uni);
}

// Threshold a prediction map; a tie resolves to background.
inline Mask binarize(const PredictionMap& prediction) {
    Mask m = Mask::zeros(prediction.height, prediction.width);
    for (std::size_t i = 0; i < prediction.fg.size(); ++i)
        m.values[i] = prediction.fg[i] > prediction.bg[i] ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Mask wire format: alternating run lengths over row-major order, starting
// with the count of zeros (so a mask beginning with ones starts with a 0 run).
// ---------------------------------------------------------------------------
inline std::vector<std::int64_t> rle_encode(const Mask& mask) {
    std::vector<std::int64_t> runs;
    std::uint8_t current = 0;
    std::int64_t run = 0;
    for (auto v : mask.values) {
        if (v == current) {
            ++run;
        } else {
            runs.push_back(run);
            current = v;
            run = 1;
        }
    }
    runs.push_back(run);
    return runs;
}

inline Mask rle_decode(const std::vector<std::int64_t>& runs, int height,
                       int width) {
    Mask m = Mask::zeros(height, width);
    std::size_t pos = 0;
    std::uint8_t value = 0;
    for (std::int64_t run : runs) {
        if (run < 0) throw DataError("run-length entry is negative");
        if (pos + static_cast<std::size_t>(run) > m.values.size())
            throw DataError("run-length sum exceeds mask area " +
                            std::to_string(m.values.size()));
        std::fill_n(m.values.begin() + pos, run, value);
        pos += static_cast<std::size_t>(run);
        value = static_cast<std::uint8_t>(1 - value);
    }
    if (pos != m.values.size())
        throw DataError("run-length sum " + std::to_string(pos) +
                        " does not cover mask area " +
                        std::to_string(m.values.size()));
    return m;
}

}  // namespace resmatch
