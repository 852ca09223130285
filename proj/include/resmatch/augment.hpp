#pragma once
// Weak and strong image augmentation. The default profile keeps every strong
// op intensity based so augmented pixels never move: referring expressions
// mention positions and colors, and spatial or hue edits would detach the
// text from the region it names. The baseline profile restores the
// conventional weak-to-strong op set (scale, crop, invert, hue, solarize)
// for comparison runs. Applied geometric ops are recorded so the paired
// expression can be adapted to match.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resmatch/core.hpp"
#include "resmatch/image_ops.hpp"
#include "resmatch/rng.hpp"

namespace resmatch {

enum class ImageOp {
    Identity,
    Autocontrast,
    Equalize,
    GaussianBlur,
    Contrast,
    Sharpness,
    Color,
    Brightness,
    Posterize,
    Invert,
    Hue,
    Solarize,
};

inline std::string_view image_op_name(ImageOp op) {
    switch (op) {
        case ImageOp::Identity: return "identity";
        case ImageOp::Autocontrast: return "autocontrast";
        case ImageOp::Equalize: return "equalize";
        case ImageOp::GaussianBlur: return "gaussian_blur";
        case ImageOp::Contrast: return "contrast";
        case ImageOp::Sharpness: return "sharpness";
        case ImageOp::Color: return "color";
        case ImageOp::Brightness: return "brightness";
        case ImageOp::Posterize: return "posterize";
        case ImageOp::Invert: return "invert";
        case ImageOp::Hue: return "hue";
        case ImageOp::Solarize: return "solarize";
    }
    return "?";
}

struct AppliedOp {
    std::string name;
    std::vector<double> params;
};

struct AugmentationRecord {
    std::vector<AppliedOp> ops;
    bool horizontal_flipped = false;
};

enum class ProfileKind { resmatch, fixmatch_baseline };

struct AugmentationProfile {
    ProfileKind name = ProfileKind::resmatch;
    double flip_probability = 0.5;
    bool weak_random_scale = false;  // factor in [0.5, 2.0]
    bool weak_random_crop = false;   // crop back to the training size
    std::vector<ImageOp> strong_pool;
    int strong_ops_per_sample = 2;

    static AugmentationProfile resmatch() {
        AugmentationProfile p;
        p.name = ProfileKind::resmatch;
        p.strong_pool = {ImageOp::Identity,   ImageOp::Autocontrast,
                         ImageOp::Equalize,   ImageOp::GaussianBlur,
                         ImageOp::Contrast,   ImageOp::Sharpness,
                         ImageOp::Color,      ImageOp::Brightness,
                         ImageOp::Posterize};
        return p;
    }

    static AugmentationProfile fixmatch_baseline() {
        AugmentationProfile p = resmatch();
        p.name = ProfileKind::fixmatch_baseline;
        p.weak_random_scale = true;
        p.weak_random_crop = true;
        p.strong_pool.push_back(ImageOp::Invert);
        p.strong_pool.push_back(ImageOp::Hue);
        p.strong_pool.push_back(ImageOp::Solarize);
        return p;
    }

    static AugmentationProfile by_name(std::string_view key) {
        if (key == "resmatch") return resmatch();
        if (key == "fixmatch_baseline") return fixmatch_baseline();
        throw ConfigError("unknown augmentation profile: " + std::string(key));
    }

    bool pool_contains(ImageOp op) const {
        for (ImageOp o : strong_pool)
            if (o == op) return true;
        return false;
    }
};

inline std::string_view profile_name(ProfileKind k) {
    return k == ProfileKind::resmatch ? "resmatch" : "fixmatch_baseline";
}

// ---------------------------------------------------------------------------
// Weak augmentation: resize to the training size, optional random scale and
// crop (baseline profile), horizontal flip with probability 0.5. Image and
// mask transform jointly.
// ---------------------------------------------------------------------------
struct WeakAugmentResult {
    Image image;
    std::optional<Mask> mask;
    AugmentationRecord record;
};

inline WeakAugmentResult weak_augment(const Image& image,
                                      const std::optional<Mask>& mask,
                                      const AugmentationProfile& profile,
                                      Rng& rng, int target_size) {
    if (mask && (mask->height != image.height || mask->width != image.width))
        throw StructuralError("weak_augment: mask does not match image");
    WeakAugmentResult out;
    out.image = resize_bilinear(image, target_size, target_size);
    if (mask) out.mask = resize_nearest(*mask, target_size, target_size);
    out.record.ops.push_back(
        {"resize", {static_cast<double>(target_size)}});

    if (profile.weak_random_scale) {
        double factor = uniform_real(rng, 0.5, 2.0);
        int sh = std::max(1, static_cast<int>(std::lround(target_size * factor)));
        int sw = sh;
        out.image = resize_bilinear(out.image, sh, sw);
        if (out.mask) out.mask = resize_nearest(*out.mask, sh, sw);
        out.record.ops.push_back({"random_scale", {factor}});
    }

    if (uniform_real(rng, 0.0, 1.0) < profile.flip_probability) {
        out.image = hflip(out.image);
        if (out.mask) out.mask = hflip(*out.mask);
        out.record.ops.push_back({"hflip", {}});
        out.record.horizontal_flipped = true;
    }

    if (profile.weak_random_crop) {
        int dh = out.image.height - target_size;
        int dw = out.image.width - target_size;
        int top = uniform_int(rng, std::min(0, dh), std::max(0, dh));
        int left = uniform_int(rng, std::min(0, dw), std::max(0, dw));
        out.image = crop_pad(out.image, top, left, target_size, target_size);
        if (out.mask)
            out.mask = crop_pad(*out.mask, top, left, target_size, target_size);
        out.record.ops.push_back(
            {"random_crop", {static_cast<double>(top), static_cast<double>(left)}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Strong augmentation: compose ops drawn uniformly from the profile pool,
// magnitudes sampled from each op's range. Intensity only: output dimensions
// always equal input dimensions.
// ---------------------------------------------------------------------------
struct StrongAugmentResult {
    Image image;
    AugmentationRecord record;
};

inline StrongAugmentResult strong_augment(const Image& image,
                                          const AugmentationProfile& profile,
                                          Rng& rng) {
    StrongAugmentResult out;
    out.image = image;
    for (int i = 0; i < profile.strong_ops_per_sample; ++i) {
        ImageOp op = profile.strong_pool[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<int>(profile.strong_pool.size()) - 1))];
        AppliedOp rec{std::string(image_op_name(op)), {}};
        switch (op) {
            case ImageOp::Identity:
                break;
            case ImageOp::Autocontrast:
                out.image = autocontrast(out.image);
                break;
            case ImageOp::Equalize:
                out.image = equalize(out.image);
                break;
            case ImageOp::GaussianBlur: {
                double sigma = uniform_real(rng, 0.1, 2.0);
                out.image = gaussian_blur(out.image, sigma);
                rec.params.push_back(sigma);
                break;
            }
            case ImageOp::Contrast: {
                double f = uniform_real(rng, 0.05, 0.95);
                out.image = contrast(out.image, f);
                rec.params.push_back(f);
                break;
            }
            case ImageOp::Sharpness: {
                double f = uniform_real(rng, 0.05, 0.95);
                out.image = sharpness(out.image, f);
                rec.params.push_back(f);
                break;
            }
            case ImageOp::Color: {
                double f = uniform_real(rng, 0.05, 0.95);
                out.image = color_balance(out.image, f);
                rec.params.push_back(f);
                break;
            }
            case ImageOp::Brightness: {
                double f = uniform_real(rng, 0.05, 0.95);
                out.image = brightness(out.image, f);
                rec.params.push_back(f);
                break;
            }
            case ImageOp::Posterize: {
                int bits = uniform_int(rng, 4, 8);
                out.image = posterize(out.image, bits);
                rec.params.push_back(bits);
                break;
            }
            case ImageOp::Invert:
                out.image = invert(out.image);
                break;
            case ImageOp::Hue: {
                double d = uniform_real(rng, 0.0, 0.5);
                out.image = hue_shift(out.image, d);
                rec.params.push_back(d);
                break;
            }
            case ImageOp::Solarize: {
                int thr = uniform_int(rng, 1, 255);
                out.image = solarize(out.image, thr);
                rec.params.push_back(thr);
                break;
            }
        }
        out.record.ops.push_back(std::move(rec));
    }
    out.image.clamp01();
    return out;
}

// ---------------------------------------------------------------------------
// Model-adaptive guidance blend: the strong input is pulled toward the weak
// input when the pseudo-label quality score is low.
//   blended = score * strong + (1 - score) * weak
// ---------------------------------------------------------------------------
inline Image mag_blend(const Image& strong_image, const Image& weak_image,
                       double score) {
    if (!strong_image.same_shape(weak_image))
        throw StructuralError("mag_blend: image dimensions differ");
    if (score < 0.0 || score > 1.0)
        throw StructuralError("mag_blend: score outside [0,1]");
    Image out = strong_image;
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
        out.pixels[i] =
            score * strong_image.pixels[i] + (1.0 - score) * weak_image.pixels[i];
    return out;
}

}  // namespace resmatch
