#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resmatch/core.hpp"
#include "resmatch/image_ops.hpp"
#include "resmatch/rng.hpp"

namespace resmatch {

// ---------------------------------------------------------------------------
// PPM (P6) image files: self-contained, no codec dependency, exact enough
// for 8-bit round trips.

inline void write_ppm(const Image& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write image: " + path);
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width) * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(quantize255(image.at(c, y, x)));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw DataError("image write failed: " + path);
}

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image: " + path);
    auto next_token = [&]() -> std::string {
        std::string tok;
        int ch;
        while ((ch = in.get()) != EOF) {
            if (ch == '#') {  // comment runs to end of line
                while ((ch = in.get()) != EOF && ch != '\n') {}
                continue;
            }
            if (std::isspace(ch)) {
                if (!tok.empty()) return tok;
                continue;
            }
            tok.push_back(static_cast<char>(ch));
        }
        return tok;
    };
    if (next_token() != "P6")
        throw DataError("not a binary PPM file: " + path);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception&) {
        throw DataError("malformed PPM header: " + path);
    }
    if (w <= 0 || h <= 0 || maxval != 255)
        throw DataError("unsupported PPM header in " + path);
    Image image = Image::filled(h, w, 0.0);
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
        if (!in) throw DataError("truncated PPM data: " + path);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                image.at(c, y, x) =
                    row[static_cast<std::size_t>(x) * 3 + c] / 255.0;
    }
    return image;
}

// ---------------------------------------------------------------------------
// Dataset manifests: one JSON object per line with keys
// {id, image, expression, mask, split}; a missing mask key marks the record
// as unlabeled. Image paths are relative to the manifest's directory.

struct ManifestRecord {
    std::string id;
    std::string image;       // path relative to the dataset root
    std::string expression;  // raw text, tokenized on use
    std::optional<std::vector<std::int64_t>> mask;  // row-major RLE, zeros first
    std::string split;       // train | val | testA | testB
};

enum class ManifestSource { refcoco_format, synthetic };

struct DatasetManifest {
    std::string root;  // directory holding manifest.jsonl and images/
    ManifestSource source = ManifestSource::refcoco_format;
    std::vector<ManifestRecord> records;

    std::vector<const ManifestRecord*> split_records(
        const std::string& split) const {
        std::vector<const ManifestRecord*> out;
        for (const ManifestRecord& r : records)
            if (r.split == split) out.push_back(&r);
        return out;
    }

    const ManifestRecord* find(const std::string& id) const {
        for (const ManifestRecord& r : records)
            if (r.id == id) return &r;
        return nullptr;
    }

    std::string image_path(const ManifestRecord& record) const {
        std::filesystem::path p(record.image);
        if (p.is_absolute()) return record.image;
        return (std::filesystem::path(root) / p).string();
    }

    // Materializes one record: reads the image and decodes the mask against
    // the image's true area. Errors carry the record id.
    Sample load_sample(const ManifestRecord& record) const {
        Sample s;
        s.id = record.id;
        s.image = read_ppm(image_path(record));
        try {
            s.expression = Expression::from_raw(record.expression);
        } catch (const Error& e) {
            throw DataError("record " + record.id + ": " + e.what());
        }
        if (record.mask) {
            try {
                s.mask = rle_decode(*record.mask, s.image.height, s.image.width);
            } catch (const Error& e) {
                throw DataError("record " + record.id + ": " + e.what());
            }
        }
        return s;
    }

    std::vector<Sample> load_samples(const std::string& split) const {
        std::vector<Sample> out;
        for (const ManifestRecord* r : split_records(split))
            out.push_back(load_sample(*r));
        return out;
    }
};

namespace detail {

inline const std::vector<std::string>& valid_splits() {
    static const std::vector<std::string> s = {"train", "val", "testA", "testB"};
    return s;
}

}  // namespace detail

inline void save_manifest(const DatasetManifest& manifest) {
    std::filesystem::create_directories(manifest.root);
    std::string path =
        (std::filesystem::path(manifest.root) / "manifest.jsonl").string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path);
    for (const ManifestRecord& r : manifest.records) {
        nlohmann::json j;
        j["id"] = r.id;
        j["image"] = r.image;
        j["expression"] = r.expression;
        if (r.mask) j["mask"] = *r.mask;
        j["split"] = r.split;
        out << j.dump() << "\n";
    }
    if (!out) throw DataError("manifest write failed: " + path);
}

inline DatasetManifest load_manifest(const std::string& dir) {
    std::string path = (std::filesystem::path(dir) / "manifest.jsonl").string();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest: " + path);
    DatasetManifest manifest;
    manifest.root = dir;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw DataError("manifest line " + std::to_string(line_no) +
                            " is not valid JSON in " + path);
        }
        ManifestRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.image = j.at("image").get<std::string>();
            r.expression = j.at("expression").get<std::string>();
            r.split = j.at("split").get<std::string>();
            if (j.contains("mask"))
                r.mask = j["mask"].get<std::vector<std::int64_t>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError("manifest line " + std::to_string(line_no) +
                            " in " + path + ": " + e.what());
        }
        const auto& splits = detail::valid_splits();
        if (std::find(splits.begin(), splits.end(), r.split) == splits.end())
            throw DataError("record " + r.id + ": unknown split '" + r.split + "'");
        if (r.mask) {
            std::int64_t sum = 0;
            for (std::int64_t run : *r.mask) {
                if (run < 0)
                    throw DataError("record " + r.id + ": negative RLE run");
                sum += run;
            }
            if (sum == 0 && !r.mask->empty())
                throw DataError("record " + r.id + ": empty RLE mask");
        }
        manifest.records.push_back(std::move(r));
    }
    // image existence is a load-time contract; report every missing file
    std::string missing;
    for (const ManifestRecord& r : manifest.records)
        if (!std::filesystem::exists(manifest.image_path(r)))
            missing += (missing.empty() ? "" : ", ") + manifest.image_path(r);
    if (!missing.empty())
        throw DataError("missing image files: " + missing);
    return manifest;
}

// ---------------------------------------------------------------------------
// Synthetic shapes dataset: 2-4 disjoint colored shapes per image, one of
// which is picked out by an unambiguous expression ("red circle",
// "square on the left"). Masks are exact rasters of the target shape.

namespace detail {

struct ShapeSpec {
    int type = 0;   // 0 circle, 1 square, 2 triangle
    int color = 0;  // 0 red, 1 green, 2 blue, 3 yellow
    double cx = 0.0, cy = 0.0, r = 0.0;
    double jitter = 1.0;
};

inline const char* shape_type_name(int t) {
    static const char* names[] = {"circle", "square", "triangle"};
    return names[t];
}

inline const char* shape_color_name(int c) {
    static const char* names[] = {"red", "green", "blue", "yellow"};
    return names[c];
}

inline void shape_base_color(int c, double rgb[3]) {
    switch (c) {
        case 0: rgb[0] = 0.85; rgb[1] = 0.15; rgb[2] = 0.15; break;
        case 1: rgb[0] = 0.15; rgb[1] = 0.80; rgb[2] = 0.20; break;
        case 2: rgb[0] = 0.15; rgb[1] = 0.25; rgb[2] = 0.85; break;
        default: rgb[0] = 0.90; rgb[1] = 0.85; rgb[2] = 0.10; break;
    }
}

inline bool shape_contains(const ShapeSpec& s, int x, int y) {
    double px = x + 0.5, py = y + 0.5;
    switch (s.type) {
        case 0: {
            double dx = px - s.cx, dy = py - s.cy;
            return dx * dx + dy * dy <= s.r * s.r;
        }
        case 1:
            return std::abs(px - s.cx) <= s.r && std::abs(py - s.cy) <= s.r;
        default: {
            // upward isoceles triangle inscribed in the 2r box
            double t = (py - (s.cy - s.r)) / (2.0 * s.r);
            if (t < 0.0 || t > 1.0) return false;
            return std::abs(px - s.cx) <= t * s.r;
        }
    }
}

inline Mask rasterize_shape(const ShapeSpec& s, int size) {
    Mask m = Mask::zeros(size, size);
    int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.r - 1)));
    int x1 = std::min(size - 1, static_cast<int>(std::ceil(s.cx + s.r + 1)));
    int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.r - 1)));
    int y1 = std::min(size - 1, static_cast<int>(std::ceil(s.cy + s.r + 1)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if (shape_contains(s, x, y)) m.at(y, x) = 1;
    return m;
}

// x half: 0 left / 1 right; y half: 0 top / 1 bottom
inline int x_half(const ShapeSpec& s, int size) { return s.cx < size / 2.0 ? 0 : 1; }
inline int y_half(const ShapeSpec& s, int size) { return s.cy < size / 2.0 ? 0 : 1; }

struct SceneDescriptor {
    std::string expression;
    int target = 0;
};

// All unambiguous descriptors for the target shape: color+type when no
// other shape shares both attributes, position+type when the target is the
// only shape of its type in that half. Color-only forms never carry a
// position word.
inline std::vector<std::string> unique_descriptors(
    const std::vector<ShapeSpec>& shapes, std::size_t target, int size) {
    const ShapeSpec& t = shapes[target];
    std::vector<std::string> out;
    int same_color_type = 0, same_type_xhalf = 0, same_type_yhalf = 0;
    for (const ShapeSpec& s : shapes) {
        if (s.type == t.type && s.color == t.color) ++same_color_type;
        if (s.type == t.type && x_half(s, size) == x_half(t, size))
            ++same_type_xhalf;
        if (s.type == t.type && y_half(s, size) == y_half(t, size))
            ++same_type_yhalf;
    }
    std::string type_name = shape_type_name(t.type);
    if (same_color_type == 1)
        out.push_back(std::string(shape_color_name(t.color)) + " " + type_name);
    if (same_type_xhalf == 1)
        out.push_back(type_name + " on the " +
                      (x_half(t, size) == 0 ? "left" : "right"));
    if (same_type_yhalf == 1)
        out.push_back(type_name + " on the " +
                      (y_half(t, size) == 0 ? "top" : "bottom"));
    return out;
}

struct SyntheticSample {
    Image image;
    Mask mask;
    std::string expression;
};

inline SyntheticSample make_scene(int size, Rng& rng) {
    if (size < 24)
        throw ConfigError("synthetic image size must be at least 24");
    for (int scene_try = 0; scene_try < 100; ++scene_try) {
        int count = uniform_int(rng, 2, 4);
        std::vector<ShapeSpec> shapes;
        std::vector<std::array<double, 4>> boxes;  // x0, x1, y0, y1 with margin
        bool placed_all = true;
        for (int i = 0; i < count; ++i) {
            bool placed = false;
            for (int attempt = 0; attempt < 60; ++attempt) {
                ShapeSpec s;
                s.type = uniform_int(rng, 0, 2);
                s.color = uniform_int(rng, 0, 3);
                s.r = uniform_real(rng, std::max(3.0, size / 12.0), size / 7.0);
                s.cx = uniform_real(rng, s.r + 1.0, size - s.r - 1.0);
                s.cy = uniform_real(rng, s.r + 1.0, size - s.r - 1.0);
                s.jitter = uniform_real(rng, 0.85, 1.15);
                std::array<double, 4> box = {s.cx - s.r - 2.0, s.cx + s.r + 2.0,
                                             s.cy - s.r - 2.0, s.cy + s.r + 2.0};
                bool overlaps = false;
                for (const auto& b : boxes)
                    if (box[0] < b[1] && b[0] < box[1] && box[2] < b[3] &&
                        b[2] < box[3]) {
                        overlaps = true;
                        break;
                    }
                if (overlaps) continue;
                shapes.push_back(s);
                boxes.push_back(box);
                placed = true;
                break;
            }
            if (!placed) {
                placed_all = false;
                break;
            }
        }
        if (!placed_all) continue;

        // pick a target with at least one unambiguous descriptor
        std::vector<std::size_t> order(shapes.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(
                          uniform_int(rng, 0, static_cast<int>(i) - 1))]);
        for (std::size_t target : order) {
            auto descriptors = unique_descriptors(shapes, target, size);
            if (descriptors.empty()) continue;
            std::string expr = descriptors[static_cast<std::size_t>(uniform_int(
                rng, 0, static_cast<int>(descriptors.size()) - 1))];
            // color+type forms optionally take a leading article
            if (expr.find(" on the ") == std::string::npos &&
                uniform_int(rng, 0, 1) == 1)
                expr = "the " + expr;

            SyntheticSample sample;
            sample.image = Image::filled(size, size, 0.12);
            for (double& v : sample.image.pixels)
                v = std::clamp(v + uniform_real(rng, -0.03, 0.03), 0.0, 1.0);
            for (const ShapeSpec& s : shapes) {
                double rgb[3];
                shape_base_color(s.color, rgb);
                Mask m = rasterize_shape(s, size);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        if (m.at(y, x))
                            for (int c = 0; c < 3; ++c)
                                sample.image.at(c, y, x) =
                                    std::clamp(rgb[c] * s.jitter, 0.0, 1.0);
            }
            sample.mask = rasterize_shape(shapes[target], size);
            sample.expression = expr;
            return sample;
        }
    }
    throw ComputeError("synthetic scene generation failed to converge");
}

}  // namespace detail

// Generates `count` labeled train samples plus count/4 val and count/8
// testA/testB samples each, materializing PPM images under out_dir/images
// and the manifest at out_dir/manifest.jsonl. Sample i of a given split is
// a pure function of (seed, split, i), independent of the other counts.
inline DatasetManifest make_synthetic(int count, int image_size,
                                      std::uint64_t seed,
                                      const std::string& out_dir) {
    if (count < 1) throw ConfigError("synthetic sample count must be >= 1");
    DatasetManifest manifest;
    manifest.root = out_dir;
    manifest.source = ManifestSource::synthetic;
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "images");

    struct SplitPlan {
        const char* name;
        int n;
    };
    const SplitPlan plan[] = {{"train", count},
                              {"val", count / 4},
                              {"testA", count / 8},
                              {"testB", count / 8}};
    char id_buf[64];
    for (const SplitPlan& sp : plan) {
        for (int i = 0; i < sp.n; ++i) {
            Rng rng = make_rng(derive_seed(seed, sp.name), "synthetic",
                              static_cast<std::uint64_t>(i));
            detail::SyntheticSample s = detail::make_scene(image_size, rng);
            std::snprintf(id_buf, sizeof id_buf, "syn-%s-%06d", sp.name, i);
            ManifestRecord r;
            r.id = id_buf;
            r.image = std::string("images/") + id_buf + ".ppm";
            r.expression = s.expression;
            r.mask = rle_encode(s.mask);
            r.split = sp.name;
            write_ppm(s.image,
                      (std::filesystem::path(out_dir) / r.image).string());
            manifest.records.push_back(std::move(r));
        }
    }
    save_manifest(manifest);
    return manifest;
}

// ---------------------------------------------------------------------------
// Labeled/unlabeled partitions of the train split.

struct SemiSplit {
    double ratio = 0.0;
    std::uint64_t seed = 0;
    std::vector<std::string> labeled_ids;    // sorted
    std::vector<std::string> unlabeled_ids;  // sorted
};

inline SemiSplit make_split(const DatasetManifest& manifest, double ratio,
                            std::uint64_t seed) {
    if (ratio <= 0.0 || ratio > 1.0)
        throw ConfigError("labeled ratio must lie in (0, 1]");
    auto train = manifest.split_records("train");
    std::size_t n = train.size();
    auto labeled_n =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    if (labeled_n == 0)
        throw ConfigError("labeled ratio " + std::to_string(ratio) + " selects zero of " +
                          std::to_string(n) + " train samples");
    std::vector<std::string> ids;
    ids.reserve(n);
    for (const ManifestRecord* r : train) ids.push_back(r->id);
    Rng rng = make_rng(seed, "split");
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[static_cast<std::size_t>(uniform_int(
                                  rng, 0, static_cast<int>(i) - 1))]);
    SemiSplit split;
    split.ratio = ratio;
    split.seed = seed;
    split.labeled_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(labeled_n));
    split.unlabeled_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(labeled_n), ids.end());
    std::sort(split.labeled_ids.begin(), split.labeled_ids.end());
    std::sort(split.unlabeled_ids.begin(), split.unlabeled_ids.end());
    return split;
}

// Checks a split against its manifest: ids exist, partition is exact, and
// every labeled record actually has a mask.
inline void validate_split(const DatasetManifest& manifest,
                           const SemiSplit& split) {
    auto train = manifest.split_records("train");
    std::vector<std::string> all;
    all.reserve(train.size());
    for (const ManifestRecord* r : train) all.push_back(r->id);
    std::sort(all.begin(), all.end());
    std::vector<std::string> both = split.labeled_ids;
    both.insert(both.end(), split.unlabeled_ids.begin(),
                split.unlabeled_ids.end());
    std::sort(both.begin(), both.end());
    if (both != all)
        throw DataError("split does not partition the train set");
    for (const std::string& id : split.labeled_ids) {
        const ManifestRecord* r = manifest.find(id);
        if (r && !r->mask)
            throw DataError("labeled record " + id + " has no mask");
    }
}

inline void save_split(const SemiSplit& split, const std::string& path) {
    nlohmann::json j;
    j["ratio"] = split.ratio;
    j["seed"] = split.seed;
    j["labeled_ids"] = split.labeled_ids;
    j["unlabeled_ids"] = split.unlabeled_ids;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write split: " + path);
    out << j.dump(2) << "\n";
}

inline SemiSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception&) {
        throw DataError("malformed split file: " + path);
    }
    SemiSplit split;
    try {
        split.ratio = j.at("ratio").get<double>();
        split.seed = j.at("seed").get<std::uint64_t>();
        split.labeled_ids = j.at("labeled_ids").get<std::vector<std::string>>();
        split.unlabeled_ids =
            j.at("unlabeled_ids").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("split file " + path + ": " + e.what());
    }
    return split;
}

}  // namespace resmatch
