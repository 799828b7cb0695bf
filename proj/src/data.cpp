// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "tinyunet/errors.hpp"
#include "tinyunet/rng.hpp"
#include "tinyunet/serialize.hpp"

namespace fs = std::filesystem;

namespace tinyunet {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::optional<Extent> parse_extent_directive(const std::string& comment) {
    // "# extent: 128x128"
    const std::string body = trim(comment.substr(1));
    if (!body.starts_with("extent:")) {
        return std::nullopt;
    }
    int h = 0;
    int w = 0;
    if (std::sscanf(body.c_str() + 7, " %dx%d", &h, &w) != 2 || h < 1 || w < 1) {
        return std::nullopt;
    }
    return Extent{h, w};
}

Tensor plane_tensor(int h, int w) { return Tensor(Shape{1, 1, h, w}); }

enum class RasterKind { Pgm, TensorFile };

RasterKind sniff(const std::string& bytes, const std::string& path) {
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') {
        return RasterKind::Pgm;
    }
    if (bytes.size() >= 4 && bytes.compare(0, 4, kTensorMagic, 4) == 0) {
        return RasterKind::TensorFile;
    }
    throw FormatError("'" + path + "': bad magic bytes (expected PGM P5 or ULT1 tensor)");
}

Tensor single_plane(Tensor t, const std::string& path) {
    const Shape& s = t.shape();
    if (s.n != 1 || s.c != 1) {
        throw FormatError("'" + path + "': tensor " + to_string(s) + " is not a single plane");
    }
    return t;
}

Tensor read_image_plane(const std::string& path) {
    const std::string bytes = read_file(path);
    if (sniff(bytes, path) == RasterKind::TensorFile) {
        return single_plane(decode_tensor(bytes), path);
    }
    const GrayImage g = parse_pgm(bytes, path);
    Tensor t = plane_tensor(g.height, g.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        t[i] = static_cast<float>(g.pixels[i]) / 255.0f;
    }
    return t;
}

Tensor load_mask(const std::string& path) {
    const std::string bytes = read_file(path);
    if (sniff(bytes, path) == RasterKind::TensorFile) {
        Tensor t = single_plane(decode_tensor(bytes), path);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t[i] != 0.0f && t[i] != 1.0f) {
                throw FormatError("'" + path + "': nonbinary mask value " + std::to_string(t[i]) +
                                  " at index " + std::to_string(i));
            }
        }
        return t;
    }
    const GrayImage g = parse_pgm(bytes, path);
    Tensor t = plane_tensor(g.height, g.width);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) {
        const std::uint8_t v = g.pixels[i];
        if (v != 0 && v != 255) {
            throw FormatError("'" + path + "': nonbinary mask value " + std::to_string(v) +
                              " at row " + std::to_string(i / g.width) + ", column " +
                              std::to_string(i % g.width));
        }
        t[i] = v == 255 ? 1.0f : 0.0f;
    }
    return t;
}

void zscore(Tensor& t) {
    double sum = 0.0;
    for (float v : t.values()) sum += v;
    const double mean = sum / static_cast<double>(t.size());
    double sq = 0.0;
    for (float v : t.values()) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(t.size()));
    for (float& v : t.values()) {
        v = static_cast<float>(sd > 0.0 ? (v - mean) / sd : v - mean);
    }
}

// Bilinear upsampling of a coarse random lattice gives a smooth background.
std::vector<float> smooth_noise(int size, Rng& rng) {
    const int cells = std::max(2, size / 16);
    const int lattice = cells + 1;
    std::vector<double> grid(static_cast<std::size_t>(lattice) * lattice);
    for (double& g : grid) {
        g = rng.uniform(0.05, 0.35);
    }
    std::vector<float> out(static_cast<std::size_t>(size) * size);
    const double scale = static_cast<double>(cells) / size;
    for (int y = 0; y < size; ++y) {
        const double gy = (y + 0.5) * scale;
        const int y0 = std::min(static_cast<int>(gy), cells - 1);
        const double fy = gy - y0;
        for (int x = 0; x < size; ++x) {
            const double gx = (x + 0.5) * scale;
            const int x0 = std::min(static_cast<int>(gx), cells - 1);
            const double fx = gx - x0;
            auto at = [&](int r, int c) { return grid[static_cast<std::size_t>(r) * lattice + c]; };
            const double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
            const double bottom = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
            out[static_cast<std::size_t>(y) * size + x] = static_cast<float>(top * (1 - fy) + bottom * fy);
        }
    }
    return out;
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path + "'");
    }
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        const fs::path fp(p);
        return (fp.is_absolute() || base.empty()) ? p : (base / fp).string();
    };
    Manifest m;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            continue;
        }
        if (stripped[0] == '#') {
            if (auto e = parse_extent_directive(stripped)) {
                m.extent = e;
            }
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": expected exactly two tab-separated fields");
        }
        const std::string image = trim(line.substr(0, tab));
        const std::string mask = trim(line.substr(tab + 1));
        if (image.empty() || mask.empty()) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": empty path");
        }
        if (!seen.insert(image).second) {
            throw FormatError("manifest '" + path + "' line " + std::to_string(lineno) +
                              ": duplicate image path '" + image + "'");
        }
        m.entries.push_back({resolve(image), resolve(mask)});
    }
    if (in.bad()) {
        throw IoError("read failure on manifest '" + path + "'");
    }
    return m;
}

void save_manifest(const Manifest& manifest, const std::string& path) {
    std::ostringstream out;
    out << "# image\tmask\n";
    if (manifest.extent) {
        out << "# extent: " << manifest.extent->height << 'x' << manifest.extent->width << '\n';
    }
    for (const ManifestEntry& e : manifest.entries) {
        out << e.image << '\t' << e.mask << '\n';
    }
    write_file_atomic(path, out.str());
}

GrayImage parse_pgm(const std::string& bytes, const std::string& origin) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
        throw FormatError("'" + origin + "': bad magic bytes (expected P5)");
    }
    std::size_t pos = 2;
    auto next_int = [&]() {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else {
                break;
            }
        }
        long value = 0;
        const std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos])) &&
               pos - start < 9) {
            value = value * 10 + (bytes[pos] - '0');
            ++pos;
        }
        if (pos == start) {
            throw FormatError("'" + origin + "': malformed PGM header");
        }
        return value;
    };
    const long width = next_int();
    const long height = next_int();
    const long maxval = next_int();
    if (width < 1 || height < 1) {
        throw FormatError("'" + origin + "': PGM extents must be positive");
    }
    if (maxval != 255) {
        throw FormatError("'" + origin + "': PGM maxval " + std::to_string(maxval) +
                          " unsupported (need 255)");
    }
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        throw FormatError("'" + origin + "': malformed PGM header");
    }
    ++pos;
    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() - pos < count) {
        throw FormatError("'" + origin + "': PGM payload truncated");
    }
    GrayImage g;
    g.width = static_cast<int>(width);
    g.height = static_cast<int>(height);
    g.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + count));
    return g;
}

GrayImage read_pgm(const std::string& path) { return parse_pgm(read_file(path), path); }

void write_pgm(const std::string& path, const GrayImage& image) {
    std::string bytes = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    bytes.append(image.pixels.begin(), image.pixels.end());
    write_file_atomic(path, bytes);
}

GrayImage to_gray(const Tensor& plane) {
    const Shape& s = plane.shape();
    if (s.n != 1 || s.c != 1) {
        throw UsageError("to_gray: expected a single plane, got " + to_string(s));
    }
    GrayImage g;
    g.height = s.h;
    g.width = s.w;
    g.pixels.resize(plane.size());
    for (std::size_t i = 0; i < plane.size(); ++i) {
        const float v = std::clamp(plane[i], 0.0f, 1.0f);
        g.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    return g;
}

Tensor load_image(const std::string& path, Normalization norm) {
    Tensor t = read_image_plane(path);
    if (norm == Normalization::ZScore) {
        zscore(t);
    }
    return t;
}

Sample load_sample(const ManifestEntry& entry, const std::optional<Extent>& expected,
                   Normalization norm) {
    Sample s;
    s.source = entry.image;
    s.image = read_image_plane(entry.image);
    s.mask = load_mask(entry.mask);
    const Shape& is = s.image.shape();
    const Shape& ms = s.mask.shape();
    if (is.h != ms.h || is.w != ms.w) {
        throw FormatError("'" + entry.image + "' is " + std::to_string(is.h) + "x" +
                          std::to_string(is.w) + " but its mask is " + std::to_string(ms.h) + "x" +
                          std::to_string(ms.w));
    }
    if (expected && (is.h != expected->height || is.w != expected->width)) {
        throw FormatError("'" + entry.image + "' does not match the declared extent " +
                          std::to_string(expected->height) + "x" + std::to_string(expected->width));
    }
    if (norm == Normalization::ZScore) {
        zscore(s.image);
    }
    return s;
}

std::vector<Sample> load_samples(const Manifest& manifest, Normalization norm) {
    std::vector<Sample> out;
    out.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        out.push_back(load_sample(e, manifest.extent, norm));
    }
    return out;
}

SplitSizes split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
    double total = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) {
            throw UsageError("split fractions must be positive");
        }
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw UsageError("split fractions must sum to 1");
    }
    if (n < 3) {
        throw UsageError("cannot split " + std::to_string(n) + " samples into 3 partitions");
    }
    SplitSizes s;
    s.val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fractions[1] * n)));
    s.test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fractions[2] * n)));
    if (s.val + s.test >= n) {
        throw UsageError("split leaves no training samples out of " + std::to_string(n));
    }
    s.train = n - s.val - s.test;
    return s;
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                      const std::array<double, 3>& fractions,
                                                      std::uint64_t seed) {
    const SplitSizes sizes = split_sizes(n, fractions);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(std::span(order));
    std::array<std::vector<std::size_t>, 3> out;
    out[0].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes.train));
    out[1].assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                  order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
    out[2].assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val), order.end());
    return out;
}

Split split(std::vector<Sample> samples, const std::array<double, 3>& fractions, std::uint64_t seed) {
    const auto parts = split_indices(samples.size(), fractions, seed);
    Split out;
    std::vector<Sample>* dest[3] = {&out.train, &out.val, &out.test};
    for (int p = 0; p < 3; ++p) {
        for (std::size_t i : parts[p]) {
            dest[p]->push_back(std::move(samples[i]));
        }
    }
    return out;
}

std::pair<Tensor, CropRecord> pad_to_multiple(const Tensor& x, int m) {
    if (m < 1) {
        throw UsageError("pad_to_multiple: multiple must be >= 1");
    }
    const Shape& s = x.shape();
    CropRecord crop;
    crop.original = {s.h, s.w};
    crop.pad_bottom = (m - s.h % m) % m;
    crop.pad_right = (m - s.w % m) % m;
    if (crop.pad_bottom == 0 && crop.pad_right == 0) {
        return {x, crop};
    }
    Tensor out(Shape{s.n, s.c, s.h + crop.pad_bottom, s.w + crop.pad_right});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int i = 0; i < s.h; ++i) {
                std::copy_n(x.data() + x.offset(n, c, i, 0), s.w, out.data() + out.offset(n, c, i, 0));
            }
        }
    }
    return {std::move(out), crop};
}

Tensor crop_back(const Tensor& x, const CropRecord& crop) {
    const Shape& s = x.shape();
    if (s.h != crop.original.height + crop.pad_bottom || s.w != crop.original.width + crop.pad_right) {
        throw UsageError("crop_back: tensor " + to_string(s) + " does not match its crop record");
    }
    if (crop.pad_bottom == 0 && crop.pad_right == 0) {
        return x;
    }
    Tensor out(Shape{s.n, s.c, crop.original.height, crop.original.width});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int i = 0; i < crop.original.height; ++i) {
                std::copy_n(x.data() + x.offset(n, c, i, 0), crop.original.width,
                            out.data() + out.offset(n, c, i, 0));
            }
        }
    }
    return out;
}

std::vector<Sample> make_synthetic(int n, int size, std::uint64_t seed) {
    if (n < 1) {
        throw UsageError("make_synthetic: need at least one sample");
    }
    if (size < 16 || size % 16 != 0) {
        throw UsageError("make_synthetic: size must be a positive multiple of 16");
    }
    Rng rng(seed);
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(n));
    const std::size_t area = static_cast<std::size_t>(size) * size;
    while (static_cast<int>(out.size()) < n) {
        const std::vector<float> background = smooth_noise(size, rng);
        const double cx = rng.uniform(0.3, 0.7) * size;
        const double cy = rng.uniform(0.3, 0.7) * size;
        const double ax = rng.uniform(0.12, 0.28) * size;
        const double ay = rng.uniform(0.12, 0.28) * size;
        const double theta = rng.uniform(0.0, std::numbers::pi);
        const double ct = std::cos(theta);
        const double st = std::sin(theta);

        Sample s;
        s.image = plane_tensor(size, size);
        s.mask = plane_tensor(size, size);
        s.source = "synthetic:" + std::to_string(seed) + ":" + std::to_string(out.size());
        std::size_t inside = 0;
        double sum_in = 0.0;
        double sum_out = 0.0;
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dx = x + 0.5 - cx;
                const double dy = y + 0.5 - cy;
                const double u = (dx * ct + dy * st) / ax;
                const double v = (-dx * st + dy * ct) / ay;
                const bool in = u * u + v * v <= 1.0;
                const std::size_t i = static_cast<std::size_t>(y) * size + x;
                const double noise = rng.uniform(-0.03, 0.03);
                const double value = std::clamp(background[i] + (in ? 0.45 : 0.0) + noise, 0.0, 1.0);
                // quantize to 8 bits so PGM round trips are exact
                const float q = static_cast<float>(std::lround(value * 255.0)) / 255.0f;
                s.image[i] = q;
                s.mask[i] = in ? 1.0f : 0.0f;
                inside += in;
                (in ? sum_in : sum_out) += q;
            }
        }
        const double fraction = static_cast<double>(inside) / static_cast<double>(area);
        if (fraction < 0.02 || fraction > 0.5 || inside == area) {
            continue;
        }
        if (sum_in / inside <= sum_out / static_cast<double>(area - inside)) {
            continue;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::string write_dataset(const std::vector<Sample>& samples, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory '" + dir + "'");
    }
    Manifest m;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        char stem[32];
        std::snprintf(stem, sizeof stem, "%04zu", i);
        const std::string image = std::string("image_") + stem + ".pgm";
        const std::string mask = std::string("mask_") + stem + ".pgm";
        write_pgm((fs::path(dir) / image).string(), to_gray(samples[i].image));
        write_pgm((fs::path(dir) / mask).string(), to_gray(samples[i].mask));
        m.entries.push_back({image, mask});
        const Shape& s = samples[i].image.shape();
        if (i == 0) {
            m.extent = Extent{s.h, s.w};
        } else if (m.extent && !(Extent{s.h, s.w} == *m.extent)) {
            m.extent.reset();
        }
    }
    const std::string path = (fs::path(dir) / "manifest.tsv").string();
    save_manifest(m, path);
    return path;
}

}  // namespace tinyunet
