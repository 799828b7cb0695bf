// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tinyunet/tensor.hpp"

namespace tinyunet {

struct ManifestEntry {
    std::string image;
    std::string mask;
};

struct Extent {
    int height = 0;
    int width = 0;
    friend bool operator==(const Extent&, const Extent&) = default;
};

/// Dataset listing. Relative paths are resolved against the manifest's
/// directory at load time, so entries always hold usable paths.
struct Manifest {
    std::vector<ManifestEntry> entries;
    std::optional<Extent> extent;  // from an optional "# extent: HxW" line
};

/// Parses `image<TAB>mask` lines. Blank lines and lines starting with '#'
/// are skipped. Throws IoError if unreadable, FormatError (with the line
/// number) on malformed lines or duplicate images.
Manifest load_manifest(const std::string& path);

/// Writes entries verbatim (paths are not relativized).
void save_manifest(const Manifest& manifest, const std::string& path);

struct Sample {
    Tensor image;  // (1, 1, h, w), values in [0, 1]
    Tensor mask;   // (1, 1, h, w), values in {0, 1}
    std::string source;
};

enum class Normalization { Unit, ZScore };

/// Loads an image/mask pair. Images are 8-bit PGM (scaled by 1/255) or raw
/// tensor files (taken as-is); masks must be {0,255} PGM or {0,1} tensors.
Sample load_sample(const ManifestEntry& entry, const std::optional<Extent>& expected = std::nullopt,
                   Normalization norm = Normalization::Unit);

/// Loads just an image (PGM or tensor file) as a (1, 1, h, w) plane.
Tensor load_image(const std::string& path, Normalization norm = Normalization::Unit);

std::vector<Sample> load_samples(const Manifest& manifest, Normalization norm = Normalization::Unit);

struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Binary PGM (P5) with maxval 255.
GrayImage read_pgm(const std::string& path);
GrayImage parse_pgm(const std::string& bytes, const std::string& origin = "<memory>");
void write_pgm(const std::string& path, const GrayImage& image);

/// Rounds a (1,1,h,w) mask or image in [0,1] to 8-bit gray.
GrayImage to_gray(const Tensor& plane);

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

/// val = round(f_val * n), test = round(f_test * n), each at least 1, and
/// train takes the remainder.
SplitSizes split_sizes(std::size_t n, const std::array<double, 3>& fractions);

/// Seeded permutation of [0, n) followed by a contiguous train/val/test partition.
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n,
                                                      const std::array<double, 3>& fractions,
                                                      std::uint64_t seed);

Split split(std::vector<Sample> samples, const std::array<double, 3>& fractions, std::uint64_t seed);

struct CropRecord {
    Extent original;
    int pad_bottom = 0;
    int pad_right = 0;
};

/// Zero-pads the bottom/right edges up to the next multiple of m.
std::pair<Tensor, CropRecord> pad_to_multiple(const Tensor& x, int m);
Tensor crop_back(const Tensor& x, const CropRecord& crop);

/// Smooth noisy background with one bright filled ellipse; the mask is the
/// ellipse. Deterministic in `seed`. `size` must be a multiple of 16.
std::vector<Sample> make_synthetic(int n, int size, std::uint64_t seed);

/// Writes samples as PGM pairs plus a manifest.tsv into `dir`; returns the manifest path.
std::string write_dataset(const std::vector<Sample>& samples, const std::string& dir);

}  // namespace tinyunet
