#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "gmmunit/gmm.hpp"
#include "gmmunit/rng.hpp"

namespace gmmunit {

enum class LabelSource {
  folders,   // root/<domain>/*.png, one categorical domain per folder
  manifest,  // root/manifest.csv: path,<attr1>,<attr2>,... with 0/1 cells
};

std::string_view to_string(LabelSource source);
LabelSource parse_label_source(std::string_view text);

struct DatasetSpec {
  std::string root;
  LabelSource labels = LabelSource::folders;
  std::string manifest = "manifest.csv";
  int image_size = 32;
  std::uint64_t split_seed = 0;
  // Held-out images per domain (folders) or in total (manifest).
  int holdout = 0;
};

struct Dataset {
  GmmMode mode = GmmMode::categorical;
  std::vector<std::string> attributes;
  torch::Tensor images;  // [N, 3, h, w] float32 in [-1, 1]
  std::vector<DomainLabel> labels;
  std::vector<std::string> paths;
  std::vector<int64_t> train;
  std::vector<int64_t> test;

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  torch::Tensor batch(const std::vector<int64_t>& indices) const;
  std::vector<DomainLabel> labels_of(const std::vector<int64_t>& indices) const;
  // Indices of `subset` whose label equals `label`.
  std::vector<int64_t> with_label(const std::vector<int64_t>& subset, const DomainLabel& label) const;
};

Dataset load_dataset(const DatasetSpec& spec);

// Exact affine map between 8-bit values and [-1, 1].
inline double normalize_value(int v) { return static_cast<double>(v) / 127.5 - 1.0; }
std::uint8_t denormalize_value(double v);

// [3, h, w] float32 in [-1, 1], resized to size x size (area filter when
// shrinking, bilinear otherwise).
torch::Tensor read_image(const std::string& path, int size);
// Writes a [3, h, w] image in [-1, 1] as 8-bit RGB.
void write_image(const torch::Tensor& image, const std::string& path);
// rows[r][c] are [3, h, w] images; all cells must share one size.
void write_grid(const std::vector<std::vector<torch::Tensor>>& rows, const std::string& path);
// Rounds an image in [-1, 1] to the values an 8-bit file stores.
torch::Tensor quantize(const torch::Tensor& images);

// Synthetic grayscale digit glyphs, white on black: [count, 1, size, size] uint8.
torch::Tensor render_digit_glyphs(int count, int size, std::uint64_t seed);

std::string toy_domain_name(int domain);
// Colour transform of toy domain `domain` applied to one [1, h, w] uint8
// glyph; returns [3, h, w] uint8. Domain 0 is the identity (gray replicated).
torch::Tensor toy_domain_transform(const torch::Tensor& glyph, int domain, std::uint64_t seed, int64_t index);
// Splits `source` round-robin over the domains, transforms each image and
// writes root/<domain>/<index>.png. Returns the folder-layout spec.
DatasetSpec build_toy_domains(const torch::Tensor& source, int n_domains, std::uint64_t seed, const std::string& root,
                              int holdout = 0);

struct MirroredBatch {
  torch::Tensor images;
  std::vector<bool> flipped;
};

MirroredBatch augment_mirror(const torch::Tensor& batch, Rng& rng, double p = 0.5);
torch::Tensor apply_mirror(const torch::Tensor& batch, const std::vector<bool>& flipped);

}  // namespace gmmunit
