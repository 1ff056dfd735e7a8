#include "gmmunit/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "gmmunit/errors.hpp"
#include "gmmunit/kv.hpp"

namespace gmmunit {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

torch::Tensor mat_to_tensor(const cv::Mat& rgb) {
  auto out = torch::empty({3, rgb.rows, rgb.cols}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.cols; ++x) {
      for (int c = 0; c < 3; ++c) acc[c][y][x] = static_cast<float>(normalize_value(row[x][c]));
    }
  }
  return out;
}

cv::Mat tensor_to_bgr(const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) throw ShapeError("expected a [3, h, w] image");
  const auto t = image.detach().to(torch::kFloat64).contiguous();
  auto acc = t.accessor<double, 3>();
  cv::Mat bgr(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = denormalize_value(acc[c][y][x]);
    }
  }
  return bgr;
}

void check_write(bool ok, const std::string& path) {
  if (!ok) throw DataError("cannot write image " + path);
}

void holdout_split(std::vector<int64_t> members, int holdout, Rng& rng, std::vector<int64_t>& train,
                                   std::vector<int64_t>& test) {
  if (holdout >= static_cast<int>(members.size())) throw DataError("holdout leaves no training images");
  // Fisher-Yates with the split stream.
  for (std::size_t i = members.size(); i > 1; --i) std::swap(members[i - 1], members[rng.index(i)]);
  test.insert(test.end(), members.begin(), members.begin() + holdout);
  train.insert(train.end(), members.begin() + holdout, members.end());
}

}  // namespace

std::string_view to_string(LabelSource source) { return source == LabelSource::folders ? "folders" : "manifest"; }

LabelSource parse_label_source(std::string_view text) {
  if (text == "folders") return LabelSource::folders;
  if (text == "manifest") return LabelSource::manifest;
  throw ConfigError("unknown label source '" + std::string(text) + "'");
}

std::uint8_t denormalize_value(double v) {
  const double scaled = std::round((v + 1.0) * 127.5);
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

torch::Tensor Dataset::batch(const std::vector<int64_t>& indices) const {
  return images.index_select(0, torch::tensor(indices, torch::kInt64));
}

std::vector<DomainLabel> Dataset::labels_of(const std::vector<int64_t>& indices) const {
  std::vector<DomainLabel> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(labels.at(i));
  return out;
}

std::vector<int64_t> Dataset::with_label(const std::vector<int64_t>& subset, const DomainLabel& label) const {
  std::vector<int64_t> out;
  for (auto i : subset) {
    if (labels.at(i).bits == label.bits) out.push_back(i);
  }
  return out;
}

torch::Tensor read_image(const std::string& path, int size) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + path);
  if (bgr.rows != size || bgr.cols != size) {
    const bool shrink = bgr.rows > size || bgr.cols > size;
    cv::resize(bgr, bgr, cv::Size(size, size), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return mat_to_tensor(rgb);
}

void write_image(const torch::Tensor& image, const std::string& path) {
  check_write(cv::imwrite(path, tensor_to_bgr(image)), path);
}

void write_grid(const std::vector<std::vector<torch::Tensor>>& rows, const std::string& path) {
  if (rows.empty() || rows.front().empty()) throw ArgumentError("write_grid: empty grid");
  std::vector<torch::Tensor> stripes;
  const auto cols = rows.front().size();
  for (const auto& row : rows) {
    if (row.size() != cols) throw ArgumentError("write_grid: ragged grid");
    stripes.push_back(torch::cat(row, 2));
  }
  write_image(torch::cat(stripes, 1), path);
}

torch::Tensor quantize(const torch::Tensor& images) {
  const auto bytes = torch::round((images.detach().to(torch::kFloat64) + 1.0) * 127.5).clamp(0.0, 255.0);
  return (bytes / 127.5 - 1.0).to(images.scalar_type());
}

Dataset load_dataset(const DatasetSpec& spec) {
  if (spec.image_size < 1) throw ConfigError("dataset image size must be positive");
  if (spec.holdout < 0) throw ConfigError("dataset holdout must be non-negative");
  const fs::path root(spec.root);
  if (!fs::is_directory(root)) throw DataError("dataset root " + spec.root + " is not a directory");

  Dataset ds;
  Rng split_rng(spec.split_seed);
  std::vector<torch::Tensor> images;

  if (spec.labels == LabelSource::folders) {
    ds.mode = GmmMode::categorical;
    std::vector<fs::path> folders;
    for (const auto& entry : fs::directory_iterator(root)) {
      if (entry.is_directory()) folders.push_back(entry.path());
    }
    std::sort(folders.begin(), folders.end());
    if (folders.empty()) throw DataError("no domain folders under " + spec.root);
    for (const auto& f : folders) ds.attributes.push_back(f.filename().string());
    const int n = static_cast<int>(folders.size());
    for (int k = 0; k < n; ++k) {
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(folders[k])) {
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError("domain folder " + folders[k].string() + " has no images");
      std::vector<int64_t> members;
      for (const auto& file : files) {
        members.push_back(static_cast<int64_t>(ds.labels.size()));
        images.push_back(read_image(file.string(), spec.image_size));
        DomainLabel label;
        label.bits.assign(n, 0);
        label.bits[k] = 1;
        label.name = ds.attributes[k];
        ds.labels.push_back(std::move(label));
        ds.paths.push_back(file.string());
      }
      holdout_split(members, spec.holdout, split_rng, ds.train, ds.test);
    }
  } else {
    ds.mode = GmmMode::factorized;
    const fs::path manifest = fs::path(spec.manifest).is_absolute() ? fs::path(spec.manifest) : root / spec.manifest;
    std::ifstream in(manifest);
    if (!in) throw DataError("cannot read manifest " + manifest.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty manifest " + manifest.string());
    const auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "path") throw DataError("manifest header must be 'path,<attr>,...'");
    ds.attributes.assign(header.begin() + 1, header.end());
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const auto cells = split(line, ',');
      if (cells.size() != header.size()) {
        throw DataError("manifest line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                        " columns");
      }
      DomainLabel label;
      for (std::size_t j = 1; j < cells.size(); ++j) {
        if (cells[j] != "0" && cells[j] != "1") {
          throw DataError("manifest line " + std::to_string(lineno) + ": label cells must be 0 or 1");
        }
        label.bits.push_back(static_cast<std::uint8_t>(cells[j][0] - '0'));
      }
      std::vector<std::string> on;
      for (std::size_t j = 0; j < label.bits.size(); ++j) {
        if (label.bits[j]) on.push_back(ds.attributes[j]);
      }
      label.name = on.empty() ? "none" : join(on, "+");
      const fs::path file = fs::path(cells[0]).is_absolute() ? fs::path(cells[0]) : root / cells[0];
      images.push_back(read_image(file.string(), spec.image_size));
      ds.labels.push_back(std::move(label));
      ds.paths.push_back(file.string());
    }
    if (ds.labels.empty()) throw DataError("manifest lists no images");
    std::vector<int64_t> all(ds.labels.size());
    std::iota(all.begin(), all.end(), 0);
    holdout_split(all, spec.holdout, split_rng, ds.train, ds.test);
  }
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.test.begin(), ds.test.end());
  ds.images = torch::stack(images);
  return ds;
}

torch::Tensor render_digit_glyphs(int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 8) throw ArgumentError("render_digit_glyphs: bad count or size");
  static const int kFonts[] = {cv::FONT_HERSHEY_SIMPLEX, cv::FONT_HERSHEY_DUPLEX, cv::FONT_HERSHEY_COMPLEX,
                               cv::FONT_HERSHEY_TRIPLEX};
  constexpr int kCanvas = 64;
  auto out = torch::zeros({count, 1, size, size}, torch::kUInt8);
  auto acc = out.accessor<std::uint8_t, 4>();
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const std::string digit(1, static_cast<char>('0' + rng.index(10)));
    const int font = kFonts[rng.index(4)];
    const double scale = 1.5 + 0.6 * rng.uniform();
    const int thickness = 3 + static_cast<int>(rng.index(4));
    int baseline = 0;
    const auto extent = cv::getTextSize(digit, font, scale, thickness, &baseline);
    cv::Mat canvas = cv::Mat::zeros(kCanvas, kCanvas, CV_8UC1);
    const cv::Point origin((kCanvas - extent.width) / 2, (kCanvas + extent.height) / 2);
    cv::putText(canvas, digit, origin, font, scale, cv::Scalar(255), thickness, cv::LINE_AA);

    const double angle = -15.0 + 30.0 * rng.uniform();
    const double zoom = 0.85 + 0.3 * rng.uniform();
    cv::Mat affine = cv::getRotationMatrix2D(cv::Point2f(kCanvas / 2.0f, kCanvas / 2.0f), angle, zoom);
    affine.at<double>(0, 2) += -4.0 + 8.0 * rng.uniform();
    affine.at<double>(1, 2) += -4.0 + 8.0 * rng.uniform();
    cv::Mat warped;
    cv::warpAffine(canvas, warped, affine, canvas.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(0));
    cv::Mat small;
    cv::resize(warped, small, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) acc[i][0][y][x] = small.at<std::uint8_t>(y, x);
    }
  }
  return out;
}

std::string toy_domain_name(int domain) {
  if (domain == 0) return "d0_plain";
  const int round = (domain - 1) / 2;
  const std::string kind = (domain - 1) % 2 == 0 ? "tinted" : "textured";
  return "d" + std::to_string(domain) + "_" + kind + (round ? std::to_string(round + 1) : "");
}

torch::Tensor toy_domain_transform(const torch::Tensor& glyph, int domain, std::uint64_t seed, int64_t index) {
  if (glyph.dim() != 3 || glyph.size(0) != 1 || glyph.scalar_type() != torch::kUInt8) {
    throw ShapeError("toy_domain_transform: expected a [1, h, w] uint8 glyph");
  }
  if (domain < 0) throw ArgumentError("toy_domain_transform: negative domain");
  const auto h = glyph.size(1);
  const auto w = glyph.size(2);
  auto out = torch::empty({3, h, w}, torch::kUInt8);
  auto src = glyph.accessor<std::uint8_t, 3>();
  auto dst = out.accessor<std::uint8_t, 3>();
  if (domain == 0) {
    for (int c = 0; c < 3; ++c) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) dst[c][y][x] = src[0][y][x];
      }
    }
    return out;
  }

  Rng palette(derive_seed(seed, 1000 + static_cast<std::uint64_t>(domain)));
  double fg[3], bg[3];
  for (int c = 0; c < 3; ++c) {
    fg[c] = 150.0 + 105.0 * palette.uniform();
    bg[c] = 100.0 * palette.uniform();
  }
  const bool textured = (domain - 1) % 2 == 1;
  Rng texture(derive_seed(derive_seed(seed, 2000 + static_cast<std::uint64_t>(domain)), static_cast<std::uint64_t>(index)));
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      const double g = src[0][y][x] / 255.0;
      const double noise = textured ? 80.0 * (texture.uniform() - 0.5) : 0.0;
      for (int c = 0; c < 3; ++c) {
        // Textured domains swap roles: dark strokes on a bright, noisy background.
        const double v = textured ? fg[c] + (bg[c] - fg[c]) * g + noise * (1.0 - g) : bg[c] + (fg[c] - bg[c]) * g;
        dst[c][y][x] = static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

DatasetSpec build_toy_domains(const torch::Tensor& source, int n_domains, std::uint64_t seed, const std::string& root,
                              int holdout) {
  if (n_domains < 2) throw ArgumentError("build_toy_domains: need at least two domains");
  if (source.dim() != 4 || source.size(1) != 1 || source.scalar_type() != torch::kUInt8) {
    throw ShapeError("build_toy_domains: expected [N, 1, h, w] uint8 glyphs");
  }
  if (source.size(2) != source.size(3)) throw ShapeError("build_toy_domains: glyphs must be square");
  for (int k = 0; k < n_domains; ++k) fs::create_directories(fs::path(root) / toy_domain_name(k));
  for (int64_t i = 0; i < source.size(0); ++i) {
    const int k = static_cast<int>(i % n_domains);
    const auto rgb = toy_domain_transform(source[i], k, seed, i);
    cv::Mat bgr(static_cast<int>(rgb.size(1)), static_cast<int>(rgb.size(2)), CV_8UC3);
    auto acc = rgb.accessor<std::uint8_t, 3>();
    for (int y = 0; y < bgr.rows; ++y) {
      for (int x = 0; x < bgr.cols; ++x) {
        bgr.at<cv::Vec3b>(y, x) = cv::Vec3b(acc[2][y][x], acc[1][y][x], acc[0][y][x]);
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "%06lld.png", static_cast<long long>(i / n_domains));
    const auto path = (fs::path(root) / toy_domain_name(k) / name).string();
    check_write(cv::imwrite(path, bgr), path);
  }
  DatasetSpec spec;
  spec.root = root;
  spec.labels = LabelSource::folders;
  spec.image_size = static_cast<int>(source.size(2));
  spec.split_seed = seed;
  spec.holdout = holdout;
  return spec;
}

MirroredBatch augment_mirror(const torch::Tensor& batch, Rng& rng, double p) {
  MirroredBatch out;
  out.flipped.resize(batch.size(0));
  for (auto&& f : out.flipped) f = rng.bernoulli(p);
  out.images = apply_mirror(batch, out.flipped);
  return out;
}

torch::Tensor apply_mirror(const torch::Tensor& batch, const std::vector<bool>& flipped) {
  if (static_cast<int64_t>(flipped.size()) != batch.size(0)) throw ArgumentError("apply_mirror: flag count mismatch");
  if (std::none_of(flipped.begin(), flipped.end(), [](bool f) { return f; })) return batch;
  std::vector<torch::Tensor> items;
  for (int64_t i = 0; i < batch.size(0); ++i) items.push_back(flipped[i] ? batch[i].flip({2}) : batch[i]);
  return torch::stack(items);
}

}  // namespace gmmunit
