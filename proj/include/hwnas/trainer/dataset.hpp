#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hwnas/autodiff/rng.hpp"
#include "hwnas/autodiff/tensor.hpp"
#include "hwnas/netgraph/layer.hpp"
#include "hwnas/netgraph/serialize.hpp"

namespace hwnas {

/// Labelled images stored contiguously as [N, C, H, W].
template <class T>
struct Dataset {
  InputShape shape;
  std::size_t classes = 0;
  std::vector<T> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return shape.channels * shape.height * shape.width; }

  Tensor<T> gather(std::span<const std::size_t> idx) const {
    Tensor<T> out({idx.size(), shape.channels, shape.height, shape.width});
    const std::size_t n = image_size();
    for (std::size_t k = 0; k < idx.size(); ++k)
      std::copy_n(images.data() + idx[k] * n, n, out.values().data() + k * n);
    return out;
  }

  std::vector<int> gather_labels(std::span<const std::size_t> idx) const {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(labels[i]);
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out{shape, classes, {}, {}};
    const std::size_t n = image_size();
    out.images.reserve(idx.size() * n);
    for (auto i : idx) {
      out.images.insert(out.images.end(), images.begin() + static_cast<std::ptrdiff_t>(i * n),
                        images.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  void validate() const {
    if (classes == 0) throw std::invalid_argument("dataset needs at least one class");
    if (images.size() != labels.size() * image_size()) throw std::invalid_argument("dataset image buffer size mismatch");
    for (int l : labels)
      if (l < 0 || static_cast<std::size_t>(l) >= classes) throw std::invalid_argument("dataset label out of range");
  }
};

/// Gaussian-blob class prototypes rendered with jitter, gain and pixel noise.
struct SyntheticSpec {
  InputShape shape{3, 16, 16};
  std::size_t classes = 10;
  std::size_t blobs = 3;  ///< per class and channel
  double noise = 0.6;     ///< pixel noise standard deviation
  double jitter = 1.5;    ///< max prototype shift in pixels
  std::uint64_t seed = 0;
};

inline constexpr std::uint64_t kPrototypeStream = 0x9e0;
inline constexpr std::uint64_t kTrainPoolStream = 0x7a1;
inline constexpr std::uint64_t kTestStream = 0x7e5;

/// `samples` images with balanced labels (i mod classes), drawn from stream
/// `stream`. Prototypes depend only on spec.seed, so different streams give
/// independent samples of the same task.
template <class T>
Dataset<T> make_synthetic(const SyntheticSpec& spec, std::size_t samples, std::uint64_t stream) {
  if (spec.classes == 0 || spec.blobs == 0) throw std::invalid_argument("synthetic: classes and blobs must be >= 1");
  const auto [C, H, W] = std::tuple{spec.shape.channels, spec.shape.height, spec.shape.width};
  if (C == 0 || H == 0 || W == 0) throw std::invalid_argument("synthetic: image extents must be >= 1");
  struct Blob {
    double cx, cy, sigma, amp;
  };
  Rng proto(spec.seed, kPrototypeStream);
  std::vector<Blob> blobs;  // [class][channel][blob]
  const double extent = static_cast<double>(std::min(H, W));
  for (std::size_t k = 0; k < spec.classes * C * spec.blobs; ++k) {
    Blob b;
    b.cx = proto.uniform(0.15, 0.85) * static_cast<double>(H);
    b.cy = proto.uniform(0.15, 0.85) * static_cast<double>(W);
    b.sigma = proto.uniform(0.08, 0.2) * extent;
    b.amp = proto.uniform(0.5, 1.0) * (proto.uniform() < 0.5 ? -1.0 : 1.0);
    blobs.push_back(b);
  }

  Dataset<T> ds{spec.shape, spec.classes, {}, {}};
  ds.images.resize(samples * C * H * W);
  ds.labels.resize(samples);
  Rng rng(spec.seed, stream);
  for (std::size_t n = 0; n < samples; ++n) {
    const std::size_t label = n % spec.classes;
    ds.labels[n] = static_cast<int>(label);
    const double dx = rng.uniform(-spec.jitter, spec.jitter);
    const double dy = rng.uniform(-spec.jitter, spec.jitter);
    const double gain = rng.uniform(0.8, 1.2);
    T* img = ds.images.data() + n * C * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const Blob* bl = blobs.data() + (label * C + c) * spec.blobs;
      for (std::size_t x = 0; x < H; ++x)
        for (std::size_t y = 0; y < W; ++y) {
          double v = 0;
          for (std::size_t b = 0; b < spec.blobs; ++b) {
            const double ux = static_cast<double>(x) - bl[b].cx - dx;
            const double uy = static_cast<double>(y) - bl[b].cy - dy;
            v += bl[b].amp * std::exp(-(ux * ux + uy * uy) / (2 * bl[b].sigma * bl[b].sigma));
          }
          img[(c * H + x) * W + y] = static_cast<T>(gain * v + spec.noise * rng.normal());
        }
    }
  }
  return ds;
}

/// Stratified split: per class, round(fraction * n_c) samples go to validation,
/// adjusted by largest remainder so the total is round(fraction * N).
template <class T>
std::pair<Dataset<T>, Dataset<T>> split_validation(const Dataset<T>& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) throw std::invalid_argument("validation fraction must be in (0,1)");
  std::vector<std::vector<std::size_t>> by_class(ds.classes);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);

  const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.size())));
  std::vector<std::size_t> take(ds.classes);
  std::vector<std::pair<double, std::size_t>> remainder;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    const double exact = fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += take[c];
    remainder.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainder.begin(), remainder.end());
  for (std::size_t k = 0; assigned < total && k < remainder.size(); ++k, ++assigned) ++take[remainder[k].second];

  Rng rng(seed, 0x5b1);
  std::vector<std::size_t> train, valid;
  for (std::size_t c = 0; c < ds.classes; ++c) {
    auto& idx = by_class[c];
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    valid.insert(valid.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(valid.begin(), valid.end());
  return {ds.subset(train), ds.subset(valid)};
}

// Raw tensor files: a JSON document with base64 float32 pixels.

template <class T>
json dataset_to_json(const Dataset<T>& ds) {
  std::vector<float> px(ds.images.begin(), ds.images.end());
  return json{{"format", "hwnas-tensors"},
              {"version", 1},
              {"shape", {ds.size(), ds.shape.channels, ds.shape.height, ds.shape.width}},
              {"classes", ds.classes},
              {"images", base64::encode_values(px)},
              {"labels", ds.labels}};
}

template <class T>
Dataset<T> dataset_from_json(const json& doc) {
  if (doc.value("format", "") != "hwnas-tensors") throw std::invalid_argument("not an hwnas-tensors document");
  if (doc.value("version", 0) != 1) throw std::invalid_argument("unsupported hwnas-tensors version");
  const auto shape = doc.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 4) throw std::invalid_argument("hwnas-tensors shape must be [N,C,H,W]");
  Dataset<T> ds;
  ds.shape = {shape[1], shape[2], shape[3]};
  ds.classes = doc.at("classes").get<std::size_t>();
  const auto px = base64::decode_values<float>(doc.at("images").get<std::string>());
  ds.images.assign(px.begin(), px.end());
  ds.labels = doc.at("labels").get<std::vector<int>>();
  if (ds.labels.size() != shape[0]) throw std::invalid_argument("hwnas-tensors label count mismatch");
  ds.validate();
  return ds;
}

template <class T>
void save_dataset(const std::string& path, const Dataset<T>& ds) {
  write_json(path, dataset_to_json(ds));
}

template <class T>
Dataset<T> load_dataset(const std::string& path) {
  return dataset_from_json<T>(read_json(path));
}

}  // namespace hwnas
