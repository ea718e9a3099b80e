#include "daformer/uda/uda.hpp"

namespace daformer {

std::vector<int> present_classes(std::span<const std::uint8_t> label) {
  std::array<bool, 256> seen{};
  for (std::uint8_t l : label)
    if (l != kIgnoreLabel) seen[l] = true;
  std::vector<int> out;
  for (int c = 0; c < 255; ++c)
    if (seen[c]) out.push_back(c);
  return out;
}

std::vector<int> select_mix_classes(std::span<const std::uint8_t> label, std::mt19937_64& rng) {
  std::vector<int> classes = present_classes(label);
  const std::size_t n = classes.size();
  const std::size_t k = (n + 1) / 2;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, n - 1)(rng);
    std::swap(classes[i], classes[j]);
  }
  classes.resize(k);
  std::sort(classes.begin(), classes.end());
  return classes;
}

MixedSample class_mix(const MatF& src_image, std::span<const std::uint8_t> src_label, const MatF& tgt_image,
                      const PseudoLabels& pl, std::span<const int> classes) {
  const std::size_t n = src_label.size();
  if (static_cast<std::size_t>(src_image.rows()) != n || static_cast<std::size_t>(tgt_image.rows()) != n ||
      pl.labels.size() != n || src_image.cols() != tgt_image.cols())
    throw ShapeError("class_mix: source and target sizes differ");
  std::array<bool, 256> pick{};
  for (int c : classes)
    if (c >= 0 && c < 255) pick[c] = true;
  MixedSample m;
  m.h = pl.h;
  m.w = pl.w;
  m.image = tgt_image;
  m.label = pl.labels;
  m.weight.assign(n, static_cast<float>(pl.q));
  m.mask.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (src_label[i] == kIgnoreLabel || !pick[src_label[i]]) continue;
    m.mask[i] = 1;
    m.image.row(static_cast<Eigen::Index>(i)) = src_image.row(static_cast<Eigen::Index>(i));
    m.label[i] = src_label[i];
    m.weight[i] = 1.0f;
  }
  return m;
}

PooledLabel downsample_label(std::span<const std::uint8_t> label, int h, int w, int num_classes, int hf, int wf,
                             double r) {
  if (static_cast<std::size_t>(h) * w != label.size()) throw ShapeError("downsample_label: label size mismatch");
  if (hf <= 0 || wf <= 0 || h % hf != 0 || w % wf != 0)
    throw ShapeError("downsample_label: label size not divisible by the feature grid");
  const int ph = h / hf, pw = w / wf;
  const double area = static_cast<double>(ph) * pw;
  PooledLabel out;
  out.hf = hf;
  out.wf = wf;
  out.num_classes = num_classes;
  out.keep.assign(static_cast<std::size_t>(hf) * wf * num_classes, 0);
  std::vector<int> count(num_classes);
  for (int cy = 0; cy < hf; ++cy) {
    for (int cx = 0; cx < wf; ++cx) {
      std::fill(count.begin(), count.end(), 0);
      for (int y = cy * ph; y < (cy + 1) * ph; ++y)
        for (int x = cx * pw; x < (cx + 1) * pw; ++x) {
          const std::uint8_t l = label[static_cast<std::size_t>(y) * w + x];
          if (l == kIgnoreLabel) continue;
          if (l >= num_classes) throw ShapeError("downsample_label: label out of range");
          ++count[l];
        }
      const std::size_t cell = static_cast<std::size_t>(cy) * wf + cx;
      for (int c = 0; c < num_classes; ++c)
        out.keep[cell * num_classes + c] = (count[c] / area > r) ? 1 : 0;
    }
  }
  return out;
}

std::vector<std::uint8_t> thing_mask(const PooledLabel& y, std::span<const int> thing_classes) {
  const int cells = y.hf * y.wf;
  std::vector<std::uint8_t> m(cells, 0);
  for (int j = 0; j < cells; ++j)
    for (int c : thing_classes)
      if (c >= 0 && c < y.num_classes && y.kept(j, c)) m[j] = 1;
  return m;
}

}  // namespace daformer
