#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "medformer/mft.hpp"
#include "medformer/nn.hpp"
#include "medformer/tensor.hpp"

namespace mf {

struct SegSample {
  Tensor<float> image;              // in_channels x H x W
  std::vector<std::uint8_t> label;  // H x W
  std::array<double, 2> spacing = {1.0, 1.0};  // (sy, sx) physical units
  std::string id;
  std::string split = "train";

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }

  void validate(std::size_t num_classes) const {
    check(image.rank() == 3, "sample '" + id + "': image must be CxHxW");
    if (label.size() != height() * width())
      throw ValueError("sample '" + id + "': label size " + std::to_string(label.size()) +
                       " does not match image extent " + std::to_string(height()) + "x" +
                       std::to_string(width()));
    for (std::size_t i = 0; i < label.size(); ++i)
      if (label[i] >= num_classes)
        throw ValueError("sample '" + id + "': label " + std::to_string(label[i]) +
                         " at pixel " + std::to_string(i) + " out of range");
  }
};

namespace detail {

// Half-pixel-center coordinate mapping. A linear ramp is reproduced exactly
// away from the clamped border.
inline double src_coord(std::size_t dst, std::size_t dst_n, std::size_t src_n) {
  return (static_cast<double>(dst) + 0.5) * static_cast<double>(src_n) /
             static_cast<double>(dst_n) -
         0.5;
}

inline float bilinear_at(const float* plane, std::size_t H, std::size_t W, double y, double x) {
  const double yc = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(W - 1));
  const std::size_t y0 = static_cast<std::size_t>(yc);
  const std::size_t x0 = static_cast<std::size_t>(xc);
  const std::size_t y1 = std::min(y0 + 1, H - 1);
  const std::size_t x1 = std::min(x0 + 1, W - 1);
  const double fy = yc - static_cast<double>(y0);
  const double fx = xc - static_cast<double>(x0);
  const double top = plane[y0 * W + x0] * (1 - fx) + plane[y0 * W + x1] * fx;
  const double bot = plane[y1 * W + x0] * (1 - fx) + plane[y1 * W + x1] * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

}  // namespace detail

// nnUNet-style spacing resample: image bilinear, label nearest-neighbor.
// New extents are round(old * spacing / target).
inline SegSample resample(const SegSample& s, double target_sy, double target_sx) {
  if (target_sy <= 0 || target_sx <= 0 || s.spacing[0] <= 0 || s.spacing[1] <= 0)
    throw ValueError("resample: spacings must be positive");
  const std::size_t C = s.image.dim(0), H = s.height(), W = s.width();
  const std::size_t nh = static_cast<std::size_t>(
      std::llround(static_cast<double>(H) * s.spacing[0] / target_sy));
  const std::size_t nw = static_cast<std::size_t>(
      std::llround(static_cast<double>(W) * s.spacing[1] / target_sx));
  check(nh > 0 && nw > 0, "resample: degenerate target extent");

  SegSample out;
  out.id = s.id;
  out.split = s.split;
  out.spacing = {target_sy, target_sx};
  out.image = Tensor<float>(Shape{C, nh, nw});
  out.label.resize(nh * nw);
  for (std::size_t y = 0; y < nh; ++y) {
    const double sy = detail::src_coord(y, nh, H);
    for (std::size_t x = 0; x < nw; ++x) {
      const double sx = detail::src_coord(x, nw, W);
      for (std::size_t c = 0; c < C; ++c)
        out.image[(c * nh + y) * nw + x] =
            detail::bilinear_at(s.image.data() + c * H * W, H, W, sy, sx);
      const std::size_t ny = static_cast<std::size_t>(
          std::clamp(std::llround(sy), 0ll, static_cast<long long>(H - 1)));
      const std::size_t nx = static_cast<std::size_t>(
          std::clamp(std::llround(sx), 0ll, static_cast<long long>(W - 1)));
      out.label[y * nw + x] = s.label[ny * W + nx];
    }
  }
  return out;
}

// Per-channel standardization over foreground voxels (label > 0), falling
// back to whole-image statistics when there is no foreground.
inline SegSample normalize_intensity(const SegSample& s) {
  const std::size_t C = s.image.dim(0), n = s.height() * s.width();
  std::size_t fg = 0;
  for (auto v : s.label) fg += v > 0;
  SegSample out = s;
  out.image = s.image.detached();
  for (std::size_t c = 0; c < C; ++c) {
    double mean = 0, count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (fg == 0 || s.label[i] > 0) {
        mean += s.image[c * n + i];
        count += 1;
      }
    mean /= count;
    double var = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (fg == 0 || s.label[i] > 0) {
        const double d = s.image[c * n + i] - mean;
        var += d * d;
      }
    const double stddev = std::max(std::sqrt(var / count), 1e-8);
    for (std::size_t i = 0; i < n; ++i)
      out.image[c * n + i] = static_cast<float>((s.image[c * n + i] - mean) / stddev);
  }
  return out;
}

namespace detail {

// Rotation (degrees, counterclockwise) about the image center combined with
// isotropic scaling. Image bilinear, label nearest, out-of-frame fill 0.
inline SegSample rotate_scale(const SegSample& s, double angle_deg, double zoom) {
  const std::size_t C = s.image.dim(0), H = s.height(), W = s.width();
  const double a = angle_deg * M_PI / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cy = (static_cast<double>(H) - 1) / 2.0;
  const double cx = (static_cast<double>(W) - 1) / 2.0;
  SegSample out = s;
  out.image = Tensor<float>(Shape{C, H, W});
  out.label.assign(H * W, 0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      // inverse map: rotate by -a and divide by zoom
      const double dy = (static_cast<double>(y) - cy) / zoom;
      const double dx = (static_cast<double>(x) - cx) / zoom;
      const double syf = cy + ca * dy + sa * dx;
      const double sxf = cx - sa * dy + ca * dx;
      const bool inside = syf >= -0.5 && syf <= static_cast<double>(H) - 0.5 && sxf >= -0.5 &&
                          sxf <= static_cast<double>(W) - 0.5;
      for (std::size_t c = 0; c < C; ++c)
        out.image[(c * H + y) * W + x] =
            inside ? bilinear_at(s.image.data() + c * H * W, H, W, syf, sxf) : 0.0f;
      if (inside) {
        const std::size_t ny = static_cast<std::size_t>(
            std::clamp(std::llround(syf), 0ll, static_cast<long long>(H - 1)));
        const std::size_t nx = static_cast<std::size_t>(
            std::clamp(std::llround(sxf), 0ll, static_cast<long long>(W - 1)));
        out.label[y * W + x] = s.label[ny * W + nx];
      }
    }
  return out;
}

}  // namespace detail

struct AugmentConfig {
  double p = 0.5;  // per-transform application probability (crop is always on)
  double max_rotation_deg = 30.0;
  double scale_lo = 0.85, scale_hi = 1.25;
  double brightness = 0.1;
  double contrast_lo = 0.9, contrast_hi = 1.1;
  double noise_sigma_max = 0.05;
  std::size_t crop_h = 0, crop_w = 0;  // 0 keeps the full extent
};

// Photometric transforms touch the image only; the label moves geometrically
// with nearest-neighbor and keeps its dtype.
inline SegSample augment(const SegSample& s, const AugmentConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  SegSample out = s;
  out.image = s.image.detached();

  const bool do_rot = u01(rng) < cfg.p;
  const double angle =
      std::uniform_real_distribution<double>(-cfg.max_rotation_deg, cfg.max_rotation_deg)(rng);
  const bool do_scale = u01(rng) < cfg.p;
  const double zoom = std::uniform_real_distribution<double>(cfg.scale_lo, cfg.scale_hi)(rng);
  if (do_rot || do_scale)
    out = detail::rotate_scale(out, do_rot ? angle : 0.0, do_scale ? zoom : 1.0);

  const std::size_t n = out.image.size();
  if (u01(rng) < cfg.p) {
    const float shift =
        static_cast<float>(std::uniform_real_distribution<double>(-cfg.brightness, cfg.brightness)(rng));
    for (std::size_t i = 0; i < n; ++i) out.image[i] += shift;
  }
  if (u01(rng) < cfg.p) {
    const float g = static_cast<float>(
        std::uniform_real_distribution<double>(cfg.contrast_lo, cfg.contrast_hi)(rng));
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += out.image[i];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      out.image[i] = static_cast<float>(mean + g * (out.image[i] - mean));
  }
  if (u01(rng) < cfg.p) {
    const double sigma = std::uniform_real_distribution<double>(0.0, cfg.noise_sigma_max)(rng);
    std::normal_distribution<double> gauss(0.0, sigma);
    for (std::size_t i = 0; i < n; ++i) out.image[i] += static_cast<float>(gauss(rng));
  }

  const std::size_t ch = cfg.crop_h ? cfg.crop_h : out.height();
  const std::size_t cw = cfg.crop_w ? cfg.crop_w : out.width();
  if (ch > out.height() || cw > out.width())
    throw ValueError("augment: crop " + std::to_string(ch) + "x" + std::to_string(cw) +
                     " exceeds image " + std::to_string(out.height()) + "x" +
                     std::to_string(out.width()));
  const std::size_t oy =
      std::uniform_int_distribution<std::size_t>(0, out.height() - ch)(rng);
  const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, out.width() - cw)(rng);
  if (ch != out.height() || cw != out.width()) {
    const std::size_t C = out.image.dim(0), H = out.height(), W = out.width();
    SegSample cropped = out;
    cropped.image = Tensor<float>(Shape{C, ch, cw});
    cropped.label.resize(ch * cw);
    for (std::size_t y = 0; y < ch; ++y)
      for (std::size_t x = 0; x < cw; ++x) {
        for (std::size_t c = 0; c < C; ++c)
          cropped.image[(c * ch + y) * cw + x] = out.image[(c * H + oy + y) * W + ox + x];
        cropped.label[y * cw + x] = out.label[(oy + y) * W + ox + x];
      }
    out = cropped;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic segmentation task: blurred random ellipses and rectangles per
// foreground class over a smooth textured background. Labels are the exact
// generator shapes; everything is seed-deterministic.
// ---------------------------------------------------------------------------

inline std::vector<SegSample> synth_task(std::mt19937_64& rng, std::size_t n, std::size_t H,
                                         std::size_t W, std::size_t C) {
  check(C >= 2, "synth_task: need at least 2 classes");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<SegSample> out;
  out.reserve(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    SegSample s;
    std::ostringstream id;
    id << "case" << std::setw(4) << std::setfill('0') << idx;
    s.id = id.str();
    s.image = Tensor<float>(Shape{1, H, W});
    s.label.assign(H * W, 0);

    // low-frequency sinusoid texture background
    const double fy = 1.0 + 3.0 * u01(rng), fx = 1.0 + 3.0 * u01(rng);
    const double py = 2 * M_PI * u01(rng), px = 2 * M_PI * u01(rng);
    std::normal_distribution<double> pix_noise(0.0, 0.03);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        s.image[y * W + x] = static_cast<float>(
            0.1 * std::sin(2 * M_PI * fy * y / H + py) * std::sin(2 * M_PI * fx * x / W + px) +
            pix_noise(rng));

    std::vector<float> shapes(H * W, 0.0f);
    for (std::size_t cls = 1; cls < C; ++cls) {
      const int count = 1 + (u01(rng) < 0.4 ? 1 : 0);
      for (int k = 0; k < count; ++k) {
        const double cy = H * (0.2 + 0.6 * u01(rng)), cx = W * (0.2 + 0.6 * u01(rng));
        const double ry = H * (0.08 + 0.12 * u01(rng)), rx = W * (0.08 + 0.12 * u01(rng));
        const bool ellipse = u01(rng) < 0.5;
        const double intensity =
            0.5 + 0.5 * static_cast<double>(cls) / static_cast<double>(C - 1) + 0.1 * u01(rng);
        for (std::size_t y = 0; y < H; ++y)
          for (std::size_t x = 0; x < W; ++x) {
            const double dy = (y - cy) / ry, dx = (x - cx) / rx;
            const bool in = ellipse ? dy * dy + dx * dx <= 1.0
                                    : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
            if (in) {
              s.label[y * W + x] = static_cast<std::uint8_t>(cls);
              shapes[y * W + x] = static_cast<float>(intensity);
            }
          }
      }
    }

    // blur the shape layer only; labels stay crisp
    std::vector<float> tmp(H * W);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          double acc = 0, wsum = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const long yy = static_cast<long>(y) + dy, xx = static_cast<long>(x) + dx;
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W))
                continue;
              const double w = (dy == 0 && dx == 0) ? 4.0 : (dy == 0 || dx == 0 ? 2.0 : 1.0);
              acc += w * shapes[yy * W + xx];
              wsum += w;
            }
          tmp[y * W + x] = static_cast<float>(acc / wsum);
        }
      shapes.swap(tmp);
    }
    for (std::size_t i = 0; i < H * W; ++i) s.image[i] += shapes[i];
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Context-cue segmentation task. Every foreground blob in an image belongs to
// one class, and the only evidence for which class is a small legend patch in
// a random corner whose intensity encodes it; the blobs themselves look the
// same in every class. Correct labeling therefore requires carrying the
// legend's identity across the whole image, which makes the task sensitive to
// how well a model aggregates global context.
// ---------------------------------------------------------------------------

inline std::vector<SegSample> synth_context_task(std::mt19937_64& rng, std::size_t n,
                                                 std::size_t H, std::size_t W, std::size_t C = 3) {
  check(C >= 3, "synth_context_task: need at least 3 classes");
  check(H >= 32 && W >= 32, "synth_context_task: image must be at least 32x32");
  std::uniform_real_distribution<float> u01(0.f, 1.f);
  std::normal_distribution<float> pix_noise(0.f, 0.02f);
  const std::size_t L = 6;  // legend side
  std::vector<SegSample> out;
  out.reserve(n);
  for (std::size_t idx = 0; idx < n; ++idx) {
    SegSample s;
    std::ostringstream id;
    id << "ctx" << std::setw(4) << std::setfill('0') << idx;
    s.id = id.str();
    s.image = Tensor<float>(Shape{1, H, W});
    s.label.assign(H * W, 0);

    const float fx = 0.05f + 0.15f * u01(rng), fy = 0.05f + 0.15f * u01(rng);
    const float ph = 6.28f * u01(rng);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        s.image[y * W + x] = 0.2f + 0.05f * std::sin(fx * x + ph) * std::cos(fy * y);

    const std::size_t cls = 1 + rng() % (C - 1);
    const std::size_t corner = rng() % 4;
    const std::size_t ly = (corner / 2) ? H - L - 3 : 3;
    const std::size_t lx = (corner % 2) ? W - L - 3 : 3;
    const float legend_intensity =
        0.4f + 0.5f * static_cast<float>(cls - 1) / static_cast<float>(C - 2);
    for (std::size_t y = ly; y < ly + L; ++y)
      for (std::size_t x = lx; x < lx + L; ++x) {
        s.image[y * W + x] = legend_intensity;
        s.label[y * W + x] = static_cast<std::uint8_t>(cls);
      }

    // blobs share one fixed intensity: no local class cue
    const std::size_t blobs = 2 + rng() % 3;
    for (std::size_t b = 0; b < blobs; ++b) {
      const float cy = H * (0.3f + 0.4f * u01(rng)), cx = W * (0.3f + 0.4f * u01(rng));
      const float ry = 4 + 5 * u01(rng), rx = 4 + 5 * u01(rng);
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const float dy = (y - cy) / ry, dx = (x - cx) / rx;
          if (dy * dy + dx * dx <= 1.f) {
            s.image[y * W + x] = 0.65f;
            s.label[y * W + x] = static_cast<std::uint8_t>(cls);
          }
        }
    }
    for (std::size_t p = 0; p < H * W; ++p) s.image[p] += pix_noise(rng);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sliding-window inference. Windows are placed at stride window/2 with the
// final window snapped to the image edge; per-window predictions (softmax
// probabilities by default) are averaged by per-pixel coverage.
// fwd: callable patch (C_in x wh x ww) -> logits (C x wh x ww).
// ---------------------------------------------------------------------------

inline std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window) {
  std::vector<std::size_t> starts;
  const std::size_t stride = std::max<std::size_t>(window / 2, 1);
  for (std::size_t p = 0;; p += stride) {
    if (p + window >= extent) {
      starts.push_back(extent - window);
      break;
    }
    starts.push_back(p);
  }
  return starts;
}

template <class Fwd>
Tensor<float> sliding_window_infer(Fwd&& fwd, const Tensor<float>& image, std::size_t wh,
                                   std::size_t ww, bool softmax = true) {
  const std::size_t Cin = image.dim(0), H = image.dim(1), W = image.dim(2);
  if (wh > H || ww > W)
    throw ValueError("sliding_window_infer: window " + std::to_string(wh) + "x" +
                     std::to_string(ww) + " exceeds image " + std::to_string(H) + "x" +
                     std::to_string(W));
  auto ys = window_starts(H, wh);
  auto xs = window_starts(W, ww);
  Tensor<float> acc;
  std::vector<double> coverage(H * W, 0.0);
  for (auto oy : ys)
    for (auto ox : xs) {
      Tensor<float> patch(Shape{Cin, wh, ww});
      for (std::size_t c = 0; c < Cin; ++c)
        for (std::size_t y = 0; y < wh; ++y)
          for (std::size_t x = 0; x < ww; ++x)
            patch[(c * wh + y) * ww + x] = image[(c * H + oy + y) * W + ox + x];
      Tensor<float> logits = fwd(patch);
      check(logits.rank() == 3 && logits.dim(1) == wh && logits.dim(2) == ww,
            "sliding_window_infer: model output " + shape_str(logits.shape()) +
                " does not match window");
      Tensor<float> pred = softmax ? softmax_channels(logits).detached() : logits.detached();
      const std::size_t C = pred.dim(0);
      if (acc.size() == 0) acc = Tensor<float>::zeros(Shape{C, H, W});
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < wh; ++y)
          for (std::size_t x = 0; x < ww; ++x)
            acc[(c * H + oy + y) * W + ox + x] += pred[(c * wh + y) * ww + x];
      for (std::size_t y = 0; y < wh; ++y)
        for (std::size_t x = 0; x < ww; ++x) coverage[(oy + y) * W + ox + x] += 1.0;
    }
  const std::size_t C = acc.dim(0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H * W; ++i)
      acc[c * H * W + i] = static_cast<float>(acc[c * H * W + i] / coverage[i]);
  return acc;
}

// ---------------------------------------------------------------------------
// Dataset directory: cases/<id>_img.mft (f32 CxHxW), cases/<id>_lbl.mft
// (u8 HxW) and a manifest.json index with keys id, spacing, split.
// ---------------------------------------------------------------------------

inline void save_dataset(const std::string& dir, const std::vector<SegSample>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "cases");
  std::ofstream man(fs::path(dir) / "manifest.json");
  if (!man) throw ValueError("save_dataset: cannot write manifest in '" + dir + "'");
  man << "[\n";
  man.precision(17);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    write_mft((fs::path(dir) / "cases" / (s.id + "_img.mft")).string(), s.image);
    write_mft((fs::path(dir) / "cases" / (s.id + "_lbl.mft")).string(), s.label,
              Shape{s.height(), s.width()});
    man << "  {\"id\": \"" << s.id << "\", \"spacing\": [" << s.spacing[0] << ", "
        << s.spacing[1] << "], \"split\": \"" << s.split << "\"}"
        << (i + 1 < samples.size() ? "," : "") << "\n";
  }
  man << "]\n";
}

namespace detail {

// Minimal scanner for the manifest schema written above. Not a general JSON
// parser; rejects anything outside the documented shape.
inline std::vector<SegSample> parse_manifest(const std::string& text, const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<SegSample> out;
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  };
  auto expect = [&](char c) {
    skip_ws();
    if (pos >= text.size() || text[pos] != c)
      throw ValueError("manifest: expected '" + std::string(1, c) + "' at offset " +
                       std::to_string(pos));
    ++pos;
  };
  auto read_string = [&] {
    expect('"');
    std::string s;
    while (pos < text.size() && text[pos] != '"') s += text[pos++];
    expect('"');
    return s;
  };
  auto read_number = [&] {
    skip_ws();
    std::size_t end = pos;
    while (end < text.size() && (std::isdigit(static_cast<unsigned char>(text[end])) ||
                                 text[end] == '.' || text[end] == '-' || text[end] == '+' ||
                                 text[end] == 'e' || text[end] == 'E'))
      ++end;
    if (end == pos) throw ValueError("manifest: expected number at offset " + std::to_string(pos));
    double v = std::stod(text.substr(pos, end - pos));
    pos = end;
    return v;
  };

  expect('[');
  skip_ws();
  if (pos < text.size() && text[pos] == ']') return out;
  while (true) {
    expect('{');
    SegSample s;
    while (true) {
      const std::string key = read_string();
      expect(':');
      if (key == "id") {
        s.id = read_string();
      } else if (key == "split") {
        s.split = read_string();
      } else if (key == "spacing") {
        expect('[');
        s.spacing[0] = read_number();
        expect(',');
        s.spacing[1] = read_number();
        expect(']');
      } else {
        throw ValueError("manifest: unknown key '" + key + "'");
      }
      skip_ws();
      if (pos < text.size() && text[pos] == ',') {
        ++pos;
        continue;
      }
      break;
    }
    expect('}');
    s.image = read_mft<float>((fs::path(dir) / "cases" / (s.id + "_img.mft")).string());
    auto [lshape, lbl] =
        read_mft_array<std::uint8_t>((fs::path(dir) / "cases" / (s.id + "_lbl.mft")).string());
    check(lshape == Shape{s.image.dim(1), s.image.dim(2)},
          "manifest: label extent mismatch for case '" + s.id + "'");
    s.label = std::move(lbl);
    out.push_back(std::move(s));
    skip_ws();
    if (pos < text.size() && text[pos] == ',') {
      ++pos;
      continue;
    }
    break;
  }
  expect(']');
  return out;
}

}  // namespace detail

inline std::vector<SegSample> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream man(fs::path(dir) / "manifest.json");
  if (!man) throw ValueError("load_dataset: no manifest.json in '" + dir + "'");
  std::stringstream ss;
  ss << man.rdbuf();
  return detail::parse_manifest(ss.str(), dir);
}

}  // namespace mf
