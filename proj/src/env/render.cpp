#include "prognet/env/render.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

namespace prognet::env {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

void blend(double* px, std::size_t plane, const Color& c, double alpha) {
  if (alpha <= 0.0) return;
  for (std::size_t ch = 0; ch < 3; ++ch) px[ch * plane] = (1.0 - alpha) * px[ch * plane] + alpha * c[ch];
}

}  // namespace

Point project(const SceneGeometry& g, std::size_t size, Point p) {
  const double scale = static_cast<double>(size) / (2.0 * g.view_half_extent);
  return {(p.x - (g.view_center.x - g.view_half_extent)) * scale,
          ((g.view_center.y + g.view_half_extent) - p.y) * scale};
}

nn::Tensor render_scene(const SceneGeometry& g, std::size_t size) {
  nn::Tensor image({3, size, size});
  auto data = image.mutable_data();
  const std::size_t plane = size * size;
  const double pixel = 2.0 * g.view_half_extent / static_cast<double>(size);
  // Coverage of a shape whose signed distance from the pixel center is `d` (negative inside).
  auto coverage = [pixel](double d) { return clamp01(0.5 - d / pixel); };

  for (std::size_t py = 0; py < size; ++py) {
    const double wy = g.view_center.y + g.view_half_extent - (static_cast<double>(py) + 0.5) * pixel;
    for (std::size_t px = 0; px < size; ++px) {
      const double wx = g.view_center.x - g.view_half_extent + (static_cast<double>(px) + 0.5) * pixel;
      const Point p{wx, wy};
      double* out = data.data() + py * size + px;
      for (std::size_t ch = 0; ch < 3; ++ch) out[ch * plane] = palette::background[ch];

      const double band = std::max(g.table_y_min - wy, wy - g.table_y_max);
      blend(out, plane, palette::table, coverage(band));

      for (std::size_t i = 0; i + 1 < g.joints.size(); ++i) {
        blend(out, plane, palette::link, coverage(segment_distance(p, g.joints[i], g.joints[i + 1]) - g.link_half_width));
      }
      if (!g.joints.empty()) {
        const Point b = g.joints.front(), e = g.joints.back();
        blend(out, plane, palette::base, coverage(std::hypot(wx - b.x, wy - b.y) - g.effector_radius));
        blend(out, plane, palette::effector, coverage(std::hypot(wx - e.x, wy - e.y) - g.effector_radius));
      }
      blend(out, plane, palette::target,
            coverage(std::hypot(wx - g.target.x, wy - g.target.y) - g.target_radius));
    }
  }
  return image;
}

std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::none: return "none";
    case PerturbationKind::color: return "color";
    case PerturbationKind::perspective: return "perspective";
  }
  return "?";
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
  if (s == "none") return PerturbationKind::none;
  if (s == "color") return PerturbationKind::color;
  if (s == "perspective") return PerturbationKind::perspective;
  throw std::invalid_argument("unknown perturbation kind '" + s + "'");
}

Perturbation Perturbation::draw(PerturbationKind kind, double level, std::uint64_t seed) {
  if (!(level >= 0.0 && level <= 1.0)) throw std::invalid_argument("perturbation level must lie in [0, 1]");
  Perturbation p;
  p.kind = kind;
  p.level = level;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  if (kind == PerturbationKind::color) {
    for (std::size_t c = 0; c < 3; ++c) {
      p.scale[c] = 1.0 + level * u(rng);
      p.shift[c] = level * u(rng);
    }
  } else if (kind == PerturbationKind::perspective) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    for (auto& off : p.corner_offsets) {
      const double a = angle(rng);
      off = {0.15 * level * std::cos(a), 0.15 * level * std::sin(a)};
    }
  }
  return p;
}

std::array<double, 9> Perturbation::homography(std::size_t height, std::size_t width) const {
  const double w = static_cast<double>(width), h = static_cast<double>(height);
  const std::array<Point, 4> dst{Point{0, 0}, Point{w, 0}, Point{w, h}, Point{0, h}};
  std::array<Point, 4> src;
  for (std::size_t i = 0; i < 4; ++i) {
    src[i] = {dst[i].x + corner_offsets[i].x * w, dst[i].y + corner_offsets[i].y * h};
  }
  // Solve for H with H * dst_i ~ src_i, h33 = 1.
  Eigen::Matrix<double, 8, 8> a;
  Eigen::Matrix<double, 8, 1> b;
  for (std::size_t i = 0; i < 4; ++i) {
    const double x = dst[i].x, y = dst[i].y, u = src[i].x, v = src[i].y;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
    b(2 * i) = u;
    b(2 * i + 1) = v;
  }
  Eigen::Matrix<double, 8, 1> sol = a.fullPivLu().solve(b);
  return {sol(0), sol(1), sol(2), sol(3), sol(4), sol(5), sol(6), sol(7), 1.0};
}

nn::Tensor Perturbation::apply(const nn::Tensor& image) const {
  if (identity()) return image.clone();
  if (image.dim() != 3 || image.size(0) != 3) {
    throw nn::DimensionError("perturbation expects a [3, H, W] image, got " + nn::to_string(image.shape()));
  }
  const std::size_t h = image.size(1), w = image.size(2), plane = h * w;
  auto in = image.data();
  nn::Tensor out({3, h, w});
  auto o = out.mutable_data();

  if (kind == PerturbationKind::color) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) o[c * plane + i] = clamp01(scale[c] * in[c * plane + i] + shift[c]);
    }
    return out;
  }

  const auto H = homography(h, w);
  for (std::size_t py = 0; py < h; ++py) {
    for (std::size_t px = 0; px < w; ++px) {
      const double x = static_cast<double>(px) + 0.5, y = static_cast<double>(py) + 0.5;
      const double den = H[6] * x + H[7] * y + H[8];
      const double su = (H[0] * x + H[1] * y + H[2]) / den - 0.5;
      const double sv = (H[3] * x + H[4] * y + H[5]) / den - 0.5;
      const double cu = std::clamp(su, 0.0, static_cast<double>(w - 1));
      const double cv = std::clamp(sv, 0.0, static_cast<double>(h - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(cu)), y0 = static_cast<std::size_t>(std::floor(cv));
      const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = cu - static_cast<double>(x0), fy = cv - static_cast<double>(y0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double* p = in.data() + c * plane;
        const double top = (1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1];
        const double bot = (1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1];
        o[c * plane + py * w + px] = clamp01((1 - fy) * top + fy * bot);
      }
    }
  }
  return out;
}

nn::Tensor apply_perturbation(const nn::Tensor& image, PerturbationKind kind, double level, std::uint64_t seed) {
  return Perturbation::draw(kind, level, seed).apply(image);
}

void write_ppm(const std::filesystem::path& path, const nn::Tensor& image) {
  if (image.dim() != 3 || image.size(0) != 3) {
    throw nn::DimensionError("write_ppm expects a [3, H, W] image, got " + nn::to_string(image.shape()));
  }
  const std::size_t h = image.size(1), w = image.size(2), plane = h * w;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  os << "P6\n" << w << ' ' << h << "\n255\n";
  auto d = image.data();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamp01(d[c * plane + i]) * 255.0))));
    }
  }
}

}  // namespace prognet::env
