#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prognet/nn/tensor.hpp"

namespace prognet::env {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

using Color = std::array<double, 3>;

namespace palette {
inline constexpr Color background{0.12, 0.12, 0.15};
inline constexpr Color table{0.45, 0.38, 0.30};
inline constexpr Color link{0.25, 0.55, 1.0};
inline constexpr Color effector{0.2, 1.0, 0.3};
inline constexpr Color base{0.9, 0.9, 0.9};
inline constexpr Color target{1.0, 0.0, 0.0};
}  // namespace palette

/// What to draw, in workspace coordinates (y up, base at origin).
struct SceneGeometry {
  std::vector<Point> joints;  // base ... end effector
  Point target;
  double target_radius = 0.08;
  double link_half_width = 0.05;
  double effector_radius = 0.06;
  double table_y_min = 0.0;
  double table_y_max = 1.0;
  /// Square view window.
  Point view_center{0.0, 0.3};
  double view_half_extent = 1.05;
};

/// Pixel coordinates (continuous, origin top-left) of a workspace point.
Point project(const SceneGeometry& g, std::size_t size, Point p);

/// Rasterizes with analytic coverage; result is [3, size, size] in [0, 1].
nn::Tensor render_scene(const SceneGeometry& g, std::size_t size);

enum class PerturbationKind { none, color, perspective };
std::string to_string(PerturbationKind k);
PerturbationKind perturbation_kind_from_string(const std::string& s);

/// A perturbation with its random parameters drawn once.
///
/// color: out_c = clamp(scale_c * in_c + shift_c) with
///   scale_c = 1 + level * u_c, shift_c = level * v_c, u, v ~ U(-0.5, 0.5).
/// perspective: each image corner is displaced by level * 0.15 * size in a
///   random direction and the image is resampled through the homography
///   taking the output corners to the displaced ones (clamp-to-edge).
struct Perturbation {
  PerturbationKind kind = PerturbationKind::none;
  double level = 0.0;
  Color scale{1.0, 1.0, 1.0};
  Color shift{0.0, 0.0, 0.0};
  std::array<Point, 4> corner_offsets{};  // unit-square fractions of the image size

  static Perturbation draw(PerturbationKind kind, double level, std::uint64_t seed);
  [[nodiscard]] bool identity() const { return kind == PerturbationKind::none || level == 0.0; }
  [[nodiscard]] nn::Tensor apply(const nn::Tensor& image) const;
  /// 3x3 row-major homography from output pixel coords to source pixel coords.
  [[nodiscard]] std::array<double, 9> homography(std::size_t height, std::size_t width) const;
};

nn::Tensor apply_perturbation(const nn::Tensor& image, PerturbationKind kind, double level, std::uint64_t seed);

/// Binary PPM (P6) frame dump.
void write_ppm(const std::filesystem::path& path, const nn::Tensor& image);

}  // namespace prognet::env
