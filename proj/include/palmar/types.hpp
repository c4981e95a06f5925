#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace palmar {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec2i = Eigen::Vector2i;
using Vec3i = Eigen::Vector3i;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Error hierarchy. The CLI maps ParseError/ConfigError/ValidationError to
// exit code 2 and NumericError to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

enum class Sensor { lidar, mmwave, synthetic };

std::string to_string(Sensor s);
Sensor sensor_from_string(const std::string& s);

// Coordinate convention: x right, y forward (depth), z up.
// Spherical points store (r, azimuth, elevation) in the vector slots:
// azimuth in the x-y plane measured from +y, elevation from the x-y plane.
enum class Coords { cartesian, spherical };

/// One time-stamped sweep of 3D points from a single sensor.
struct Frame {
  double t = 0.0;
  Sensor sensor = Sensor::synthetic;
  Coords coords = Coords::cartesian;
  std::vector<Vec3> points;
};

/// Axis-aligned voxel lattice over a bounded region.
/// Linear cell order is x-fastest, then y, then z.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  Vec3 cell_size = Vec3::Constant(0.10);
  Vec3i dims = Vec3i::Ones();

  void validate() const {
    if (!(cell_size.array() > 0.0).all())
      throw ValidationError("GridSpec: cell_size must be positive on every axis");
    if (!(dims.array() >= 1).all())
      throw ValidationError("GridSpec: dims must be >= 1 on every axis");
    if (!origin.allFinite() || !cell_size.allFinite())
      throw ValidationError("GridSpec: origin and cell_size must be finite");
  }

  long num_cells() const {
    return static_cast<long>(dims.x()) * dims.y() * dims.z();
  }

  Vec3i cell_of(const Vec3& p) const {
    Vec3 rel = (p - origin).cwiseQuotient(cell_size);
    return Vec3i(static_cast<int>(std::floor(rel.x())),
                 static_cast<int>(std::floor(rel.y())),
                 static_cast<int>(std::floor(rel.z())));
  }

  bool in_bounds(const Vec3i& c) const {
    return (c.array() >= 0).all() && (c.array() < dims.array()).all();
  }

  bool contains(const Vec3& p) const { return in_bounds(cell_of(p)); }

  long linear(const Vec3i& c) const {
    return (static_cast<long>(c.z()) * dims.y() + c.y()) * dims.x() + c.x();
  }

  Vec3i unlinear(long idx) const {
    int x = static_cast<int>(idx % dims.x());
    long rest = idx / dims.x();
    int y = static_cast<int>(rest % dims.y());
    int z = static_cast<int>(rest / dims.y());
    return Vec3i(x, y, z);
  }

  Vec3 cell_center(const Vec3i& c) const {
    Vec3 offset = c.cast<double>() + Vec3::Constant(0.5);
    return origin + offset.cwiseProduct(cell_size);
  }
};

struct PersonTruth {
  int id = 0;
  Vec3 head = Vec3::Zero();
  std::string activity;
};

struct TruthFrame {
  double t = 0.0;
  std::vector<PersonTruth> persons;
};

/// Per-frame ground truth; person ids are stable across frames.
using GroundTruth = std::vector<TruthFrame>;

}  // namespace palmar
