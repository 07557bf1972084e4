#pragma once

// Conversion between continuous end-effector controls u = [p, q, g] and the
// 7-integer discrete actions [ix, iy, iz, ir, ip, iyaw, g] exchanged with the
// language model.
//
// Translation is binned uniformly inside an axis-aligned workspace box and
// decoded to voxel centers. Orientation goes through roll/pitch/yaw Euler
// angles (extrinsic x, then y, then z; R = Rz(yaw) * Ry(pitch) * Rx(roll)),
// binned with resolution `angle_resolution_deg` over [-180, 180) and decoded
// to the lower bin edge.

#include <array>
#include <string>
#include <string_view>

namespace dnr {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

enum class EulerConvention { kExtrinsicXYZ };

std::string_view to_string(EulerConvention convention);
EulerConvention parse_euler_convention(std::string_view text);

struct WorkspaceBounds {
  Vec3 min{-0.5, -0.5, 0.0};
  Vec3 max{0.5, 0.5, 1.0};

  friend bool operator==(const WorkspaceBounds&, const WorkspaceBounds&) = default;
};

struct CodecConfig {
  int bins_per_axis = 100;
  double angle_resolution_deg = 5.0;
  WorkspaceBounds bounds;
  EulerConvention euler_convention = EulerConvention::kExtrinsicXYZ;

  // Throws kInvalidArgument when bins_per_axis < 2, bounds are not strictly
  // increasing, or the angle resolution does not divide 360.
  void check() const;

  int rotation_bins() const;
  Vec3 resolution() const;

  friend bool operator==(const CodecConfig&, const CodecConfig&) = default;
};

struct ContinuousControl {
  Vec3 position{};
  Quaternion orientation{};
  int gripper = 1;  // 1 open, 0 closed
};

struct DiscreteAction {
  Index3 translation{};
  Index3 rotation{};
  int gripper = 1;

  std::array<int, 7> to_array() const;
  static DiscreteAction from_array(const std::array<int, 7>& values);

  friend bool operator==(const DiscreteAction&, const DiscreteAction&) = default;
};

// "[ix, iy, iz, ir, ip, iyaw, g]"
std::string format_action(const DiscreteAction& action);

bool in_range(const DiscreteAction& action, const CodecConfig& cfg);

// Wraps an angle in degrees into [-180, 180). Values within 1e-9 degrees of
// +180 wrap to -180.
double wrap_degrees(double angle);

Index3 encode_translation(const Vec3& position, const CodecConfig& cfg);
Vec3 decode_translation(const Index3& index, const CodecConfig& cfg);

Index3 encode_rotation(const Vec3& euler_deg, const CodecConfig& cfg);
Vec3 decode_rotation(const Index3& bins, const CodecConfig& cfg);

// Throws kNonUnitQuaternion when | |q| - 1 | > 1e-6; smaller deviations are
// normalized away. At |pitch| = 90 degrees roll is fixed to 0.
Vec3 quat_to_euler(const Quaternion& q);
Quaternion euler_to_quat(const Vec3& euler_deg);

DiscreteAction encode_action(const ContinuousControl& control, const CodecConfig& cfg);
ContinuousControl decode_action(const DiscreteAction& action, const CodecConfig& cfg);

}  // namespace dnr
