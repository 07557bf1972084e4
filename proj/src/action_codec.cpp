#include "dnr/action_codec.hpp"

#include <cmath>
#include <numbers>

#include "dnr/error.hpp"

namespace dnr {

namespace {

// Values this close (in bin units) below a bin edge are counted in the upper
// bin, so voxel centers and bin edges survive floating-point round trips.
constexpr double kEdgeSnap = 1e-9;
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

int bin_with_clip(double scaled, int bins) {
  if (std::isnan(scaled)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot encode NaN");
  }
  const double snapped = std::floor(scaled + kEdgeSnap);
  if (snapped < 0.0) return 0;
  if (snapped > static_cast<double>(bins - 1)) return bins - 1;
  return static_cast<int>(snapped);
}

void require_index(int value, int bins, const char* what) {
  if (value < 0 || value >= bins) {
    throw Error(ErrorCode::kIndexOutOfRange,
                std::string(what) + " index " + std::to_string(value) +
                    " outside [0, " + std::to_string(bins - 1) + "]");
  }
}

}  // namespace

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

std::string_view to_string(EulerConvention convention) {
  switch (convention) {
    case EulerConvention::kExtrinsicXYZ: return "extrinsic-xyz";
  }
  return "unknown";
}

EulerConvention parse_euler_convention(std::string_view text) {
  if (text == "extrinsic-xyz") return EulerConvention::kExtrinsicXYZ;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown Euler convention '" + std::string(text) + "'");
}

void CodecConfig::check() const {
  if (bins_per_axis < 2) {
    throw Error(ErrorCode::kInvalidArgument, "bins_per_axis must be >= 2");
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (!(bounds.min[axis] < bounds.max[axis])) {
      throw Error(ErrorCode::kInvalidArgument,
                  "workspace bounds must satisfy min < max on every axis");
    }
  }
  if (!(angle_resolution_deg > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "angle resolution must be positive");
  }
  const double bins = 360.0 / angle_resolution_deg;
  if (std::abs(bins - std::round(bins)) > 1e-9 || bins < 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "angle resolution must divide 360");
  }
}

int CodecConfig::rotation_bins() const {
  return static_cast<int>(std::floor(360.0 / angle_resolution_deg + kEdgeSnap));
}

Vec3 CodecConfig::resolution() const {
  Vec3 r{};
  for (int axis = 0; axis < 3; ++axis) {
    r[axis] = (bounds.max[axis] - bounds.min[axis]) / bins_per_axis;
  }
  return r;
}

std::array<int, 7> DiscreteAction::to_array() const {
  return {translation[0], translation[1], translation[2], rotation[0],
          rotation[1],    rotation[2],    gripper};
}

DiscreteAction DiscreteAction::from_array(const std::array<int, 7>& v) {
  return DiscreteAction{{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, v[6]};
}

std::string format_action(const DiscreteAction& action) {
  std::string out = "[";
  const auto values = action.to_array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(values[i]);
  }
  out += ']';
  return out;
}

bool in_range(const DiscreteAction& action, const CodecConfig& cfg) {
  const int rot_bins = cfg.rotation_bins();
  for (int axis = 0; axis < 3; ++axis) {
    if (action.translation[axis] < 0 || action.translation[axis] >= cfg.bins_per_axis)
      return false;
    if (action.rotation[axis] < 0 || action.rotation[axis] >= rot_bins) return false;
  }
  return action.gripper == 0 || action.gripper == 1;
}

double wrap_degrees(double angle) {
  if (!std::isfinite(angle)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot wrap a non-finite angle");
  }
  double wrapped = std::fmod(angle + 180.0, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  wrapped -= 180.0;
  if (wrapped >= 180.0 - 1e-9) wrapped -= 360.0;
  return wrapped;
}

Index3 encode_translation(const Vec3& position, const CodecConfig& cfg) {
  const Vec3 r = cfg.resolution();
  Index3 out{};
  for (int axis = 0; axis < 3; ++axis) {
    out[axis] = bin_with_clip((position[axis] - cfg.bounds.min[axis]) / r[axis],
                              cfg.bins_per_axis);
  }
  return out;
}

Vec3 decode_translation(const Index3& index, const CodecConfig& cfg) {
  const Vec3 r = cfg.resolution();
  Vec3 out{};
  for (int axis = 0; axis < 3; ++axis) {
    require_index(index[axis], cfg.bins_per_axis, "translation");
    out[axis] = cfg.bounds.min[axis] + r[axis] * index[axis] + r[axis] / 2.0;
  }
  return out;
}

Index3 encode_rotation(const Vec3& euler_deg, const CodecConfig& cfg) {
  const int bins = cfg.rotation_bins();
  Index3 out{};
  for (int axis = 0; axis < 3; ++axis) {
    const double theta = wrap_degrees(euler_deg[axis]);
    out[axis] = bin_with_clip((theta + 180.0) / cfg.angle_resolution_deg, bins);
  }
  return out;
}

Vec3 decode_rotation(const Index3& bins, const CodecConfig& cfg) {
  Vec3 out{};
  for (int axis = 0; axis < 3; ++axis) {
    require_index(bins[axis], cfg.rotation_bins(), "rotation");
    out[axis] = cfg.angle_resolution_deg * bins[axis] - 180.0;
  }
  return out;
}

Vec3 quat_to_euler(const Quaternion& q) {
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw Error(ErrorCode::kNonUnitQuaternion,
                "quaternion norm " + std::to_string(n) + " is not 1");
  }
  const double w = q.w / n;
  const double x = q.x / n;
  const double y = q.y / n;
  const double z = q.z / n;

  const double r00 = 1.0 - 2.0 * (y * y + z * z);
  const double r01 = 2.0 * (x * y - w * z);
  const double r10 = 2.0 * (x * y + w * z);
  const double r11 = 1.0 - 2.0 * (x * x + z * z);
  const double r20 = 2.0 * (x * z - w * y);
  const double r21 = 2.0 * (y * z + w * x);
  const double r22 = 1.0 - 2.0 * (x * x + y * y);

  const double cos_pitch = std::hypot(r00, r10);
  const double pitch = std::atan2(-r20, cos_pitch);
  double roll = 0.0;
  double yaw = 0.0;
  if (cos_pitch > 1e-10) {
    roll = std::atan2(r21, r22);
    yaw = std::atan2(r10, r00);
  } else {
    // Gimbal lock: only yaw - roll (or yaw + roll) is observable.
    yaw = std::atan2(-r01, r11);
  }
  return {wrap_degrees(roll * kRadToDeg), wrap_degrees(pitch * kRadToDeg),
          wrap_degrees(yaw * kRadToDeg)};
}

Quaternion euler_to_quat(const Vec3& euler_deg) {
  const double hr = euler_deg[0] * kDegToRad / 2.0;
  const double hp = euler_deg[1] * kDegToRad / 2.0;
  const double hy = euler_deg[2] * kDegToRad / 2.0;
  const double cr = std::cos(hr), sr = std::sin(hr);
  const double cp = std::cos(hp), sp = std::sin(hp);
  const double cy = std::cos(hy), sy = std::sin(hy);

  Quaternion q{cr * cp * cy + sr * sp * sy, sr * cp * cy - cr * sp * sy,
               cr * sp * cy + sr * cp * sy, cr * cp * sy - sr * sp * cy};
  const double n = q.norm();
  q.w /= n;
  q.x /= n;
  q.y /= n;
  q.z /= n;
  return q;
}

DiscreteAction encode_action(const ContinuousControl& control, const CodecConfig& cfg) {
  if (control.gripper != 0 && control.gripper != 1) {
    throw Error(ErrorCode::kInvalidArgument, "gripper command must be 0 or 1");
  }
  return DiscreteAction{encode_translation(control.position, cfg),
                        encode_rotation(quat_to_euler(control.orientation), cfg),
                        control.gripper};
}

ContinuousControl decode_action(const DiscreteAction& action, const CodecConfig& cfg) {
  if (action.gripper != 0 && action.gripper != 1) {
    throw Error(ErrorCode::kIndexOutOfRange,
                "gripper value " + std::to_string(action.gripper) + " is not 0 or 1");
  }
  return ContinuousControl{decode_translation(action.translation, cfg),
                           euler_to_quat(decode_rotation(action.rotation, cfg)),
                           action.gripper};
}

}  // namespace dnr
