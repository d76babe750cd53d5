#include "splitfusion/synthetic_scenes.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "splitfusion/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace splitfusion {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// splitmix64; per-pixel deterministic noise independent of iteration order
uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double gaussian_noise(uint64_t seed, int frame, int r, int c) {
  const uint64_t h1 = mix64(seed ^ mix64(static_cast<uint64_t>(frame) << 32 |
                                         static_cast<uint64_t>(r) << 16 | c));
  const uint64_t h2 = mix64(h1);
  const double u1 = (static_cast<double>(h1 >> 11) + 1.0) / 9007199254740993.0;  // (0,1)
  const double u2 = static_cast<double>(h2 >> 11) / 9007199254740992.0;          // [0,1)
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

double sheet_height(const ScenePrimitive& p, double x, double y, int frame) {
  return p.base_amplitude * std::sin(kTwoPi * p.spatial_freq * x) *
             std::cos(kTwoPi * p.spatial_freq * y) +
         p.amplitude * std::sin(kTwoPi * p.spatial_freq * x) *
             std::sin(kTwoPi * p.temporal_freq * frame);
}

double pulsing_radius(const ScenePrimitive& p, int frame) {
  return p.radius * (1.0 + p.amplitude * std::sin(kTwoPi * p.temporal_freq * frame));
}

// Ray q0 + t*qd in the primitive's local frame; returns smallest t >= t_min.
std::optional<double> intersect_local(const ScenePrimitive& p, const Eigen::Vector3d& q0,
                                      const Eigen::Vector3d& qd, int frame, double t_min) {
  switch (p.type) {
    case PrimitiveType::Plane: {
      if (std::abs(qd.z()) < 1e-15) return std::nullopt;
      const double t = -q0.z() / qd.z();
      if (t < t_min) return std::nullopt;
      const Eigen::Vector3d q = q0 + t * qd;
      if (std::abs(q.x()) > p.half_extent2.x() || std::abs(q.y()) > p.half_extent2.y())
        return std::nullopt;
      return t;
    }
    case PrimitiveType::Box: {
      double t0 = t_min, t1 = std::numeric_limits<double>::max();
      for (int a = 0; a < 3; ++a) {
        if (std::abs(qd[a]) < 1e-15) {
          if (std::abs(q0[a]) > p.half_extent3[a]) return std::nullopt;
          continue;
        }
        double ta = (-p.half_extent3[a] - q0[a]) / qd[a];
        double tb = (p.half_extent3[a] - q0[a]) / qd[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
        if (t0 > t1) return std::nullopt;
      }
      return t0;  // entry point; camera inside the box sees nothing (t0 == t_min edge)
    }
    case PrimitiveType::Sphere:
    case PrimitiveType::PulsingSphere: {
      const double r = p.type == PrimitiveType::Sphere ? p.radius : pulsing_radius(p, frame);
      const double a = qd.squaredNorm();
      const double b = 2.0 * q0.dot(qd);
      const double c = q0.squaredNorm() - r * r;
      const double disc = b * b - 4 * a * c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      const double t0 = (-b - sq) / (2 * a);
      const double t1 = (-b + sq) / (2 * a);
      if (t0 >= t_min) return t0;
      if (t1 >= t_min) return t1;
      return std::nullopt;
    }
    case PrimitiveType::Sheet: {
      // F(t) = qz(t) - h(qx(t), qy(t)); Lipschitz sphere-tracing then bisection.
      const double amp = std::abs(p.amplitude) + std::abs(p.base_amplitude);
      const double slope =
          (std::abs(p.amplitude) + std::abs(p.base_amplitude)) * kTwoPi * p.spatial_freq;
      const double lip =
          std::abs(qd.z()) + slope * (std::abs(qd.x()) + std::abs(qd.y())) + 1e-12;
      // restrict to the slab |z| <= amp + eps
      double t_lo = t_min, t_hi = std::numeric_limits<double>::max();
      if (std::abs(qd.z()) > 1e-15) {
        double ta = (-amp - 1e-6 - q0.z()) / qd.z();
        double tb = (amp + 1e-6 - q0.z()) / qd.z();
        if (ta > tb) std::swap(ta, tb);
        t_lo = std::max(t_lo, ta);
        t_hi = std::min(t_hi, tb);
      } else if (std::abs(q0.z()) > amp + 1e-6) {
        return std::nullopt;
      }
      if (t_lo > t_hi) return std::nullopt;
      t_hi = std::min(t_hi, t_lo + 1e3);
      auto F = [&](double t) {
        const double x = q0.x() + t * qd.x();
        const double y = q0.y() + t * qd.y();
        const double z = q0.z() + t * qd.z();
        return z - sheet_height(p, x, y, frame);
      };
      double t = t_lo;
      double f = F(t);
      double t_prev = t, f_prev = f;
      bool crossed = false;
      const double dt_min = 1e-7;
      int guard = 0;
      while (t < t_hi && guard++ < 100000) {
        const double step = std::max(std::abs(f) / lip * 0.9, dt_min);
        t_prev = t;
        f_prev = f;
        t = std::min(t + step, t_hi);
        f = F(t);
        if ((f_prev > 0) != (f > 0) || f == 0.0) {
          crossed = true;
          break;
        }
        if (t >= t_hi) break;
      }
      if (!crossed) return std::nullopt;
      // bisection to 1e-12
      double a = t_prev, b = t, fa = f_prev;
      for (int it = 0; it < 100 && (b - a) > 1e-13; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = F(m);
        if ((fa > 0) == (fm > 0)) {
          a = m;
          fa = fm;
        } else {
          b = m;
        }
      }
      const double t_root = 0.5 * (a + b);
      const Eigen::Vector3d q = q0 + t_root * qd;
      if (std::abs(q.x()) > p.half_extent2.x() || std::abs(q.y()) > p.half_extent2.y())
        return std::nullopt;
      return t_root;
    }
  }
  return std::nullopt;
}

RigidTransform pose_from_json(const json& j) {
  RigidTransform p;
  if (j.contains("position")) {
    const auto v = j["position"].get<std::vector<double>>();
    p.translation = {v.at(0), v.at(1), v.at(2)};
  }
  if (j.contains("rpy")) {
    const auto v = j["rpy"].get<std::vector<double>>();
    p.rotation = (Eigen::AngleAxisd(v.at(2), Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(v.at(1), Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(v.at(0), Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
  } else if (j.contains("quaternion")) {
    const auto v = j["quaternion"].get<std::vector<double>>();
    Eigen::Quaterniond q(v.at(3), v.at(0), v.at(1), v.at(2));
    q.normalize();
    p.rotation = q.toRotationMatrix();
  }
  return p;
}

Eigen::Vector3d vec3_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return {v.at(0), v.at(1), v.at(2)};
}

std::array<uint8_t, 3> instance_color(int id) {
  static const std::array<std::array<uint8_t, 3>, 8> palette = {{{200, 200, 200},
                                                                 {230, 80, 60},
                                                                 {70, 160, 230},
                                                                 {90, 200, 90},
                                                                 {230, 200, 60},
                                                                 {180, 90, 220},
                                                                 {80, 220, 200},
                                                                 {240, 140, 60}}};
  return palette[static_cast<size_t>(id) % palette.size()];
}

std::string format_timestamp(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", t);
  return buf;
}

}  // namespace

RigidTransform CameraPath::pose(int frame, int total_frames) const {
  const double s = total_frames > 1 ? static_cast<double>(frame) / total_frames : 0.0;
  switch (type) {
    case Type::Fixed:
      return base;
    case Type::XyzShake: {
      RigidTransform p = base;
      for (int a = 0; a < 3; ++a)
        p.translation[a] += amplitude[a] * std::sin(kTwoPi * periods[a] * s);
      return p;
    }
    case Type::Orbit: {
      const double ang = kTwoPi * orbit_revolutions * s;
      const Eigen::Vector3d pos =
          target + orbit_radius * Eigen::Vector3d(std::sin(ang), 0.0, -std::cos(ang));
      // look-at target, +z forward, +y down (camera convention)
      const Eigen::Vector3d fwd = (target - pos).normalized();
      Eigen::Vector3d up(0, -1, 0);
      Eigen::Vector3d right = up.cross(fwd).normalized();
      const Eigen::Vector3d down = fwd.cross(right);
      RigidTransform p;
      p.rotation.col(0) = right;
      p.rotation.col(1) = down;
      p.rotation.col(2) = fwd;
      p.translation = pos;
      return p;
    }
    case Type::Line: {
      RigidTransform p = base;
      const double u = total_frames > 1 ? static_cast<double>(frame) / (total_frames - 1) : 0.0;
      p.translation = base.translation + u * (line_end - base.translation);
      return p;
    }
  }
  return base;
}

RigidTransform primitive_pose(const ScenePrimitive& p, int frame) {
  RigidTransform out = p.pose;
  out.rotation = axis_angle_to_rotation(p.angular_velocity * frame) * p.pose.rotation;
  out.translation = p.pose.translation + p.linear_velocity * frame;
  return out;
}

Eigen::Vector3d deform_local_point(const ScenePrimitive& p, const Eigen::Vector3d& local,
                                   int frame) {
  switch (p.type) {
    case PrimitiveType::Sheet:
      return {local.x(), local.y(), sheet_height(p, local.x(), local.y(), frame)};
    case PrimitiveType::PulsingSphere: {
      const double r0 = pulsing_radius(p, 0);
      if (local.norm() < 1e-12 || r0 <= 0) return local;
      return local * (pulsing_radius(p, frame) / r0);
    }
    default:
      return local;
  }
}

std::optional<double> trace_pixel(const SceneScript& script, int frame, double u, double v,
                                  int* hit_primitive) {
  const RigidTransform cam = script.camera.pose(frame, script.frames);
  const Eigen::Vector3d dir_cam((u - script.intrinsics.cx) / script.intrinsics.fx,
                                (v - script.intrinsics.cy) / script.intrinsics.fy, 1.0);
  const Eigen::Vector3d o_w = cam.translation;
  const Eigen::Vector3d d_w = cam.rotation * dir_cam;

  double best = std::numeric_limits<double>::max();
  int best_prim = -1;
  for (size_t i = 0; i < script.primitives.size(); ++i) {
    const ScenePrimitive& p = script.primitives[i];
    const RigidTransform inv = invert(primitive_pose(p, frame));
    const Eigen::Vector3d q0 = inv.apply(o_w);
    const Eigen::Vector3d qd = inv.rotation * d_w;
    const auto t = intersect_local(p, q0, qd, frame, 1e-6);
    if (t && *t < best) {
      best = *t;
      best_prim = static_cast<int>(i);
    }
  }
  if (best_prim < 0) return std::nullopt;
  if (hit_primitive) *hit_primitive = best_prim;
  return best;  // dir_cam.z == 1, so the ray parameter is the camera z-depth
}

RenderedFrame render(const SceneScript& script, int frame_index) {
  if (frame_index < 0 || frame_index >= script.frames)
    throw std::runtime_error("frame index out of range");
  const CameraIntrinsics& K = script.intrinsics;

  RenderedFrame out;
  out.camera_pose = script.camera.pose(frame_index, script.frames);
  out.frame.timestamp = frame_index / script.fps;
  out.frame.intrinsics = K;
  out.frame.depth = Image<double>(K.width, K.height, 0.0);
  out.frame.color = Image<std::array<uint8_t, 3>>(K.width, K.height, {0, 0, 0});
  out.masks.labels = Image<uint16_t>(K.width, K.height, 0);

  // instance ids: background primitives -> 0, others numbered 1.. in script order
  std::vector<int> instance_id(script.primitives.size(), 0);
  int next_id = 1;
  for (size_t i = 0; i < script.primitives.size(); ++i) {
    if (!script.primitives[i].background) {
      instance_id[i] = next_id++;
      out.masks.classes[instance_id[i]] = script.primitives[i].klass;
    }
  }

#pragma omp parallel for schedule(dynamic, 8)
  for (int r = 0; r < K.height; ++r) {
    for (int c = 0; c < K.width; ++c) {
      int prim = -1;
      const auto t = trace_pixel(script, frame_index, c, r, &prim);
      if (!t) continue;
      double depth = *t;
      if (depth < script.near_clip) continue;
      if (script.noise_sigma > 0)
        depth = std::max(script.near_clip,
                         depth + script.noise_sigma *
                                     gaussian_noise(script.seed, frame_index, r, c));
      out.frame.depth.at(r, c) = depth;
      out.masks.labels.at(r, c) = static_cast<uint16_t>(instance_id[prim]);
      const auto col = instance_color(instance_id[prim]);
      const double shade = std::clamp(1.5 - depth / 4.0, 0.3, 1.0);
      out.frame.color.at(r, c) = {static_cast<uint8_t>(col[0] * shade),
                                  static_cast<uint8_t>(col[1] * shade),
                                  static_cast<uint8_t>(col[2] * shade)};
    }
  }
  return out;
}

double scene_surface_distance(const SceneScript& script, const Eigen::Vector3d& world_point,
                              int frame) {
  double best = std::numeric_limits<double>::max();
  for (const ScenePrimitive& p : script.primitives) {
    const RigidTransform inv = invert(primitive_pose(p, frame));
    const Eigen::Vector3d q = inv.apply(world_point);
    double d = std::numeric_limits<double>::max();
    switch (p.type) {
      case PrimitiveType::Plane:
      case PrimitiveType::Sheet: {
        const double cx = std::clamp(q.x(), -p.half_extent2.x(), p.half_extent2.x());
        const double cy = std::clamp(q.y(), -p.half_extent2.y(), p.half_extent2.y());
        const double h = p.type == PrimitiveType::Sheet ? sheet_height(p, cx, cy, frame) : 0.0;
        d = (q - Eigen::Vector3d(cx, cy, h)).norm();
        break;
      }
      case PrimitiveType::Box: {
        const Eigen::Vector3d a = q.cwiseAbs() - p.half_extent3;
        const double outside = a.cwiseMax(0.0).norm();
        const double inside = std::min(a.maxCoeff(), 0.0);
        d = std::abs(outside + inside);
        break;
      }
      case PrimitiveType::Sphere:
        d = std::abs(q.norm() - p.radius);
        break;
      case PrimitiveType::PulsingSphere:
        d = std::abs(q.norm() - pulsing_radius(p, frame));
        break;
    }
    best = std::min(best, d);
  }
  return best;
}

SceneScript SceneScript::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  SceneScript s;
  s.frames = j.value("frames", 30);
  s.fps = j.value("fps", 30.0);
  s.noise_sigma = j.value("noise_sigma", 0.0);
  s.seed = j.value("seed", 0ull);
  s.near_clip = j.value("near_clip", 0.5);
  if (j.contains("intrinsics")) {
    const json& ji = j["intrinsics"];
    s.intrinsics.fx = ji.at("fx").get<double>();
    s.intrinsics.fy = ji.at("fy").get<double>();
    s.intrinsics.cx = ji.at("cx").get<double>();
    s.intrinsics.cy = ji.at("cy").get<double>();
    s.intrinsics.width = ji.at("width").get<int>();
    s.intrinsics.height = ji.at("height").get<int>();
    s.intrinsics.depth_scale = ji.value("depth_scale", 5000.0);
  }
  if (j.contains("camera")) {
    const json& jc = j["camera"];
    const std::string type = jc.value("type", "fixed");
    if (type == "fixed") s.camera.type = CameraPath::Type::Fixed;
    else if (type == "xyz_shake") s.camera.type = CameraPath::Type::XyzShake;
    else if (type == "orbit") s.camera.type = CameraPath::Type::Orbit;
    else if (type == "line") s.camera.type = CameraPath::Type::Line;
    else throw std::runtime_error("unknown camera path type: " + type);
    if (jc.contains("pose")) s.camera.base = pose_from_json(jc["pose"]);
    if (jc.contains("amplitude")) s.camera.amplitude = vec3_from_json(jc["amplitude"]);
    if (jc.contains("periods")) s.camera.periods = vec3_from_json(jc["periods"]);
    if (jc.contains("target")) s.camera.target = vec3_from_json(jc["target"]);
    s.camera.orbit_radius = jc.value("radius", 1.0);
    s.camera.orbit_revolutions = jc.value("revolutions", 1.0);
    if (jc.contains("line_end")) s.camera.line_end = vec3_from_json(jc["line_end"]);
  }
  for (const json& jp : j.value("primitives", json::array())) {
    ScenePrimitive p;
    const std::string type = jp.at("type").get<std::string>();
    if (type == "plane") p.type = PrimitiveType::Plane;
    else if (type == "box") p.type = PrimitiveType::Box;
    else if (type == "sphere") p.type = PrimitiveType::Sphere;
    else if (type == "sheet") p.type = PrimitiveType::Sheet;
    else if (type == "pulsing_sphere") p.type = PrimitiveType::PulsingSphere;
    else throw std::runtime_error("unknown primitive type: " + type);
    p.klass = jp.value("class", std::string{});
    p.background = jp.value("background", p.klass.empty());
    if (jp.contains("pose")) p.pose = pose_from_json(jp["pose"]);
    if (jp.contains("half_extent")) {
      const auto v = jp["half_extent"].get<std::vector<double>>();
      if (v.size() == 2) p.half_extent2 = {v[0], v[1]};
      else if (v.size() == 3) p.half_extent3 = {v[0], v[1], v[2]};
    }
    p.radius = jp.value("radius", 0.3);
    p.amplitude = jp.value("amplitude", 0.0);
    p.base_amplitude = jp.value("base_amplitude", 0.0);
    p.spatial_freq = jp.value("spatial_freq", 1.0);
    p.temporal_freq = jp.value("temporal_freq", 0.0);
    if (jp.contains("linear_velocity")) p.linear_velocity = vec3_from_json(jp["linear_velocity"]);
    if (jp.contains("angular_velocity"))
      p.angular_velocity = vec3_from_json(jp["angular_velocity"]);
    s.primitives.push_back(std::move(p));
  }
  if (s.frames < 1) throw std::runtime_error("scene script needs frames >= 1");
  return s;
}

SceneScript SceneScript::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene script: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void export_dataset(const SceneScript& script, const std::string& directory) {
  const fs::path root(directory);
  fs::create_directories(root / "depth");
  fs::create_directories(root / "rgb");
  fs::create_directories(root / "masks");

  std::ofstream depth_index(root / "depth.txt");
  std::ofstream rgb_index(root / "rgb.txt");
  std::ofstream gt(root / "groundtruth.txt");
  if (!depth_index || !rgb_index || !gt)
    throw std::runtime_error("cannot write dataset index files in " + directory);
  depth_index << "# depth maps\n# timestamp filename\n";
  rgb_index << "# color images\n# timestamp filename\n";
  gt << "# ground truth trajectory\n# timestamp tx ty tz qx qy qz qw\n";

  Trajectory traj;
  for (int f = 0; f < script.frames; ++f) {
    const RenderedFrame rf = render(script, f);
    const std::string ts = format_timestamp(rf.frame.timestamp);

    Image<uint16_t> depth16(rf.frame.depth.width, rf.frame.depth.height, 0);
    for (size_t i = 0; i < depth16.data.size(); ++i) {
      const double d = rf.frame.depth.data[i] * script.intrinsics.depth_scale;
      depth16.data[i] = static_cast<uint16_t>(std::clamp(d + 0.5, 0.0, 65535.0));
    }
    write_png16((root / "depth" / (ts + ".png")).string(), depth16);
    write_png_rgb((root / "rgb" / (ts + ".png")).string(), rf.frame.color);
    write_png16((root / "masks" / (ts + ".png")).string(), rf.masks.labels);

    json meta;
    meta["instances"] = json::object();
    for (const auto& [id, klass] : rf.masks.classes)
      meta["instances"][std::to_string(id)] = klass;
    std::ofstream mf(root / "masks" / (ts + ".json"));
    mf << meta.dump(2) << "\n";

    depth_index << ts << " depth/" << ts << ".png\n";
    rgb_index << ts << " rgb/" << ts << ".png\n";
    traj.poses.emplace_back(rf.frame.timestamp, rf.camera_pose);
  }
  depth_index.close();
  rgb_index.close();

  // groundtruth.txt shares the trajectory writer so quaternion conventions match
  gt.close();
  {
    Trajectory full = traj;
    std::string tmp = (root / "groundtruth_body.txt").string();
    write_trajectory(full, tmp);
    std::ifstream body(tmp);
    std::ofstream final(root / "groundtruth.txt");
    final << "# ground truth trajectory\n";
    final << body.rdbuf();
    body.close();
    fs::remove(tmp);
  }

  json ji;
  ji["fx"] = script.intrinsics.fx;
  ji["fy"] = script.intrinsics.fy;
  ji["cx"] = script.intrinsics.cx;
  ji["cy"] = script.intrinsics.cy;
  ji["width"] = script.intrinsics.width;
  ji["height"] = script.intrinsics.height;
  ji["depth_scale"] = script.intrinsics.depth_scale;
  std::ofstream intr(root / "intrinsics.json");
  intr << ji.dump(2) << "\n";
}

std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> warp_samples(
    const SceneScript& script, size_t primitive_index, int frame, int grid_n) {
  const ScenePrimitive& p = script.primitives.at(primitive_index);
  const RigidTransform pose0 = primitive_pose(p, 0);
  const RigidTransform posef = primitive_pose(p, frame);
  std::vector<std::pair<Eigen::Vector3d, Eigen::Vector3d>> out;
  for (int i = 0; i < grid_n; ++i) {
    for (int j = 0; j < grid_n; ++j) {
      const double x = (-1.0 + 2.0 * i / (grid_n - 1.0)) * p.half_extent2.x();
      const double y = (-1.0 + 2.0 * j / (grid_n - 1.0)) * p.half_extent2.y();
      Eigen::Vector3d l0{x, y, 0.0}, lf{x, y, 0.0};
      if (p.type == PrimitiveType::Sheet || p.type == PrimitiveType::PulsingSphere) {
        l0 = deform_local_point(p, {x, y, 0.0}, 0);
        lf = deform_local_point(p, {x, y, 0.0}, frame);
      }
      out.emplace_back(pose0.apply(l0), posef.apply(lf));
    }
  }
  return out;
}

}  // namespace splitfusion
