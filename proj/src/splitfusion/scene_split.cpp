#include "splitfusion/scene_split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "splitfusion/kdtree.hpp"
#include "splitfusion/maxflow.hpp"

using json = nlohmann::json;

namespace splitfusion {

namespace {

const char* kCocoClasses[] = {
    "person",        "bicycle",      "car",           "motorcycle",    "airplane",
    "bus",           "train",        "truck",         "boat",          "traffic light",
    "fire hydrant",  "stop sign",    "parking meter", "bench",         "bird",
    "cat",           "dog",          "horse",         "sheep",         "cow",
    "elephant",      "bear",         "zebra",         "giraffe",       "backpack",
    "umbrella",      "handbag",      "tie",           "suitcase",      "frisbee",
    "skis",          "snowboard",    "sports ball",   "kite",          "baseball bat",
    "baseball glove","skateboard",   "surfboard",     "tennis racket", "bottle",
    "wine glass",    "cup",          "fork",          "knife",         "spoon",
    "bowl",          "banana",       "apple",         "sandwich",      "orange",
    "broccoli",      "carrot",       "hot dog",       "pizza",         "donut",
    "cake",          "chair",        "couch",         "potted plant",  "bed",
    "dining table",  "toilet",       "tv",            "laptop",        "mouse",
    "remote",        "keyboard",     "cell phone",    "microwave",     "oven",
    "toaster",       "sink",         "refrigerator",  "book",          "clock",
    "vase",          "scissors",     "teddy bear",    "hair drier",    "toothbrush"};

const std::set<std::string> kNonRigidClasses = {"person", "bird",  "cat",      "dog",
                                                "horse",  "sheep", "cow",      "elephant",
                                                "bear",   "zebra", "giraffe"};

}  // namespace

ClassTable ClassTable::coco_default() {
  ClassTable t;
  for (const char* name : kCocoClasses)
    t.set(name, kNonRigidClasses.count(name) ? Rigidity::NonRigid : Rigidity::Rigid);
  t.set("background", Rigidity::Rigid);
  return t;
}

Rigidity ClassTable::classify(const std::string& name) const {
  const auto it = table_.find(name);
  if (it == table_.end())
    throw std::runtime_error("unknown semantic class '" + name +
                             "': extend the class table to cover it");
  return it->second;
}

void ClassTable::merge_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open class table: " + path);
  const json j = json::parse(in);
  for (const auto& [name, val] : j.items()) {
    const std::string v = val.get<std::string>();
    if (v == "rigid") set(name, Rigidity::Rigid);
    else if (v == "nonrigid") set(name, Rigidity::NonRigid);
    else throw std::runtime_error("class table value for '" + name + "' must be rigid|nonrigid");
  }
}

RefineResult refine_segment_graphcut(const DepthFrame& frame, const PixelMask& prior,
                                     const SplitParams& params) {
  const size_t prior_count = prior.count();
  if (prior_count == 0) throw std::invalid_argument("graph-cut refinement needs a nonempty prior");

  size_t prior_valid = 0;
  for (int r = 0; r < frame.depth.height; ++r)
    for (int c = 0; c < frame.depth.width; ++c)
      if (prior.test(r, c) && frame.valid_at(r, c)) ++prior_valid;
  if (prior_valid < params.min_valid_fraction * prior_count)
    throw std::invalid_argument("graph-cut refinement needs valid depth under the prior");

  // subsampled frame cloud
  const Image<Eigen::Vector3d> vmap = compute_vertex_map(frame);
  const int stride = std::max(1, params.subsample);
  std::vector<Eigen::Vector3d> pts;
  std::vector<std::pair<int, int>> px;
  std::vector<char> is_seed;
  for (int r = 0; r < frame.depth.height; r += stride) {
    for (int c = 0; c < frame.depth.width; c += stride) {
      if (vmap.at(r, c).z() <= 0.0) continue;
      pts.push_back(vmap.at(r, c));
      px.push_back({r, c});
      is_seed.push_back(prior.test(r, c) ? 1 : 0);
    }
  }
  const int n = static_cast<int>(pts.size());
  RefineResult fallback{prior, true};
  if (n == 0 || std::count(is_seed.begin(), is_seed.end(), 1) == 0) return fallback;

  KdTree3 tree(pts);
  const int k = std::min(params.knn + 1, n);

  // sigma = 2x median k-NN distance
  std::vector<std::vector<int>> neighbors(n);
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n) * params.knn);
  for (int i = 0; i < n; ++i) {
    for (int j : tree.knn(pts[i], k)) {
      if (j == i) continue;
      neighbors[i].push_back(j);
      dists.push_back((pts[i] - pts[j]).norm());
    }
  }
  if (dists.empty()) return fallback;
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double sigma = 2.0 * std::max(dists[dists.size() / 2], 1e-6);
  const double inv_sigma2 = 1.0 / (sigma * sigma);

  // seed distances decide the sink ties
  std::vector<Eigen::Vector3d> seed_pts;
  for (int i = 0; i < n; ++i)
    if (is_seed[i]) seed_pts.push_back(pts[i]);
  KdTree3 seed_tree(seed_pts);

  const int source = n, sink = n + 1;
  MaxFlow flow(n + 2);
  constexpr double kInf = 1e6;
  bool any_sink = false;
  for (int i = 0; i < n; ++i) {
    if (is_seed[i]) {
      flow.add_edge(source, i, kInf);
    } else if (seed_tree.nearest_distance(pts[i]) > params.r_bg) {
      flow.add_edge(i, sink, kInf);
      any_sink = true;
    }
    for (int j : neighbors[i]) {
      if (j <= i) continue;  // undirected: add once, capacity both ways
      const double w = std::exp(-(pts[i] - pts[j]).squaredNorm() * inv_sigma2);
      flow.add_edge(i, j, w, w);
    }
  }
  if (!any_sink) return fallback;  // everything within r_bg of the prior: degenerate cut
  flow.solve(source, sink);

  std::vector<char> fg(n);
  int fg_count = 0;
  for (int i = 0; i < n; ++i) {
    fg[i] = flow.source_side(i) ? 1 : 0;
    fg_count += fg[i];
  }
  if (fg_count == 0 || fg_count == n) return fallback;

  // upsample: each valid pixel takes the label of the nearest valid lattice
  // point of its stride cell
  std::vector<int> lattice_index(static_cast<size_t>(frame.depth.width) * frame.depth.height, -1);
  for (int i = 0; i < n; ++i)
    lattice_index[static_cast<size_t>(px[i].first) * frame.depth.width + px[i].second] = i;
  auto lattice_at = [&](int r, int c) -> int {
    if (r < 0 || c < 0 || r >= frame.depth.height || c >= frame.depth.width) return -1;
    return lattice_index[static_cast<size_t>(r) * frame.depth.width + c];
  };

  PixelMask refined(frame.depth.width, frame.depth.height);
  for (int r = 0; r < frame.depth.height; ++r) {
    for (int c = 0; c < frame.depth.width; ++c) {
      if (vmap.at(r, c).z() <= 0.0) continue;
      const int r0 = r - r % stride, c0 = c - c % stride;
      int best = -1;
      double best_d = std::numeric_limits<double>::max();
      for (const auto [rr, cc] : {std::pair{r0, c0}, {r0, c0 + stride}, {r0 + stride, c0},
                                  {r0 + stride, c0 + stride}}) {
        const int idx = lattice_at(rr, cc);
        if (idx < 0) continue;
        const double d = (pts[idx] - vmap.at(r, c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = idx;
        }
      }
      if (best >= 0 && fg[best]) refined.set(r, c);
    }
  }

  if (mask_iou(refined, prior) < params.min_iou) return fallback;
  return {refined, false};
}

std::vector<SurfaceSegment> split_frame(const DepthFrame& frame, const InstanceMaskFrame& masks,
                                        const ClassTable& table, const SplitParams& params) {
  if (!masks.labels.empty() &&
      (masks.labels.width != frame.depth.width || masks.labels.height != frame.depth.height))
    throw std::runtime_error("instance mask dimensions do not match the frame");

  PixelMask valid(frame.depth.width, frame.depth.height);
  for (int r = 0; r < frame.depth.height; ++r)
    for (int c = 0; c < frame.depth.width; ++c)
      if (frame.valid_at(r, c)) valid.set(r, c);

  std::vector<int> ids;
  if (!masks.labels.empty()) {
    std::set<int> seen;
    for (uint16_t v : masks.labels.data)
      if (v != 0) seen.insert(v);
    ids.assign(seen.begin(), seen.end());
  }

  std::vector<SurfaceSegment> segments;
  PixelMask claimed(frame.depth.width, frame.depth.height);
  for (int id : ids) {
    PixelMask prior(frame.depth.width, frame.depth.height);
    size_t prior_count = 0, prior_valid = 0;
    for (int r = 0; r < frame.depth.height; ++r) {
      for (int c = 0; c < frame.depth.width; ++c) {
        if (masks.labels.at(r, c) != id) continue;
        prior.set(r, c);
        ++prior_count;
        if (valid.test(r, c)) ++prior_valid;
      }
    }
    if (prior_valid == 0) continue;  // empty instances dropped

    SurfaceSegment seg;
    seg.instance_id = id;
    seg.class_name = masks.classes.at(id);
    seg.rigidity = table.classify(seg.class_name);

    PixelMask refined = prior;
    seg.refine_fallback = true;
    if (prior_valid >= params.min_valid_fraction * prior_count) {
      const RefineResult res = refine_segment_graphcut(frame, prior, params);
      refined = res.mask;
      seg.refine_fallback = res.fallback;
    }

    // earlier instances win overlaps so the segments stay disjoint
    seg.pixels = PixelMask(frame.depth.width, frame.depth.height);
    for (int r = 0; r < frame.depth.height; ++r) {
      for (int c = 0; c < frame.depth.width; ++c) {
        if (!refined.test(r, c) || !valid.test(r, c) || claimed.test(r, c)) continue;
        seg.pixels.set(r, c);
        claimed.set(r, c);
      }
    }
    if (seg.pixels.count() == 0) continue;
    seg.cloud = backproject(frame, &seg.pixels);
    segments.push_back(std::move(seg));
  }

  // background: all remaining valid pixels
  SurfaceSegment bg;
  bg.instance_id = 0;
  bg.class_name = "background";
  bg.rigidity = Rigidity::Rigid;
  bg.pixels = PixelMask(frame.depth.width, frame.depth.height);
  for (int r = 0; r < frame.depth.height; ++r)
    for (int c = 0; c < frame.depth.width; ++c)
      if (valid.test(r, c) && !claimed.test(r, c)) bg.pixels.set(r, c);
  if (bg.pixels.count() > 0) {
    bg.cloud = backproject(frame, &bg.pixels);
    segments.push_back(std::move(bg));
  }
  return segments;
}

}  // namespace splitfusion
