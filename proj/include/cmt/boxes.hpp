#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmt/rng.hpp"

namespace cmt {

/// Axis-aligned region in pixel coordinates, x2 > x1 and y2 > y1.
struct Box {
  double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  bool valid() const { return x2 > x1 && y2 > y1; }

  friend bool operator==(const Box& a, const Box& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2;
  }
};

/// Candidate pedestrian region with a detector confidence score.
struct Proposal {
  Box box;
  double score = 0.0;
};

/// Intersection over union, in [0, 1]; 0 when disjoint.
double iou(const Box& a, const Box& b);

/// Clamp to [0,W]x[0,H]. The result may be degenerate (zero area) when the
/// box lies fully outside; callers check valid().
Box clamp_box(const Box& b, double width, double height);

/// Proposal generator configuration standing in for an external detector run
/// with a permissive threshold: jittered copies of each anchor box plus
/// low-scoring random background boxes.
struct SynthProposalConfig {
  int jitter_per_anchor = 4;
  double jitter_sigma = 0.08;    // relative to anchor size
  int n_random = 4;              // background boxes per image
  double anchor_score_mean = 0.6;
  double anchor_score_decay = 1.5;  // score drop per unit of relative jitter
  double random_score_mean = 0.12;
  double score_noise = 0.05;
  double threshold = -1.0;       // proposals below are dropped
};

/// Jittered proposals around each anchor box (ground truths and
/// pedestrian-like clutter alike; what a permissive generic detector fires
/// on), plus random background boxes. Guarantees at least one proposal with
/// IoU > 0.7 against every anchor: the first copy per anchor is the anchor
/// itself with a small fixed jitter.
std::vector<Proposal> synth_proposals(const std::vector<Box>& anchors, double image_w,
                                      double image_h, Rng& rng, const SynthProposalConfig& cfg);

// One proposal per line "x1 y1 x2 y2 score", 6-decimal fixed point.
void save_proposals(const std::string& path, const std::vector<Proposal>& proposals);
std::vector<Proposal> load_proposals(const std::string& path);

// Ground-truth box files: "x1 y1 x2 y2", one box per line.
void save_boxes(const std::string& path, const std::vector<Box>& boxes);
std::vector<Box> load_boxes(const std::string& path);

}  // namespace cmt
