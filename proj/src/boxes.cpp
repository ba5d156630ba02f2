#include "cmt/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cmt/errors.hpp"

namespace cmt {

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid())
    throw std::invalid_argument("iou: invalid box (requires x2 > x1 and y2 > y1)");
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (a.area() + b.area() - inter);
}

Box clamp_box(const Box& b, double width, double height) {
  Box c;
  c.x1 = std::min(std::max(b.x1, 0.0), width);
  c.y1 = std::min(std::max(b.y1, 0.0), height);
  c.x2 = std::min(std::max(b.x2, 0.0), width);
  c.y2 = std::min(std::max(b.y2, 0.0), height);
  return c;
}

std::vector<Proposal> synth_proposals(const std::vector<Box>& anchors, double image_w,
                                      double image_h, Rng& rng, const SynthProposalConfig& cfg) {
  if (image_w <= 0.0 || image_h <= 0.0)
    throw std::invalid_argument("synth_proposals: image size must be positive");
  std::vector<Proposal> out;
  for (const Box& a : anchors) {
    for (int j = 0; j < cfg.jitter_per_anchor; ++j) {
      const double w = a.width(), h = a.height();
      // First copy stays tight (IoU > 0.7 recall guarantee), later ones roam.
      const double sigma = (j == 0) ? 0.02 : cfg.jitter_sigma;
      const double dx = rng.normal(0.0, sigma * w);
      const double dy = rng.normal(0.0, sigma * h);
      const double sw = std::exp(rng.normal(0.0, sigma));
      const double sh = std::exp(rng.normal(0.0, sigma));
      Box b;
      b.x1 = a.cx() + dx - 0.5 * w * sw;
      b.x2 = a.cx() + dx + 0.5 * w * sw;
      b.y1 = a.cy() + dy - 0.5 * h * sh;
      b.y2 = a.cy() + dy + 0.5 * h * sh;
      b = clamp_box(b, image_w, image_h);
      if (!b.valid()) continue;
      const double jitter_mag = std::abs(dx) / w + std::abs(dy) / h + std::abs(std::log(sw)) +
                                std::abs(std::log(sh));
      double score = cfg.anchor_score_mean - cfg.anchor_score_decay * jitter_mag +
                     rng.normal(0.0, cfg.score_noise);
      if (j == 0) score = std::max(score, cfg.anchor_score_mean);  // keep the tight copy
      if (score >= cfg.threshold) out.push_back({b, score});
    }
  }
  for (int j = 0; j < cfg.n_random; ++j) {
    const double w = rng.uniform(0.08, 0.3) * image_w;
    const double h = rng.uniform(0.15, 0.45) * image_h;
    const double x = rng.uniform(0.0, std::max(1e-6, image_w - w));
    const double y = rng.uniform(0.0, std::max(1e-6, image_h - h));
    Box b{x, y, x + w, y + h};
    b = clamp_box(b, image_w, image_h);
    if (!b.valid()) continue;
    const double score = cfg.random_score_mean + rng.normal(0.0, cfg.score_noise);
    if (score >= cfg.threshold) out.push_back({b, score});
  }
  return out;
}

void save_proposals(const std::string& path, const std::vector<Proposal>& proposals) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  char line[160];
  for (const Proposal& p : proposals) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f %.6f\n", p.box.x1, p.box.y1, p.box.x2,
                  p.box.y2, p.score);
    f << line;
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Proposal> load_proposals(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<Proposal> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Proposal p;
    if (!(ss >> p.box.x1 >> p.box.y1 >> p.box.x2 >> p.box.y2 >> p.score))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x1 y1 x2 y2 score'");
    out.push_back(p);
  }
  return out;
}

void save_boxes(const std::string& path, const std::vector<Box>& boxes) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  char line[128];
  for (const Box& b : boxes) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %.6f\n", b.x1, b.y1, b.x2, b.y2);
    f << line;
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<Box> load_boxes(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<Box> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Box b;
    if (!(ss >> b.x1 >> b.y1 >> b.x2 >> b.y2))
      throw IoError(path + ":" + std::to_string(lineno) + ": expected 'x1 y1 x2 y2'");
    out.push_back(b);
  }
  return out;
}

}  // namespace cmt
