#include "helpd/decoding/penalty.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace helpd::decoding {

namespace {

void require_matrix(const Tensor& t, const char* what) {
  if (!t.empty() && t.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

// log(gamma * w), -inf for w == 0.
double log_scaled(Real w, double gamma, const char* what) {
  if (w < 0 || std::isnan(double(w))) {
    throw InvalidArgument(std::string(what) + ": negative attention weight " +
                          std::to_string(double(w)));
  }
  if (w == 0) return -std::numeric_limits<double>::infinity();
  return std::log(gamma) + std::log(double(w));
}

}  // namespace

AttentionWindow extract_window(const Tensor& attention, std::size_t prefix_len,
                               std::size_t first_generated) {
  require_matrix(attention, "extract_window");
  const std::size_t S = attention.empty() ? 0 : attention.dim(0);
  if (attention.dim(1) != S || prefix_len > first_generated || first_generated > S) {
    throw ShapeError("extract_window: bad window bounds for " + shape_str(attention.shape()));
  }
  AttentionWindow w;
  const std::size_t h = S - first_generated;
  if (h == 0) return w;
  w.vision = Tensor({h, prefix_len});
  w.text = Tensor({h, h});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < prefix_len; ++j) {
      w.vision.at(i, j) = attention.at(first_generated + i, j);
    }
    for (std::size_t j = 0; j <= i; ++j) {
      w.text.at(i, j) = attention.at(first_generated + i, first_generated + j);
    }
  }
  return w;
}

std::vector<double> overtrust_column_products(const Tensor& text, double gamma) {
  require_matrix(text, "overtrust_penalty");
  if (text.empty()) return {};
  const std::size_t h = text.dim(0);
  if (text.dim(1) != h) throw ShapeError("overtrust_penalty: window must be square");
  std::vector<double> cols(h);
  for (std::size_t j = 0; j < h; ++j) {
    double s = 0;
    for (std::size_t i = j; i < h; ++i) s += log_scaled(text.at(i, j), gamma, "overtrust_penalty");
    cols[j] = std::exp(s);
  }
  return cols;
}

double overtrust_penalty(const Tensor& text, double gamma) {
  const auto cols = overtrust_column_products(text, gamma);
  return cols.empty() ? 0.0 : *std::max_element(cols.begin(), cols.end());
}

VisionPenalty vision_penalty(const Tensor& vision, double gamma) {
  require_matrix(vision, "vision_penalty");
  VisionPenalty out;
  if (vision.empty()) return out;
  for (std::size_t i = 0; i < vision.dim(0); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < vision.dim(1); ++j) {
      s += log_scaled(vision.at(i, j), gamma, "vision_penalty");
    }
    out.row_products.push_back(std::exp(s));
    out.psi += out.row_products.back();
  }
  return out;
}

std::vector<double> vision_column_products(const Tensor& vision, double gamma) {
  require_matrix(vision, "vision_penalty");
  if (vision.empty()) return {};
  std::vector<double> cols(vision.dim(1), 0.0);
  for (std::size_t j = 0; j < vision.dim(1); ++j) {
    for (std::size_t i = 0; i < vision.dim(0); ++i) {
      cols[j] += log_scaled(vision.at(i, j), gamma, "vision_penalty");
    }
    cols[j] = std::exp(cols[j]);
  }
  return cols;
}

void BetaState::add(double phi, double psi) {
  sum_phi_ += phi;
  sum_psi_ += psi;
  ++steps_;
}

double BetaState::beta() const {
  if (steps_ == 0) return 0.0;
  const double mean_psi = sum_psi_ / double(steps_);
  if (mean_psi < 1e-12) return 0.0;
  return (sum_phi_ / double(steps_)) / mean_psi;
}

PenaltyScores combined_penalty(double phi, double psi, BetaState& state) {
  state.add(phi, psi);
  PenaltyScores s;
  s.phi = phi;
  s.psi = psi;
  s.beta = state.beta();
  s.rho = phi - s.beta * psi;
  return s;
}

int decode_step(std::span<const Real> scores, double rho) {
  if (scores.empty()) throw InvalidArgument("decode_step: no candidates");
  std::size_t best = 0;
  double best_v = double(scores[0]) - rho;
  for (std::size_t v = 1; v < scores.size(); ++v) {
    const double s = double(scores[v]) - rho;
    if (s > best_v) {
      best_v = s;
      best = v;
    }
  }
  return int(best);
}

}  // namespace helpd::decoding
