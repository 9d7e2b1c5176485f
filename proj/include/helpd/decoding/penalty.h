#pragma once

#include <span>
#include <vector>

#include "helpd/numerics/tensor.h"

namespace helpd::decoding {

// Attention of the h generated tokens: `vision` [h, l] holds their weights
// on the image positions, `text` [h, h] their weights on each other (upper
// triangle zero).
struct AttentionWindow {
  Tensor vision;
  Tensor text;

  std::size_t generated() const { return text.empty() ? 0 : text.dim(0); }
};

// Window of a full [S, S] attention matrix whose generated tokens occupy
// positions first_generated..S-1 and whose image occupies 0..prefix_len-1.
AttentionWindow extract_window(const Tensor& attention, std::size_t prefix_len,
                               std::size_t first_generated);

// For each column j the product of gamma * w(i, j) over rows i >= j; the
// penalty is the largest of these products. 0 for an empty window.
double overtrust_penalty(const Tensor& text_slice, double gamma);
std::vector<double> overtrust_column_products(const Tensor& text_slice, double gamma);

struct VisionPenalty {
  double psi = 0.0;
  std::vector<double> row_products;  // prod_j gamma * w(i, j), one per row
};
// psi = sum_i prod_j gamma * w(i, j), products taken in the log domain.
// Throws InvalidArgument on a negative entry.
VisionPenalty vision_penalty(const Tensor& vision_slice, double gamma);
// Diagnostic only: prod_i gamma * w(i, j) down each image column.
std::vector<double> vision_column_products(const Tensor& vision_slice, double gamma);

struct PenaltyScores {
  double phi = 0.0;
  double psi = 0.0;
  double beta = 0.0;
  double rho = 0.0;  // phi - beta * psi
};

// Running sums of phi and psi over the steps of one generation.
class BetaState {
 public:
  void reset() { *this = BetaState{}; }
  void add(double phi, double psi);
  // mean(phi) / mean(psi); 0 when mean(psi) < 1e-12 or no steps yet.
  double beta() const;
  double sum_phi() const { return sum_phi_; }
  double sum_psi() const { return sum_psi_; }
  std::size_t steps() const { return steps_; }

 private:
  double sum_phi_ = 0.0;
  double sum_psi_ = 0.0;
  std::size_t steps_ = 0;
};

// Adds (phi, psi) to `state`, then returns phi, psi, beta and rho.
PenaltyScores combined_penalty(double phi, double psi, BetaState& state);

// argmax_v (scores[v] - rho); ties go to the lowest id.
int decode_step(std::span<const Real> scores, double rho);

}  // namespace helpd::decoding
