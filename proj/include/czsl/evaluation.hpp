#pragma once

#include <optional>
#include <string>
#include <vector>

#include "czsl/data.hpp"
#include "czsl/model.hpp"
#include "czsl/tensor.hpp"

namespace czsl {

struct CurvePoint {
  double bias = 0.0;
  double seen_acc = 0.0;
  double unseen_acc = 0.0;
};

struct EvalSummary {
  double S = 0.0;
  double U = 0.0;
  double HM = 0.0;
  double AUC = 0.0;
};

struct EvalReport {
  CzslSetting setting = CzslSetting::generalized;
  Phase phase = Phase::test;
  double S = 0.0, U = 0.0, HM = 0.0, AUC = 0.0;
  std::optional<double> threshold;
  std::vector<CurvePoint> curve;
  std::string config_echo;  // provenance lines appended to the report text
};

// Pair-feasibility from soft-embedding similarities. Seen pairs score +inf;
// an unseen pair averages the best object-side and attribute-side cosine to a
// seen partner, each half contributing 0 when the primitive has no partner.
struct FeasibilityScores {
  idx_t num_objs = 0;
  std::vector<double> score;  // attr-major grid, |A| x |O|
  idx_t unpartnered_halves = 0;

  double at(const Pair& p) const {
    return score[static_cast<std::size_t>(p.attr * num_objs + p.obj)];
  }
};

FeasibilityScores feasibility_scores(const CompositionSpace& space,
                                     const Tensor& soft_embedding);

// Entry (i, j) = cos(image_i, text_j) / tau; masked-out pairs get -inf.
Tensor score_matrix(const ModelSnapshot& snap,
                    const std::vector<std::string>& image_ids,
                    const std::vector<Pair>& target_pairs,
                    const std::vector<bool>* keep = nullptr);

// Calibration sweep. Candidate biases are -inf plus, per image, the gap
// between its best seen-pair score and each unmasked unseen pair's score. At
// each bias the per-image argmax is taken over seen scores and shifted unseen
// scores; an exact tie goes to the unseen side (the candidate set is built
// from catch-up points, so ties mark the moment an unseen pair overtakes),
// then to the lowest pair index. Accuracies are split by whether an image's
// true pair is seen.
std::vector<CurvePoint> bias_sweep(const Tensor& scores,
                                   const std::vector<idx_t>& truth,
                                   const std::vector<bool>& seen_pair_flags);

// S/U/HM are maxima over the raw curve; AUC is the trapezoidal area under the
// monotone upper frontier of (seen_acc, unseen_acc) points.
EvalSummary summarize(const std::vector<CurvePoint>& curve);

// Full protocol: target set -> feasibility mask (open world) -> score matrix
// -> sweep -> summary. `threshold` is required exactly in the open world.
EvalReport evaluate(const ModelSnapshot& snap, CzslSetting setting, Phase phase,
                    std::optional<double> threshold = std::nullopt);

// Stable text form: setting, S, U, HM, AUC, threshold, curve lines, then any
// config provenance lines.
std::string report_to_text(const EvalReport& report);

}  // namespace czsl
