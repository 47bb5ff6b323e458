#pragma once

#include <optional>
#include <string>

#include "rfuse/geomedian.hpp"
#include "rfuse/inference.hpp"
#include "rfuse/pivw.hpp"

namespace rfuse {

struct FuseOptions {
  PenaltyConfig penalty;
  PivwSolverConfig solver;
  GeoMedianConfig geomedian;
  double level = 0.95;
};

struct FuseReport {
  GeoMedianResult initial;
  PenalizedFit fit;
  std::optional<InferenceReport> inference;
  std::string inference_note;  // why inference was skipped, if it was

  bool converged() const {
    return initial.diagnostics.status == SolveStatus::Converged && fit.estimate.converged();
  }
};

/// Geometric median, then the penalized fit started from it, then Wald
/// inference over the selected sources when their covariances are known.
FuseReport run_fuse(const FusionProblem& problem, const FuseOptions& options = {});

std::string format_fuse_text(const FusionProblem& problem, const FuseReport& report);
std::string format_fuse_json(const FusionProblem& problem, const FuseReport& report);

}  // namespace rfuse
