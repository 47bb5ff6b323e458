#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rfuse/core_model.hpp"

namespace rfuse {

enum class SummaryFormat { Csv, Json };

/// ".json" selects JSON; anything else is read as CSV.
SummaryFormat format_from_path(const std::string& path);
SummaryFormat parse_format_name(const std::string& name);

/// CSV: header `source_id,n,theta_1..theta_d[,cov_11,cov_21,cov_22,...]`, the
/// covariance given as its lower triangle in row-major order. A row may leave
/// all covariance fields empty.
/// JSON: array of {"id", "n", "theta", optional "cov_tril"}.
std::vector<SourceSummary> parse_summaries(const std::string& text, SummaryFormat format);

FusionProblem parse_summary_file(const std::string& path, SummaryFormat format,
                                 WeightingScheme weighting = WeightingScheme::identity());
FusionProblem parse_summary_file(const std::string& path,
                                 WeightingScheme weighting = WeightingScheme::identity());

/// Numbers are written with 17 significant digits so parsing the output
/// recovers every value exactly.
std::string write_summaries(std::span<const SourceSummary> sources, SummaryFormat format);
void write_summary_file(const std::string& path, std::span<const SourceSummary> sources,
                        SummaryFormat format);

std::vector<double> cov_to_tril(const Matrix& cov);
Matrix tril_to_cov(std::span<const double> tril, std::size_t d);

}  // namespace rfuse
