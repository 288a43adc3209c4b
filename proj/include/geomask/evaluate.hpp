#pragma once

// Automatic acceptability grading of aligned outputs and the contingency
// statistics used to compare cohorts.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "geomask/geometry.hpp"
#include "geomask/raster.hpp"

namespace geomask {

struct GeometryRules {
  double center_box_frac = 0.10;  // side of the centered acceptance box
  double size_lo = 0.80;
  double size_hi = 1.00;
  double max_angle_deg = 10.0;
};

struct GeoVerdict {
  bool center_ok = false;
  bool size_ok = false;
  bool angle_ok = false;
  bool coverage_ok = false;
  double size_ratio = 0;  // rendered chest size over canvas width

  bool acceptable() const { return center_ok && size_ok && angle_ok && coverage_ok; }
};

struct GeometryTruth {
  SimilarityParams<double> params;
  LandmarkSet<double> landmarks;
};

/// Aligns with `pred` and grades where the true chest lands on the canvas.
GeoVerdict check_geometry(const SimilarityParams<double>& pred, const GeometryTruth& truth, int canvas,
                          const GeometryRules& rules = {});

struct MaskRules {
  double min_recall = 0.95;
  double min_precision = 0.5;
};

struct MaskVerdict {
  double recall = 1;
  double precision = 1;
  bool acceptable = true;
};

MaskVerdict check_mask(const BinaryMask& predicted, const BinaryMask& truth, const MaskRules& rules = {});

/// Threshold segmentation logits at zero.
BinaryMask threshold_logits(const float* logits, int w, int h);

/// Rows: control, experimental. Columns: acceptable, unacceptable.
struct ContingencyTable2x2 {
  std::int64_t a = 0, b = 0, c = 0, d = 0;
};

struct ChiSquare {
  double statistic = 0;
  double p = 1;
};

/// Pearson statistic without continuity correction; p = erfc(sqrt(x / 2)).
ChiSquare chisq_2x2(const ContingencyTable2x2& t);

struct ImageVerdict {
  std::string id;
  std::string cohort;  // "control" or "experimental"
  GeoVerdict geo;
  MaskVerdict mask;
  // Overall flags; equal to the computed conjunctions unless a human grader
  // supplied them directly.
  bool geo_ok = false;
  bool mask_ok = false;
};

ImageVerdict make_verdict(std::string id, std::string cohort, const GeoVerdict& geo, const MaskVerdict& mask);

struct CohortCounts {
  std::int64_t total = 0;
  std::int64_t geo_acceptable = 0;
  std::int64_t mask_acceptable = 0;
};

struct CohortReport {
  CohortCounts control;
  CohortCounts experimental;
  ContingencyTable2x2 geo_table;
  ContingencyTable2x2 mask_table;
  ChiSquare geo_chisq;
  ChiSquare mask_chisq;

  double control_geo_rate() const;
  double experimental_geo_rate() const;
  double control_mask_rate() const;
  double experimental_mask_rate() const;

  std::string summary() const;
};

CohortReport cohort_report(const CohortCounts& control, const CohortCounts& experimental);
CohortReport cohort_report(const std::vector<ImageVerdict>& verdicts);

/// id,cohort,center_ok,size_ok,angle_ok,coverage_ok,geo_ok,recall,precision,mask_ok
void write_verdicts_csv(const std::vector<ImageVerdict>& verdicts, const std::filesystem::path& path);
/// Accepts rows with only id, cohort, geo_ok and mask_ok filled (human grading).
std::vector<ImageVerdict> read_verdicts_csv(const std::filesystem::path& path);

}  // namespace geomask
