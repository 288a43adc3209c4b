#include "geomask/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "geomask/error.hpp"

namespace geomask {

GeoVerdict check_geometry(const SimilarityParams<double>& pred, const GeometryTruth& truth, int canvas,
                          const GeometryRules& rules) {
  validate(pred);
  validate(truth.params);
  const AffineTransform<double> align = alignment_from_params(pred, canvas, canvas);
  const double half = canvas / 2.0;
  GeoVerdict v;

  const Point2d c = align(truth.params.center());
  const double box = rules.center_box_frac * canvas / 2.0;
  v.center_ok = std::abs(c.x() - half) <= box && std::abs(c.y() - half) <= box;

  // Same as similarity_scale(align) * truth size / canvas, with fewer roundings.
  v.size_ratio = kAlignedFraction * (truth.params.size / pred.size);
  v.size_ok = v.size_ratio >= rules.size_lo && v.size_ratio <= rules.size_hi;

  v.angle_ok = std::abs(wrap_degrees(pred.theta - truth.params.theta)) <= rules.max_angle_deg;

  // Pixel centers run 0..canvas-1, so the raster covers [-0.5, canvas - 0.5].
  v.coverage_ok = true;
  for (const Point2d& p : {truth.landmarks.top, truth.landmarks.bottom, truth.landmarks.left, truth.landmarks.right}) {
    const Point2d q = align(p);
    if (q.x() < -0.5 || q.y() < -0.5 || q.x() > canvas - 0.5 || q.y() > canvas - 0.5) v.coverage_ok = false;
  }
  return v;
}

MaskVerdict check_mask(const BinaryMask& predicted, const BinaryMask& truth, const MaskRules& rules) {
  if (predicted.width() != truth.width() || predicted.height() != truth.height())
    throw Error(ErrorKind::ShapeMismatch, "predicted and true masks differ in size");
  const auto p = (predicted.bits() != 0);
  const auto t = (truth.bits() != 0);
  const auto tp = static_cast<double>((p && t).count());
  const auto fn = static_cast<double>((!p && t).count());
  const auto fp = static_cast<double>((p && !t).count());
  MaskVerdict v;
  v.recall = tp + fn > 0 ? tp / (tp + fn) : 1.0;
  v.precision = tp + fp > 0 ? tp / (tp + fp) : 1.0;
  v.acceptable = v.recall >= rules.min_recall && v.precision >= rules.min_precision;
  return v;
}

BinaryMask threshold_logits(const float* logits, int w, int h) {
  BinaryMask m(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.set(x, y, logits[y * w + x] > 0.0f);
  return m;
}

ChiSquare chisq_2x2(const ContingencyTable2x2& t) {
  if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) throw Error(ErrorKind::DegenerateTable, "negative count");
  const double obs[2][2] = {{static_cast<double>(t.a), static_cast<double>(t.b)},
                            {static_cast<double>(t.c), static_cast<double>(t.d)}};
  const double rows[2] = {obs[0][0] + obs[0][1], obs[1][0] + obs[1][1]};
  const double cols[2] = {obs[0][0] + obs[1][0], obs[0][1] + obs[1][1]};
  const double n = rows[0] + rows[1];
  if (rows[0] == 0 || rows[1] == 0 || cols[0] == 0 || cols[1] == 0)
    throw Error(ErrorKind::DegenerateTable, "a marginal total is zero");
  ChiSquare r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double e = rows[i] * cols[j] / n;
      r.statistic += (obs[i][j] - e) * (obs[i][j] - e) / e;
    }
  r.p = std::erfc(std::sqrt(r.statistic / 2.0));
  return r;
}

ImageVerdict make_verdict(std::string id, std::string cohort, const GeoVerdict& geo, const MaskVerdict& mask) {
  ImageVerdict v;
  v.id = std::move(id);
  v.cohort = std::move(cohort);
  v.geo = geo;
  v.mask = mask;
  v.geo_ok = geo.acceptable();
  v.mask_ok = mask.acceptable;
  return v;
}

namespace {
double rate(std::int64_t k, std::int64_t n) { return n > 0 ? static_cast<double>(k) / static_cast<double>(n) : 0.0; }
}  // namespace

double CohortReport::control_geo_rate() const { return rate(control.geo_acceptable, control.total); }
double CohortReport::experimental_geo_rate() const { return rate(experimental.geo_acceptable, experimental.total); }
double CohortReport::control_mask_rate() const { return rate(control.mask_acceptable, control.total); }
double CohortReport::experimental_mask_rate() const {
  return rate(experimental.mask_acceptable, experimental.total);
}

std::string CohortReport::summary() const {
  auto chi = [](const ChiSquare& c, bool ok) {
    char buf[96];
    if (!ok) return std::string("n/a (degenerate table)");
    std::snprintf(buf, sizeof(buf), "chi2=%.4f p=%.3e", c.statistic, c.p);
    return std::string(buf);
  };
  auto table_ok = [](const ContingencyTable2x2& t) {
    return t.a + t.b > 0 && t.c + t.d > 0 && t.a + t.c > 0 && t.b + t.d > 0;
  };
  char buf[512];
  std::ostringstream os;
  os << "# summary\n";
  std::snprintf(buf, sizeof(buf), "control images: %lld\nexperimental images: %lld\n",
                static_cast<long long>(control.total), static_cast<long long>(experimental.total));
  os << buf;
  std::snprintf(buf, sizeof(buf), "geometry acceptable: control %lld (%.1f%%), experimental %lld (%.1f%%), %s\n",
                static_cast<long long>(control.geo_acceptable), 100.0 * control_geo_rate(),
                static_cast<long long>(experimental.geo_acceptable), 100.0 * experimental_geo_rate(),
                chi(geo_chisq, table_ok(geo_table)).c_str());
  os << buf;
  std::snprintf(buf, sizeof(buf), "mask acceptable: control %lld (%.1f%%), experimental %lld (%.1f%%), %s\n",
                static_cast<long long>(control.mask_acceptable), 100.0 * control_mask_rate(),
                static_cast<long long>(experimental.mask_acceptable), 100.0 * experimental_mask_rate(),
                chi(mask_chisq, table_ok(mask_table)).c_str());
  os << buf;
  return os.str();
}

CohortReport cohort_report(const CohortCounts& control, const CohortCounts& experimental) {
  CohortReport r;
  r.control = control;
  r.experimental = experimental;
  r.geo_table = {control.geo_acceptable, control.total - control.geo_acceptable, experimental.geo_acceptable,
                 experimental.total - experimental.geo_acceptable};
  r.mask_table = {control.mask_acceptable, control.total - control.mask_acceptable, experimental.mask_acceptable,
                  experimental.total - experimental.mask_acceptable};
  // Identical or one-sided cohorts carry no evidence against independence.
  try {
    r.geo_chisq = chisq_2x2(r.geo_table);
  } catch (const Error&) {
    r.geo_chisq = {0.0, 1.0};
  }
  try {
    r.mask_chisq = chisq_2x2(r.mask_table);
  } catch (const Error&) {
    r.mask_chisq = {0.0, 1.0};
  }
  return r;
}

CohortReport cohort_report(const std::vector<ImageVerdict>& verdicts) {
  CohortCounts control, experimental;
  for (const auto& v : verdicts) {
    CohortCounts* c = nullptr;
    if (v.cohort == "control") c = &control;
    else if (v.cohort == "experimental") c = &experimental;
    else throw Error(ErrorKind::SchemaViolation, "unknown cohort '" + v.cohort + "' for " + v.id);
    ++c->total;
    c->geo_acceptable += v.geo_ok ? 1 : 0;
    c->mask_acceptable += v.mask_ok ? 1 : 0;
  }
  return cohort_report(control, experimental);
}

void write_verdicts_csv(const std::vector<ImageVerdict>& verdicts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << "id,cohort,center_ok,size_ok,angle_ok,coverage_ok,geo_ok,recall,precision,mask_ok\n";
  char buf[128];
  for (const auto& v : verdicts) {
    std::snprintf(buf, sizeof(buf), ",%d,%d,%d,%d,%d,%.6f,%.6f,%d\n", v.geo.center_ok, v.geo.size_ok, v.geo.angle_ok,
                  v.geo.coverage_ok, v.geo_ok, v.mask.recall, v.mask.precision, v.mask_ok);
    out << v.id << ',' << v.cohort << buf;
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

std::vector<ImageVerdict> read_verdicts_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::SchemaViolation, path.string() + ": empty verdict file");
  const std::vector<std::string> header = split_csv(line);
  auto column = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_id = column("id"), c_cohort = column("cohort"), c_geo = column("geo_ok"), c_mask = column("mask_ok");
  if (c_id < 0 || c_cohort < 0 || c_geo < 0 || c_mask < 0)
    throw Error(ErrorKind::SchemaViolation, path.string() + ": header needs id, cohort, geo_ok, mask_ok");
  auto flag = [&](const std::vector<std::string>& row, int col, int line_no) {
    if (col < 0 || col >= static_cast<int>(row.size()) || row[col].empty()) return false;
    if (row[col] == "1" || row[col] == "true") return true;
    if (row[col] == "0" || row[col] == "false") return false;
    throw Error(ErrorKind::SchemaViolation,
                path.string() + ":" + std::to_string(line_no) + ": field " + header[col] + " is not a boolean");
  };
  auto real = [&](const std::vector<std::string>& row, int col, double fallback, int line_no) {
    if (col < 0 || col >= static_cast<int>(row.size()) || row[col].empty()) return fallback;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(row[col], &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != row[col].size() || !(v >= 0 && v <= 1))
      throw Error(ErrorKind::SchemaViolation,
                  path.string() + ":" + std::to_string(line_no) + ": field " + header[col] + " is not in [0, 1]");
    return v;
  };
  std::vector<ImageVerdict> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto row = split_csv(line);
    if (static_cast<int>(row.size()) <= std::max({c_id, c_cohort, c_geo, c_mask}))
      throw Error(ErrorKind::SchemaViolation, path.string() + ":" + std::to_string(line_no) + ": too few fields");
    ImageVerdict v;
    v.id = row[c_id];
    v.cohort = row[c_cohort];
    if (v.cohort != "control" && v.cohort != "experimental")
      throw Error(ErrorKind::SchemaViolation,
                  path.string() + ":" + std::to_string(line_no) + ": field cohort must be control or experimental");
    v.geo.center_ok = flag(row, column("center_ok"), line_no);
    v.geo.size_ok = flag(row, column("size_ok"), line_no);
    v.geo.angle_ok = flag(row, column("angle_ok"), line_no);
    v.geo.coverage_ok = flag(row, column("coverage_ok"), line_no);
    v.geo_ok = flag(row, c_geo, line_no);
    v.mask.recall = real(row, column("recall"), 1.0, line_no);
    v.mask.precision = real(row, column("precision"), 1.0, line_no);
    v.mask_ok = flag(row, c_mask, line_no);
    v.mask.acceptable = v.mask_ok;
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace geomask
