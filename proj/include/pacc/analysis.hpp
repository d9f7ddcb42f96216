#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pacc/csv.hpp"
#include "pacc/errors.hpp"
#include "pacc/metrics.hpp"
#include "pacc/models.hpp"
#include "pacc/nn/layers.hpp"
#include "pacc/simlog.hpp"

namespace pacc {

/// ln(p / (1 - p)) after clamping p into [kProbEps, 1 - kProbEps].
inline double log_odds(double p) {
  const double q = std::clamp(p, nn::kProbEps, 1.0 - nn::kProbEps);
  return std::log(q) - std::log1p(-q);
}

/// One item's prediction at its logged position versus at position 1.
struct SwapPoint {
  std::int64_t item_id = 0;
  int position = 1;
  Task task = Task::kCtr;
  double prob_original = 0.0;
  double prob_swapped = 0.0;
  double logodds_original = 0.0;
  double logodds_swapped = 0.0;
};

/// Uniform sample of `count` distinct indices out of `n`, in sampled order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
  if (count > n) throw DomainError("sample size " + std::to_string(count) + " exceeds dataset size " + std::to_string(n));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  nn::Rng rng = nn::Rng(seed).substream("sampling");
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(count);
  return idx;
}

/// Counterfactual swap to position 1 for `sample_n` sampled records; emits a
/// CTR point and a CVR point per record.
template <ClickConversionModel M>
std::vector<SwapPoint> swap_study(const M& model, std::span<const LogRecord> records, std::size_t sample_n,
                                  std::uint64_t seed) {
  std::vector<SwapPoint> out;
  out.reserve(2 * sample_n);
  for (std::size_t i : sample_indices(records.size(), sample_n, seed)) {
    const auto& r = records[i];
    const auto [orig, swapped] = counterfactual_forward(model, r.features, r.position, 1);
    for (Task t : {Task::kCtr, Task::kCvr}) {
      SwapPoint p;
      p.item_id = r.item_id;
      p.position = r.position;
      p.task = t;
      p.prob_original = t == Task::kCtr ? orig.p_ctr : orig.p_cvr;
      p.prob_swapped = t == Task::kCtr ? swapped.p_ctr : swapped.p_cvr;
      p.logodds_original = log_odds(p.prob_original);
      p.logodds_swapped = log_odds(p.prob_swapped);
      out.push_back(p);
    }
  }
  return out;
}

inline std::vector<SwapPoint> swap_study(const AnyModel& model, std::span<const LogRecord> records,
                                         std::size_t sample_n, std::uint64_t seed) {
  return std::visit([&](const auto& m) { return swap_study(m, records, sample_n, seed); }, model);
}

/// Mean |logodds_original - logodds_swapped|; 0 for position-invariant predictions.
inline double bias_score(std::span<const SwapPoint> points) {
  if (points.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : points) sum += std::abs(p.logodds_original - p.logodds_swapped);
  return sum / static_cast<double>(points.size());
}

inline double bias_score(std::span<const SwapPoint> points, Task task) {
  std::vector<SwapPoint> sel;
  std::copy_if(points.begin(), points.end(), std::back_inserter(sel), [&](const SwapPoint& p) { return p.task == task; });
  return bias_score(sel);
}

/// Per-position mean of p(f, 1) / p(f, p).
struct SwapImpact {
  int position = 1;
  double ratio_ctr = 1.0;
  double ratio_cvr = 1.0;
  std::optional<double> ratio_seen;  // P(seen|1)/P(seen|p); PACC only
  std::size_t n = 0;
};

/// Per-item ratios behind a SwapImpact row.
struct SwapImpactPoint {
  std::int64_t item_id = 0;
  int position = 1;
  double ratio_ctr = 1.0;
  double ratio_cvr = 1.0;
};

struct SwapImpactCurve {
  std::vector<SwapImpact> rows;  // ascending position; empty positions omitted
  std::vector<SwapImpactPoint> points;
};

template <ClickConversionModel M>
SwapImpactCurve swap_impact_curve(const M& model, std::span<const LogRecord> records) {
  struct Acc {
    double ctr = 0.0, cvr = 0.0;
    std::size_t n = 0;
  };
  std::map<int, Acc> acc;
  SwapImpactCurve curve;
  for (const auto& r : records) {
    const auto [orig, swapped] = counterfactual_forward(model, r.features, r.position, 1);
    SwapImpactPoint pt{r.item_id, r.position, swapped.p_ctr / orig.p_ctr, swapped.p_cvr / orig.p_cvr};
    auto& a = acc[r.position];
    a.ctr += pt.ratio_ctr;
    a.cvr += pt.ratio_cvr;
    ++a.n;
    curve.points.push_back(pt);
  }
  std::optional<PropensityTable> table;
  if constexpr (std::is_same_v<M, PaccModel>) table = model.propensities();
  for (const auto& [pos, a] : acc) {
    SwapImpact row;
    row.position = pos;
    row.n = a.n;
    row.ratio_ctr = a.ctr / static_cast<double>(a.n);
    row.ratio_cvr = a.cvr / static_cast<double>(a.n);
    if (table) row.ratio_seen = table->at(1) / table->at(pos);
    curve.rows.push_back(row);
  }
  return curve;
}

inline SwapImpactCurve swap_impact_curve(const AnyModel& model, std::span<const LogRecord> records) {
  return std::visit([&](const auto& m) { return swap_impact_curve(m, records); }, model);
}

// ---- output ------------------------------------------------------------------------

inline void write_scatter_csv(std::ostream& os, std::span<const SwapPoint> points) {
  os << "item_id,position,task,p_orig,p_swap,lo_orig,lo_swap\n";
  for (const auto& p : points) {
    os << p.item_id << ',' << p.position << ',' << to_string(p.task) << ',' << csv::format(p.prob_original, "%.10g")
       << ',' << csv::format(p.prob_swapped, "%.10g") << ',' << csv::format(p.logodds_original, "%.10g") << ','
       << csv::format(p.logodds_swapped, "%.10g") << '\n';
  }
}

inline void write_impact_csv(std::ostream& os, std::span<const SwapImpact> rows) {
  os << "position,ratio_ctr,ratio_cvr,ratio_seen,n\n";
  for (const auto& r : rows) {
    os << r.position << ',' << csv::format(r.ratio_ctr, "%.10g") << ',' << csv::format(r.ratio_cvr, "%.10g") << ','
       << (r.ratio_seen ? csv::format(*r.ratio_seen, "%.10g") : std::string()) << ',' << r.n << '\n';
  }
}

inline void write_impact_points_csv(std::ostream& os, std::span<const SwapImpactPoint> pts) {
  os << "item_id,position,ratio_ctr,ratio_cvr\n";
  for (const auto& p : pts) {
    os << p.item_id << ',' << p.position << ',' << csv::format(p.ratio_ctr, "%.10g") << ','
       << csv::format(p.ratio_cvr, "%.10g") << '\n';
  }
}

namespace svg {

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double kW = 480, kH = 480, kMargin = 60;
  double px(double x) const { return kMargin + (x - x0) / (x1 - x0) * (kW - 2 * kMargin); }
  double py(double y) const { return kH - kMargin - (y - y0) / (y1 - y0) * (kH - 2 * kMargin); }
};

inline std::string num(double v) { return csv::format(v, "%.2f"); }

inline void open(std::ostream& os, const std::string& title, const std::string& desc) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n"
     << "<title>" << title << "</title>\n<desc>" << desc << "</desc>\n"
     << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n"
     << "<text x=\"240\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" << title
     << "</text>\n";
}

inline void axes(std::ostream& os, const Frame& f, const std::string& xlabel, const std::string& ylabel, int ticks = 5) {
  const double l = Frame::kMargin, b = Frame::kH - Frame::kMargin, r = Frame::kW - Frame::kMargin, t = Frame::kMargin;
  os << "<path d=\"M" << l << ' ' << t << " L" << l << ' ' << b << " L" << r << ' ' << b
     << "\" stroke=\"black\" fill=\"none\"/>\n";
  for (int i = 0; i <= ticks; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / ticks;
    const double yv = f.y0 + (f.y1 - f.y0) * i / ticks;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << b + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << csv::format(xv, "%.3g")
       << "</text>\n";
    os << "<text x=\"" << l - 6 << "\" y=\"" << num(f.py(yv) + 3)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << csv::format(yv, "%.3g")
       << "</text>\n";
  }
  os << "<text x=\"240\" y=\"" << Frame::kH - 16 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
     << xlabel << "</text>\n";
  os << "<text x=\"16\" y=\"240\" transform=\"rotate(-90 16 240)\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\">"
     << ylabel << "</text>\n";
}

}  // namespace svg

/// Log-odds scatter: swapped (position 1) on x, original on y, with a y = x guide.
inline void write_scatter_svg(std::ostream& os, std::span<const SwapPoint> points, const std::string& title) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : points) {
    lo = std::min({lo, p.logodds_original, p.logodds_swapped});
    hi = std::max({hi, p.logodds_original, p.logodds_swapped});
  }
  if (points.empty()) {
    lo = -1;
    hi = 1;
  }
  if (hi - lo < 1e-9) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  const svg::Frame f{lo - pad, hi + pad, lo - pad, hi + pad};
  svg::open(os, title, "log odds clamp eps=" + csv::format(nn::kProbEps, "%.0e"));
  svg::axes(os, f, "log odds at position 1 (swapped)", "log odds at original position");
  os << "<line x1=\"" << svg::num(f.px(f.x0)) << "\" y1=\"" << svg::num(f.py(f.y0)) << "\" x2=\"" << svg::num(f.px(f.x1))
     << "\" y2=\"" << svg::num(f.py(f.y1)) << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& p : points) {
    os << "<circle cx=\"" << svg::num(f.px(p.logodds_swapped)) << "\" cy=\"" << svg::num(f.py(p.logodds_original))
       << "\" r=\"2\" fill=\"" << (p.task == Task::kCtr ? "#c0392b" : "#2c5aa0") << "\" fill-opacity=\"0.6\"/>\n";
  }
  os << "</svg>\n";
}

/// Swap-impact ratios against logged position; raw points plus per-position means.
inline void write_impact_svg(std::ostream& os, const SwapImpactCurve& curve, const std::string& title) {
  double hi = 1.0, lo = 1.0;
  int max_pos = 1;
  for (const auto& p : curve.points) {
    hi = std::max({hi, p.ratio_ctr, p.ratio_cvr});
    lo = std::min({lo, p.ratio_ctr, p.ratio_cvr});
    max_pos = std::max(max_pos, p.position);
  }
  for (const auto& r : curve.rows) {
    if (!r.ratio_seen) continue;
    hi = std::max(hi, *r.ratio_seen);
    lo = std::min(lo, *r.ratio_seen);
  }
  const double pad = 0.05 * std::max(hi - lo, 1e-3);
  const svg::Frame f{0.5, max_pos + 0.5, lo - pad, hi + pad};
  svg::open(os, title, "ratio p(f, position 1) / p(f, logged position)");
  svg::axes(os, f, "logged position", "swap impact ratio");
  for (const auto& p : curve.points) {
    os << "<circle cx=\"" << svg::num(f.px(p.position - 0.12)) << "\" cy=\"" << svg::num(f.py(p.ratio_ctr))
       << "\" r=\"2.5\" fill=\"none\" stroke=\"#c0392b\"/>\n";
    const double x = f.px(p.position + 0.12), y = f.py(p.ratio_cvr);
    os << "<path d=\"M" << svg::num(x - 2.5) << ' ' << svg::num(y - 2.5) << " L" << svg::num(x + 2.5) << ' '
       << svg::num(y + 2.5) << " M" << svg::num(x - 2.5) << ' ' << svg::num(y + 2.5) << " L" << svg::num(x + 2.5) << ' '
       << svg::num(y - 2.5) << "\" stroke=\"#2c5aa0\"/>\n";
  }
  for (const auto& r : curve.rows) {
    if (r.ratio_seen) {
      os << "<circle cx=\"" << svg::num(f.px(r.position)) << "\" cy=\"" << svg::num(f.py(*r.ratio_seen))
         << "\" r=\"4\" fill=\"#27ae60\"/>\n";
    }
  }
  os << "</svg>\n";
}

/// Writes swap_scatter_{ctr,cvr}.{csv,svg}, swap_impact.{csv,svg} and
/// swap_impact_points.csv under `out_dir`.
inline void emit_figures(std::span<const SwapPoint> points, const SwapImpactCurve& curve, const std::string& out_dir,
                         const std::string& model_name = "") {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  auto open_out = [&](const std::string& name) {
    const auto path = (std::filesystem::path(out_dir) / name).string();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    return os;
  };
  const std::string prefix = model_name.empty() ? "" : model_name + ": ";
  for (Task t : {Task::kCtr, Task::kCvr}) {
    std::vector<SwapPoint> sel;
    std::copy_if(points.begin(), points.end(), std::back_inserter(sel), [&](const SwapPoint& p) { return p.task == t; });
    const std::string stem = "swap_scatter_" + to_string(t);
    auto c = open_out(stem + ".csv");
    write_scatter_csv(c, sel);
    auto s = open_out(stem + ".svg");
    write_scatter_svg(s, sel, prefix + (t == Task::kCtr ? "click" : "purchase") + " log odds, original vs swapped");
  }
  auto ic = open_out("swap_impact.csv");
  write_impact_csv(ic, curve.rows);
  auto ip = open_out("swap_impact_points.csv");
  write_impact_points_csv(ip, curve.points);
  auto is = open_out("swap_impact.svg");
  write_impact_svg(is, curve, prefix + "impact of swapping to position 1");
}

}  // namespace pacc
