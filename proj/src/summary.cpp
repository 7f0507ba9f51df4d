#include "dfkoop/summary.hpp"

#include <algorithm>

#include "dfkoop/error.hpp"

namespace dfkoop {

RunSummary summarize_run(const RunLog& log, const OutputMap& output, double settle_tol) {
  RunSummary out;
  const auto g = [&output](const Vec& x) { return output ? output(x) : x; };
  const auto& rows = log.rows;
  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t end = i;
    while (end < rows.size() && rows[end].y_ref == rows[i].y_ref) {
      ++end;
    }
    SegmentSummary s;
    s.first_step = rows[i].step;
    s.steps = static_cast<int>(end - i);
    s.ref = rows[i].y_ref;
    int settled_from = -1;
    for (std::size_t r = i; r < end; ++r) {
      s.tracking_cost += rows[r].stage_cost;
      const Vec y = g(rows[r].x);
      if (y.size() != s.ref.size()) {
        throw ConfigError("summarize_run: output and reference differ in size");
      }
      const double e = (y - s.ref).norm();
      if (e <= settle_tol) {
        if (settled_from < 0) {
          settled_from = static_cast<int>(r);
        }
      } else {
        settled_from = -1;
      }
      s.terminal_error = e;
    }
    if (settled_from >= 0) {
      s.settle_time = rows[settled_from].t - rows[i].t;
    }
    out.total_cost += s.tracking_cost;
    out.segments.push_back(std::move(s));
    i = end;
  }
  if (!rows.empty()) {
    std::vector<double> ms;
    ms.reserve(rows.size());
    for (const auto& r : rows) {
      ms.push_back(r.solve_ms);
    }
    std::sort(ms.begin(), ms.end());
    double sum = 0.0;
    for (double v : ms) {
      sum += v;
    }
    out.solve_time.mean_ms = sum / static_cast<double>(ms.size());
    const std::size_t n = ms.size();
    out.solve_time.median_ms = n % 2 == 1 ? ms[n / 2] : 0.5 * (ms[n / 2 - 1] + ms[n / 2]);
    out.solve_time.max_ms = ms.back();
  }
  return out;
}

void check_same_schedule(const RunLog& a, const RunLog& b) {
  if (a.rows.size() != b.rows.size()) {
    throw ConfigError("runs have different lengths (" + std::to_string(a.rows.size()) + " and " +
                      std::to_string(b.rows.size()) + " steps)");
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (a.rows[i].y_ref != b.rows[i].y_ref) {
      throw ConfigError("runs follow different schedules from step " + std::to_string(a.rows[i].step));
    }
  }
}

}  // namespace dfkoop
