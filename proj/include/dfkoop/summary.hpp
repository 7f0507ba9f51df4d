#pragma once

#include <vector>

#include "dfkoop/mpc.hpp"
#include "dfkoop/systems.hpp"

namespace dfkoop {

/// A maximal run of consecutive rows with the same reference.
struct SegmentSummary {
  int first_step = 0;
  int steps = 0;
  Vec ref;
  double tracking_cost = 0.0;
  /// ||g(x) - ref|| at the segment's last row.
  double terminal_error = 0.0;
  /// Time from the segment start until the error stays within the
  /// tolerance; negative when it never settles.
  double settle_time = -1.0;
};

struct SolveTimeStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double max_ms = 0.0;
};

struct RunSummary {
  std::vector<SegmentSummary> segments;
  SolveTimeStats solve_time;
  double total_cost = 0.0;
};

/// The output map defaults to the identity, which needs n_y == n_x.
RunSummary summarize_run(const RunLog& log, const OutputMap& output = {}, double settle_tol = 0.05);

/// Throws ConfigError unless both logs have the same number of rows and the
/// same reference at every step.
void check_same_schedule(const RunLog& a, const RunLog& b);

}  // namespace dfkoop
