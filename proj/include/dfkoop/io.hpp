#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dfkoop/dataset.hpp"
#include "dfkoop/learner.hpp"
#include "dfkoop/mpc.hpp"
#include "dfkoop/predictor.hpp"

namespace dfkoop {

/// Shortest decimal that parses back to the same double.
std::string format_double(double x);
/// Accepts anything format_double produces, including inf and nan.
double parse_double(std::string_view s);

/// meta.json + trajectories.csv
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& dir);

void write_predictor(const std::filesystem::path& file, const KoopmanPredictor& p);
KoopmanPredictor read_predictor(const std::filesystem::path& file);

void write_loss_history(const std::filesystem::path& file, std::span<const LossBreakdown> history);
/// channel, j, u, v
void write_psi(const std::filesystem::path& file, const KoopmanPredictor& p);
/// x..., z...
void write_phi_samples(const std::filesystem::path& file, const KoopmanPredictor& p);
void write_run(const std::filesystem::path& file, const RunLog& log);
RunLog read_run(const std::filesystem::path& file);

/// Comma-separated table with a header row; cells are written as given.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row);
  void write(const std::filesystem::path& file) const;
  [[nodiscard]] const std::vector<std::string>& header() const { return header_; }
  [[nodiscard]] const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  static CsvTable read(const std::filesystem::path& file);
  /// Column index by name; throws IoError if absent.
  [[nodiscard]] std::size_t column(const std::string& name) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string read_text(const std::filesystem::path& file);
void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace dfkoop
