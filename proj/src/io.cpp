#include "dfkoop/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dfkoop/error.hpp"

namespace dfkoop {

using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) {
    return "nan";
  }
  if (std::isinf(x)) {
    return x > 0 ? "inf" : "-inf";
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  if (s == "nan") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (s == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (s == "-inf") {
    return -std::numeric_limits<double>::infinity();
  }
  double x = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("not a number: '" + std::string(s) + "'");
  }
  return x;
}

namespace {

int parse_int(std::string_view s) {
  int x = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw IoError("not an integer: '" + std::string(s) + "'");
  }
  return x;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec json_vec(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(values.data(), static_cast<Index>(values.size()));
}

json mat_json(const Mat& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      flat.push_back(m(i, j));
    }
  }
  return flat;
}

Mat json_mat(const json& j, Index rows, Index cols) {
  const auto flat = j.get<std::vector<double>>();
  if (static_cast<Index>(flat.size()) != rows * cols) {
    throw IoError("matrix has " + std::to_string(flat.size()) + " entries, expected " +
                  std::to_string(rows * cols));
  }
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = flat[static_cast<std::size_t>(i * cols + j)];
    }
  }
  return m;
}

json parse_json_file(const std::filesystem::path& file) {
  const std::string text = read_text(file);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

}  // namespace

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + file.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + file.string());
  }
  out << text;
  if (!out) {
    throw IoError("write failed for " + file.string());
  }
}

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) {
    throw Error("csv row has " + std::to_string(row.size()) + " cells for " + std::to_string(header_.size()) +
                " columns");
  }
  rows_.push_back(std::move(row));
}

void CsvTable::write(const std::filesystem::path& file) const {
  std::string text;
  const auto put = [&text](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) {
        text += ',';
      }
      text += cells[i];
    }
    text += '\n';
  };
  put(header_);
  for (const auto& r : rows_) {
    put(r);
  }
  write_text(file, text);
}

CsvTable CsvTable::read(const std::filesystem::path& file) {
  std::istringstream in(read_text(file));
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(file.string() + ": empty csv");
  }
  CsvTable t(split_line(line));
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    auto cells = split_line(line);
    if (cells.size() != t.header_.size()) {
      throw IoError(file.string() + ": row with " + std::to_string(cells.size()) + " cells");
    }
    t.rows_.push_back(std::move(cells));
  }
  return t;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i) {
    if (header_[i] == name) {
      return i;
    }
  }
  throw IoError("csv has no column '" + name + "'");
}

namespace {

std::vector<std::string> numbered(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) {
    out.push_back(prefix + std::to_string(i));
  }
  return out;
}

void append(std::vector<std::string>& row, const Vec& v) {
  for (Index i = 0; i < v.size(); ++i) {
    row.push_back(format_double(v(i)));
  }
}

json pairs_json(const std::vector<IdPair>& pairs) {
  json out = json::array();
  for (const auto& [a, b] : pairs) {
    out.push_back({a, b});
  }
  return out;
}

std::vector<IdPair> json_pairs(const json& j) {
  std::vector<IdPair> out;
  for (const auto& p : j) {
    out.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  json meta;
  meta["system"] = ds.system;
  meta["n_x"] = ds.n_x;
  meta["n_u"] = ds.n_u;
  meta["n_y"] = ds.n_y;
  meta["ts"] = ds.ts;
  meta["horizon"] = ds.horizon;
  meta["seed"] = ds.seed;
  meta["channels"] = json::array();
  for (const auto& ch : ds.channels) {
    meta["channels"].push_back(ch.levels());
  }
  meta["successors"] = pairs_json(ds.successors);
  meta["sep_pairs"] = pairs_json(ds.sep_pairs);
  meta["trajectories"] = ds.trajectories.size();
  write_text(dir / "meta.json", meta.dump(1) + "\n");

  std::vector<std::string> header{"traj_id", "step"};
  for (const auto& names : {numbered("x", ds.n_x), numbered("sel", ds.n_u), numbered("y", ds.n_y)}) {
    header.insert(header.end(), names.begin(), names.end());
  }
  CsvTable table(header);
  for (const auto& t : ds.trajectories) {
    for (std::size_t s = 0; s < t.states.size(); ++s) {
      std::vector<std::string> row{std::to_string(t.id), std::to_string(s)};
      append(row, t.states[s]);
      for (int k = 0; k < ds.n_u; ++k) {
        row.push_back(s < t.selectors.size() ? std::to_string(t.selectors[s].idx[k]) : std::string("-1"));
      }
      append(row, t.outputs[s]);
      table.add(std::move(row));
    }
  }
  table.write(dir / "trajectories.csv");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const json meta = parse_json_file(dir / "meta.json");
  Dataset ds;
  try {
    ds.system = meta.at("system").get<std::string>();
    ds.n_x = meta.at("n_x").get<int>();
    ds.n_u = meta.at("n_u").get<int>();
    ds.n_y = meta.at("n_y").get<int>();
    ds.ts = meta.at("ts").get<double>();
    ds.horizon = meta.at("horizon").get<int>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    for (const auto& ch : meta.at("channels")) {
      ds.channels.emplace_back(ch.get<std::vector<double>>());
    }
    ds.successors = json_pairs(meta.at("successors"));
    ds.sep_pairs = json_pairs(meta.at("sep_pairs"));
  } catch (const json::exception& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError((dir / "meta.json").string() + ": " + e.what());
  }
  const CsvTable table = CsvTable::read(dir / "trajectories.csv");
  const std::size_t width = 2 + static_cast<std::size_t>(ds.n_x + ds.n_u + ds.n_y);
  if (table.header().size() != width) {
    throw IoError("trajectories.csv does not match the dimensions in meta.json");
  }
  for (const auto& row : table.rows()) {
    const int id = parse_int(row[0]);
    const int step = parse_int(row[1]);
    if (ds.trajectories.empty() || ds.trajectories.back().id != id) {
      if (step != 0) {
        throw IoError("trajectories.csv: trajectory " + std::to_string(id) + " does not start at step 0");
      }
      ds.trajectories.push_back({});
      ds.trajectories.back().id = id;
    }
    auto& t = ds.trajectories.back();
    if (step != static_cast<int>(t.states.size())) {
      throw IoError("trajectories.csv: steps of trajectory " + std::to_string(id) + " are not consecutive");
    }
    std::size_t c = 2;
    Vec x(ds.n_x);
    for (int i = 0; i < ds.n_x; ++i) {
      x(i) = parse_double(row[c++]);
    }
    InputSelector sel;
    for (int k = 0; k < ds.n_u; ++k) {
      sel.idx.push_back(parse_int(row[c++]));
    }
    Vec y(ds.n_y);
    for (int i = 0; i < ds.n_y; ++i) {
      y(i) = parse_double(row[c++]);
    }
    t.states.push_back(x);
    t.outputs.push_back(y);
    if (step < ds.horizon) {
      t.selectors.push_back(sel);
    }
  }
  try {
    ds.validate();
  } catch (const ConfigError& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return ds;
}

void write_predictor(const std::filesystem::path& file, const KoopmanPredictor& p) {
  json j;
  j["n_x"] = p.n_x();
  j["n_z"] = p.n_z();
  j["n_u"] = p.n_u();
  j["n_y"] = p.n_y();
  j["ts"] = p.ts;
  j["A"] = mat_json(p.a);
  j["B"] = mat_json(p.b);
  j["C"] = mat_json(p.c);
  j["u_channels"] = json::array();
  j["v_channels"] = json::array();
  for (std::size_t k = 0; k < p.u_channels.size(); ++k) {
    j["u_channels"].push_back(p.u_channels[k].levels());
    j["v_channels"].push_back(p.v_channels[k].levels);
  }
  j["phi_samples"] = json::array();
  for (const auto& s : p.phi_samples) {
    j["phi_samples"].push_back({{"x", vec_json(s.x)}, {"z", vec_json(s.z)}});
  }
  if (p.structure) {
    j["structure"] = {{"gamma_x", p.structure->gamma_x},
                      {"gamma_u", p.structure->gamma_u},
                      {"block_sizes", p.structure->block_sizes}};
  }
  if (p.dictionary) {
    json centers = json::array();
    for (const auto& c : p.dictionary->centers) {
      centers.push_back(vec_json(c));
    }
    j["dictionary"] = {{"kind", "thin_plate_spline"},
                       {"state_dim", p.dictionary->state_dim},
                       {"centers", centers},
                       {"include_state", p.dictionary->include_state},
                       {"box_lo", vec_json(p.dictionary->box_lo)},
                       {"box_hi", vec_json(p.dictionary->box_hi)}};
  }
  write_text(file, j.dump(1) + "\n");
}

KoopmanPredictor read_predictor(const std::filesystem::path& file) {
  const json j = parse_json_file(file);
  KoopmanPredictor p;
  try {
    const Index nz = j.at("n_z").get<Index>();
    const Index nu = j.at("n_u").get<Index>();
    const Index ny = j.at("n_y").get<Index>();
    p.ts = j.at("ts").get<double>();
    p.a = json_mat(j.at("A"), nz, nz);
    p.b = json_mat(j.at("B"), nz, nu);
    p.c = json_mat(j.at("C"), ny, nz);
    for (const auto& ch : j.at("u_channels")) {
      p.u_channels.emplace_back(ch.get<std::vector<double>>());
    }
    for (const auto& ch : j.at("v_channels")) {
      p.v_channels.push_back({ch.get<std::vector<double>>()});
    }
    for (const auto& s : j.at("phi_samples")) {
      p.phi_samples.push_back({json_vec(s.at("x")), json_vec(s.at("z"))});
    }
    if (j.contains("structure")) {
      const auto& s = j["structure"];
      p.structure = build_structure(s.at("gamma_x").get<std::vector<SignVector>>(),
                                    s.at("gamma_u").get<std::vector<SignVector>>(),
                                    s.at("block_sizes").get<std::vector<int>>());
    }
    if (j.contains("dictionary")) {
      const auto& d = j["dictionary"];
      RbfDictionary dict;
      dict.state_dim = d.at("state_dim").get<int>();
      for (const auto& c : d.at("centers")) {
        dict.centers.push_back(json_vec(c));
      }
      dict.include_state = d.at("include_state").get<bool>();
      dict.box_lo = json_vec(d.at("box_lo"));
      dict.box_hi = json_vec(d.at("box_hi"));
      p.dictionary = std::move(dict);
    }
    p.validate();
  } catch (const json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(file.string() + ": " + e.what());
  }
  return p;
}

void write_loss_history(const std::filesystem::path& file, std::span<const LossBreakdown> history) {
  CsvTable t({"iter", "fit", "endpoint", "theta", "total"});
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& h = history[i];
    t.add({std::to_string(i), format_double(h.fit), format_double(h.endpoint), format_double(h.theta),
           format_double(h.total)});
  }
  t.write(file);
}

void write_psi(const std::filesystem::path& file, const KoopmanPredictor& p) {
  CsvTable t({"channel", "j", "u", "v"});
  for (std::size_t k = 0; k < p.u_channels.size(); ++k) {
    for (int j = 0; j < p.u_channels[k].size(); ++j) {
      t.add({std::to_string(k + 1), std::to_string(j), format_double(p.u_channels[k][j]),
             format_double(p.v_channels[k].levels[j])});
    }
  }
  t.write(file);
}

void write_phi_samples(const std::filesystem::path& file, const KoopmanPredictor& p) {
  std::vector<std::string> header = numbered("x", p.n_x());
  const auto z = numbered("z", p.n_z());
  header.insert(header.end(), z.begin(), z.end());
  CsvTable t(header);
  for (const auto& s : p.phi_samples) {
    std::vector<std::string> row;
    append(row, s.x);
    append(row, s.z);
    t.add(std::move(row));
  }
  t.write(file);
}

void write_run(const std::filesystem::path& file, const RunLog& log) {
  const int nx = log.rows.empty() ? static_cast<int>(log.final_state.size()) : static_cast<int>(log.rows[0].x.size());
  const int ny = log.rows.empty() ? 0 : static_cast<int>(log.rows[0].y_ref.size());
  const int nu = log.rows.empty() ? 0 : static_cast<int>(log.rows[0].u.size());
  std::vector<std::string> header{"step", "t"};
  for (const auto& names : {numbered("x", nx), numbered("y_ref", ny), numbered("u", nu), numbered("v", nu)}) {
    header.insert(header.end(), names.begin(), names.end());
  }
  for (const char* name : {"qp_iters", "qp_status", "stage_cost", "solve_ms", "psi_fallback"}) {
    header.emplace_back(name);
  }
  CsvTable t(header);
  for (const auto& r : log.rows) {
    std::vector<std::string> row{std::to_string(r.step), format_double(r.t)};
    append(row, r.x);
    append(row, r.y_ref);
    append(row, r.u);
    append(row, r.v);
    row.push_back(std::to_string(r.qp_iters));
    row.push_back(to_string(r.qp_status));
    row.push_back(format_double(r.stage_cost));
    row.push_back(format_double(r.solve_ms));
    row.push_back(r.psi_fallback ? "1" : "0");
    t.add(std::move(row));
  }
  t.write(file);
}

RunLog read_run(const std::filesystem::path& file) {
  const CsvTable t = CsvTable::read(file);
  const auto count = [&t](const std::string& prefix) {
    int n = 0;
    while (true) {
      const std::string name = prefix + std::to_string(n + 1);
      if (std::find(t.header().begin(), t.header().end(), name) == t.header().end()) {
        return n;
      }
      ++n;
    }
  };
  const int nx = count("x");
  const int ny = count("y_ref");
  const int nu = count("u");
  const auto read_vec = [&](const std::vector<std::string>& row, const std::string& prefix, int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) {
      v(i) = parse_double(row[t.column(prefix + std::to_string(i + 1))]);
    }
    return v;
  };
  RunLog log;
  for (const auto& row : t.rows()) {
    RunRow r;
    r.step = parse_int(row[t.column("step")]);
    r.t = parse_double(row[t.column("t")]);
    r.x = read_vec(row, "x", nx);
    r.y_ref = read_vec(row, "y_ref", ny);
    r.u = read_vec(row, "u", nu);
    r.v = read_vec(row, "v", nu);
    r.qp_iters = parse_int(row[t.column("qp_iters")]);
    const std::string status = row[t.column("qp_status")];
    if (status == to_string(QpStatus::Solved)) {
      r.qp_status = QpStatus::Solved;
    } else if (status == to_string(QpStatus::MaxIter)) {
      r.qp_status = QpStatus::MaxIter;
    } else if (status == to_string(QpStatus::InfeasibleSuspected)) {
      r.qp_status = QpStatus::InfeasibleSuspected;
    } else {
      throw IoError(file.string() + ": unknown qp_status '" + status + "'");
    }
    r.stage_cost = parse_double(row[t.column("stage_cost")]);
    r.solve_ms = parse_double(row[t.column("solve_ms")]);
    const std::string fallback = row[t.column("psi_fallback")];
    if (fallback != "0" && fallback != "1") {
      throw IoError(file.string() + ": psi_fallback must be 0 or 1");
    }
    r.psi_fallback = fallback == "1";
    log.rows.push_back(std::move(r));
  }
  if (!log.rows.empty()) {
    log.final_state = log.rows.back().x;
  }
  return log;
}

}  // namespace dfkoop
