#include "microgrid/artifacts.h"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "microgrid/errors.h"

namespace microgrid {

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_double(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("expected a number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || (errno == ERANGE && std::isinf(v))) {
    throw std::invalid_argument("'" + text + "' is not a number");
  }
  return v;
}

std::int64_t parse_integer(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("expected an integer");
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end != text.c_str() + text.size() || errno == ERANGE) {
    throw std::invalid_argument("'" + text + "' is not an integer");
  }
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot read " + path);
  std::ostringstream out;
  out << file.rdbuf();
  return out.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path + " for writing");
  file << contents;
  if (!file) throw IoError("write failed for " + path);
}

namespace {

// Line-oriented "key value value ..." records. '#' starts a comment line.
struct Record {
  int line;
  std::string key;
  std::vector<std::string> values;
};

std::vector<Record> ReadRecords(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<Record> records;
  std::string text;
  int line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream tokens(text);
    Record r{line, {}, {}};
    if (!(tokens >> r.key) || r.key[0] == '#') continue;
    for (std::string v; tokens >> v;) r.values.push_back(v);
    records.push_back(std::move(r));
  }
  return records;
}

class RecordCursor {
 public:
  RecordCursor(std::vector<Record> records, std::string path)
      : records_(std::move(records)), path_(std::move(path)) {}

  const Record& Expect(const std::string& key, std::size_t min_values) {
    if (pos_ >= records_.size()) throw ParseError(key, 0, "missing in " + path_);
    const Record& r = records_[pos_++];
    if (r.key != key) {
      throw ParseError(key, r.line, "expected '" + key + "', found '" + r.key + "' in " + path_);
    }
    if (r.values.size() < min_values) {
      throw ParseError(key, r.line, "too few values in " + path_);
    }
    return r;
  }

  double Number(const Record& r, std::size_t i) {
    try {
      return parse_double(r.values.at(i));
    } catch (const std::exception& e) {
      throw ParseError(r.key, r.line, e.what());
    }
  }

  std::int64_t Integer(const Record& r, std::size_t i) {
    try {
      return parse_integer(r.values.at(i));
    } catch (const std::exception& e) {
      throw ParseError(r.key, r.line, e.what());
    }
  }

  void ExpectEnd() {
    if (pos_ < records_.size()) {
      throw ParseError(records_[pos_].key, records_[pos_].line, "unexpected trailing record");
    }
  }

 private:
  std::vector<Record> records_;
  std::string path_;
  std::size_t pos_ = 0;
};

void WriteBox(std::ostream& out, const FuzzyBox& box) {
  for (int a = 0; a < 3; ++a) {
    out << "axis " << a << ' ' << box.axes[a].size() << ' '
        << format_double(box.axes[a].lower()) << ' ' << format_double(box.axes[a].upper());
    for (double p : box.axes[a].peaks()) out << ' ' << format_double(p);
    out << '\n';
  }
}

FuzzyBox ReadBox(RecordCursor& cursor) {
  FuzzyBox box;
  for (int a = 0; a < 3; ++a) {
    const Record& r = cursor.Expect("axis", 2);
    if (cursor.Integer(r, 0) != a) throw ParseError("axis", r.line, "axes out of order");
    const auto count = cursor.Integer(r, 1);
    if (count < 1 || r.values.size() != static_cast<std::size_t>(count) + 4) {
      throw ParseError("axis", r.line, "peak count does not match");
    }
    const double lower = cursor.Number(r, 2);
    const double upper = cursor.Number(r, 3);
    std::vector<double> peaks;
    for (std::int64_t i = 0; i < count; ++i) peaks.push_back(cursor.Number(r, i + 4));
    try {
      box.axes[a] = count == 1 ? AxisPartition(lower, upper, 1)
                               : AxisPartition::FromPeaks(peaks);
    } catch (const std::exception& e) {
      throw ParseError("axis", r.line, e.what());
    }
  }
  return box;
}

}  // namespace

void write_model(const IdentifiedModel& model, const std::string& path) {
  std::ostringstream out;
  out << "# fuzzy rule model: per rule the 3x3 consequent matrix, row-major\n";
  out << "rules " << model.rule_matrices.size() << '\n';
  out << "sup_error " << format_double(model.sup_error) << '\n';
  out << "samples " << model.sample_count << '\n';
  WriteBox(out, model.box);
  for (std::size_t m = 0; m < model.rule_matrices.size(); ++m) {
    out << "A " << m;
    const Eigen::Matrix3d& A = model.rule_matrices[m];
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) out << ' ' << format_double(A(i, j));
    }
    out << '\n';
  }
  write_file(path, out.str());
}

IdentifiedModel read_model(const std::string& path) {
  RecordCursor cursor(ReadRecords(path), path);
  IdentifiedModel model;
  const auto rules = cursor.Integer(cursor.Expect("rules", 1), 0);
  model.sup_error = cursor.Number(cursor.Expect("sup_error", 1), 0);
  model.sample_count = static_cast<int>(cursor.Integer(cursor.Expect("samples", 1), 0));
  model.box = ReadBox(cursor);
  if (rules != model.box.rule_count()) {
    throw ParseError("rules", 1, "rule count does not match the box in " + path);
  }
  for (std::int64_t m = 0; m < rules; ++m) {
    const Record& r = cursor.Expect("A", 10);
    if (cursor.Integer(r, 0) != m) throw ParseError("A", r.line, "rules out of order");
    Eigen::Matrix3d A;
    for (int k = 0; k < 9; ++k) A(k / 3, k % 3) = cursor.Number(r, k + 1);
    model.rule_matrices.push_back(A);
  }
  cursor.ExpectEnd();
  return model;
}

void write_gains(const GainFile& file, const std::string& path) {
  std::ostringstream out;
  out << "# fuzzy pricing gains: lambda = sum_m h_m(x) K_m x\n";
  out << "rules " << file.gains.K.size() << '\n';
  out << "gamma " << format_double(file.gains.gamma) << '\n';
  out << "gamma_sq " << format_double(file.gamma_sq) << '\n';
  out << "epsilon " << format_double(file.epsilon) << '\n';
  out << "margin " << format_double(file.gains.provenance.margin) << '\n';
  out << "tol " << format_double(file.gains.provenance.tol) << '\n';
  out << "newton_steps " << file.gains.provenance.newton_steps << '\n';
  out << "seed " << file.gains.provenance.seed << '\n';
  WriteBox(out, file.box);
  for (int i = 0; i < 3; ++i) {
    out << "Q " << i;
    for (int j = 0; j < 3; ++j) out << ' ' << format_double(file.Q(i, j));
    out << '\n';
  }
  for (std::size_t m = 0; m < file.gains.K.size(); ++m) {
    out << "K " << m;
    for (int j = 0; j < 3; ++j) out << ' ' << format_double(file.gains.K[m](j));
    out << '\n';
  }
  write_file(path, out.str());
}

GainFile read_gains(const std::string& path) {
  RecordCursor cursor(ReadRecords(path), path);
  GainFile file;
  const auto rules = cursor.Integer(cursor.Expect("rules", 1), 0);
  file.gains.gamma = cursor.Number(cursor.Expect("gamma", 1), 0);
  file.gamma_sq = cursor.Number(cursor.Expect("gamma_sq", 1), 0);
  file.epsilon = cursor.Number(cursor.Expect("epsilon", 1), 0);
  file.gains.provenance.margin = cursor.Number(cursor.Expect("margin", 1), 0);
  file.gains.provenance.tol = cursor.Number(cursor.Expect("tol", 1), 0);
  file.gains.provenance.newton_steps =
      static_cast<int>(cursor.Integer(cursor.Expect("newton_steps", 1), 0));
  {
    const Record& r = cursor.Expect("seed", 1);
    try {
      file.gains.provenance.seed = std::stoull(r.values[0]);
    } catch (const std::exception&) {
      throw ParseError("seed", r.line, "not an unsigned integer");
    }
  }
  file.box = ReadBox(cursor);
  if (rules != file.box.rule_count()) {
    throw ParseError("rules", 1, "rule count does not match the box in " + path);
  }
  for (int i = 0; i < 3; ++i) {
    const Record& r = cursor.Expect("Q", 4);
    if (cursor.Integer(r, 0) != i) throw ParseError("Q", r.line, "rows out of order");
    for (int j = 0; j < 3; ++j) file.Q(i, j) = cursor.Number(r, j + 1);
  }
  for (std::int64_t m = 0; m < rules; ++m) {
    const Record& r = cursor.Expect("K", 4);
    if (cursor.Integer(r, 0) != m) throw ParseError("K", r.line, "rules out of order");
    file.gains.K.emplace_back(cursor.Number(r, 1), cursor.Number(r, 2), cursor.Number(r, 3));
  }
  cursor.ExpectEnd();
  return file;
}

void write_verification_report(const VerificationReport& report, double gamma_sq,
                               std::uint64_t seed, const std::string& path) {
  std::ostringstream out;
  out << "feasible " << (report.feasible() ? "yes" : "no") << '\n';
  out << "gamma_sq " << format_double(gamma_sq) << '\n';
  out << "phi_sample_max " << format_double(report.phi_sample_max) << '\n';
  out << "samples " << report.samples_used << '\n';
  out << "seed " << seed << '\n';
  double worst = -std::numeric_limits<double>::infinity();
  for (double v : report.p_form_margins) worst = std::max(worst, v);
  out << "worst_block_margin " << format_double(worst) << '\n';
  for (int i = 0; i < 3; ++i) {
    out << "P " << i;
    for (int j = 0; j < 3; ++j) out << ' ' << format_double(report.p_matrix(i, j));
    out << '\n';
  }
  for (std::size_t m = 0; m < report.p_form_margins.size(); ++m) {
    out << "block " << m << ' ' << format_double(report.p_form_margins[m]) << '\n';
  }
  write_file(path, out.str());
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "t,p_g,p_d,e,lambda,w_dg,w_dd,w_in,z1,z2") {
    throw ParseError("header", 1, "unexpected trajectory header in " + path);
  }
  Trajectory traj;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    std::vector<double> v;
    try {
      while (std::getline(cells, cell, ',')) v.push_back(parse_double(cell));
    } catch (const std::exception& e) {
      throw ParseError("row", number, e.what());
    }
    if (v.size() != 10) throw ParseError("row", number, "expected 10 columns in " + path);
    traj.times.push_back(v[0]);
    traj.states.push_back({v[1], v[2], v[3]});
    traj.prices.push_back(v[4]);
    traj.disturbances.push_back({v[5], v[6], v[7]});
    traj.outputs.emplace_back(v[8], v[9]);
  }
  return traj;
}

void emit_plot_data(const Trajectory& traj, const Metrics& metrics, const std::string& dir) {
  if (traj.empty()) throw ParameterError("cannot emit plot data for an empty trajectory");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  const auto series = [&](const std::string& name, auto&& value) {
    std::ostringstream out;
    out << "t," << name << '\n';
    for (std::size_t i = 0; i < traj.size(); ++i) {
      out << format_double(traj.times[i]) << ',' << format_double(value(i)) << '\n';
    }
    write_file(dir + "/" + name + ".csv", out.str());
  };
  series("p_g", [&](std::size_t i) { return traj.states[i].p_g; });
  series("p_d", [&](std::size_t i) { return traj.states[i].p_d; });
  series("e", [&](std::size_t i) { return traj.states[i].e; });
  series("lambda", [&](std::size_t i) { return traj.prices[i]; });

  std::ostringstream out;
  const auto optional = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("none");
  };
  out << "settling_time " << optional(metrics.settling_time) << '\n';
  out << "rms_imbalance " << format_double(metrics.rms_imbalance) << '\n';
  out << "max_abs_imbalance " << format_double(metrics.max_abs_imbalance) << '\n';
  out << "mean_supply_demand_gap " << format_double(metrics.mean_supply_demand_gap) << '\n';
  out << "empirical_ratio " << optional(metrics.empirical_ratio) << '\n';
  out << "final_p_g " << format_double(traj.states.back().p_g) << '\n';
  out << "final_p_d " << format_double(traj.states.back().p_d) << '\n';
  out << "final_e " << format_double(traj.states.back().e) << '\n';
  out << "final_lambda " << format_double(traj.prices.back()) << '\n';
  write_file(dir + "/summary.txt", out.str());
}

}  // namespace microgrid
