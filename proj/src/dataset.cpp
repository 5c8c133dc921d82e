#include "exciteid/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "exciteid/error.hpp"

namespace exciteid {

std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void validate_dataset(const IdentDataset& ds) {
  const bool torque = ds.has_torque();
  for (std::size_t k = 0; k < ds.samples.size(); ++k) {
    const auto& s = ds.samples[k];
    if (s.q.size() != ds.dof || s.dq.size() != ds.dof || s.ddq.size() != ds.dof) {
      throw DimensionError("dataset sample " + std::to_string(k) + ": state length != dof");
    }
    if (s.tau.has_value() != torque || (torque && s.tau->size() != ds.dof)) {
      throw DimensionError("dataset sample " + std::to_string(k) + ": inconsistent torque column");
    }
    if (k > 0 && !(s.t > ds.samples[k - 1].t)) {
      throw Error("dataset: sample times must be strictly increasing (row " + std::to_string(k) + ")");
    }
  }
  if (ds.warmup > ds.samples.size()) throw Error("dataset: warm-up longer than dataset");
}

void write_dataset_csv(const std::string& path, const IdentDataset& ds) {
  validate_dataset(ds);
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  const int n = ds.dof;
  const bool torque = ds.has_torque();
  out << "t";
  for (const char* prefix : {"q", "dq", "ddq"}) {
    for (int i = 1; i <= n; ++i) out << ',' << prefix << i;
  }
  if (torque) {
    for (int i = 1; i <= n; ++i) out << ",tau" << i;
  }
  out << '\n';
  for (const auto& s : ds.samples) {
    out << format_double(s.t);
    for (const Eigen::VectorXd* v : {&s.q, &s.dq, &s.ddq}) {
      for (int i = 0; i < n; ++i) out << ',' << format_double((*v)(i));
    }
    if (torque) {
      for (int i = 0; i < n; ++i) out << ',' << format_double((*s.tau)(i));
    }
    out << '\n';
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_field(const std::string& s, std::size_t row) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    throw Error("dataset CSV row " + std::to_string(row) + ": invalid number '" + s + "'");
  }
  return v;
}

}  // namespace

IdentDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset '" + path + "': empty file");
  const auto header = split(line);
  if (header.empty() || header[0] != "t") throw Error("dataset '" + path + "': header must start with t");
  const std::size_t cols = header.size() - 1;
  int n = 0;
  bool torque = false;
  if (cols % 4 == 0 && cols > 0 && header.back().rfind("tau", 0) == 0) {
    n = static_cast<int>(cols / 4);
    torque = true;
  } else if (cols % 3 == 0 && cols > 0) {
    n = static_cast<int>(cols / 3);
  } else {
    throw Error("dataset '" + path + "': unexpected column count");
  }
  std::vector<std::string> expected{"t"};
  for (const char* prefix : {"q", "dq", "ddq"}) {
    for (int i = 1; i <= n; ++i) expected.push_back(prefix + std::to_string(i));
  }
  if (torque) {
    for (int i = 1; i <= n; ++i) expected.push_back("tau" + std::to_string(i));
  }
  if (header != expected) throw Error("dataset '" + path + "': unexpected header");

  IdentDataset ds;
  ds.dof = n;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      throw Error("dataset '" + path + "' row " + std::to_string(row) + ": wrong field count");
    }
    StateSample s;
    s.t = parse_field(fields[0], row);
    s.q.resize(n);
    s.dq.resize(n);
    s.ddq.resize(n);
    for (int i = 0; i < n; ++i) {
      s.q(i) = parse_field(fields[1 + static_cast<std::size_t>(i)], row);
      s.dq(i) = parse_field(fields[1 + static_cast<std::size_t>(n + i)], row);
      s.ddq(i) = parse_field(fields[1 + static_cast<std::size_t>(2 * n + i)], row);
    }
    if (torque) {
      Eigen::VectorXd tau(n);
      for (int i = 0; i < n; ++i) tau(i) = parse_field(fields[1 + static_cast<std::size_t>(3 * n + i)], row);
      s.tau = tau;
    }
    ds.samples.push_back(std::move(s));
  }
  validate_dataset(ds);
  return ds;
}

}  // namespace exciteid
