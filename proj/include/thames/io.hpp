#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "thames/estimator.hpp"
#include "thames/model.hpp"
#include "thames/relabel.hpp"
#include "thames/sampler.hpp"

namespace thames {

using nlohmann::json;

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline bool parse_double(const std::string& cell, double& out) {
  const char* s = cell.c_str();
  char* end = nullptr;
  out = std::strtod(s, &end);
  if (end == s) return false;
  while (*end == ' ' || *end == '\t' || *end == '\r') ++end;
  return *end == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',' || c == ';') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  for (auto& c : cells) {
    size_t a = c.find_first_not_of(" \t\r");
    size_t b = c.find_last_not_of(" \t\r");
    c = a == std::string::npos ? "" : c.substr(a, b - a + 1);
  }
  return cells;
}

}  // namespace detail

// rectangular numeric CSV with an auto-detected header row; a positive scale
// divides every value (e.g. 100 for the galaxy convention)
inline Eigen::MatrixXd ingest_csv(const std::string& path, double scale = 0.0) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open data file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  size_t width = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    std::vector<double> row(cells.size());
    bool numeric = true;
    size_t bad_col = 0;
    for (size_t c = 0; c < cells.size(); ++c)
      if (!detail::parse_double(cells[c], row[c])) {
        numeric = false;
        bad_col = c;
        break;
      }
    if (!numeric) {
      if (first_content) {  // header row
        first_content = false;
        continue;
      }
      throw data_error("non-numeric cell at row " + std::to_string(lineno) + ", column " +
                       std::to_string(bad_col + 1) + " of " + path);
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw data_error("ragged row " + std::to_string(lineno) + " in " + path + ": got " +
                       std::to_string(row.size()) + " cells, expected " +
                       std::to_string(width));
    }
    first_content = false;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw data_error("no numeric rows in " + path);
  Eigen::MatrixXd m(rows.size(), width);
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < width; ++j) m(i, j) = rows[i][j];
  if (scale > 0.0) m /= scale;
  return m;
}

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// JSON serialization

inline json hyper_to_json(const ModelSpec& spec) {
  const HyperParams& h = spec.hyper;
  json j;
  j["e"] = std::vector<double>(h.e.data(), h.e.data() + h.e.size());
  switch (spec.family) {
    case Family::UniFixedSigma:
      break;
    case Family::UniHierarchical:
      j["x0"] = h.x0;
      j["lambda"] = h.lambda;
      j["sigma_shape"] = h.sigma_shape;
      j["zeta_shape"] = h.zeta_shape;
      break;
    case Family::MvnFull: {
      j["beta"] = std::vector<double>(h.beta.data(), h.beta.data() + h.beta.size());
      j["kappa0"] = h.kappa0;
      j["phi0"] = h.phi0;
      std::vector<std::vector<double>> L(spec.d, std::vector<double>(spec.d));
      for (int a = 0; a < spec.d; ++a)
        for (int b = 0; b < spec.d; ++b) L[a][b] = h.Lambda(a, b);
      j["Lambda"] = L;
      break;
    }
    case Family::MvnDiag:
      j["beta"] = std::vector<double>(h.beta.data(), h.beta.data() + h.beta.size());
      j["kappa0"] = h.kappa0;
      j["phi0"] = h.phi0;
      j["lambda_r"] =
          std::vector<double>(h.lambda_r.data(), h.lambda_r.data() + h.lambda_r.size());
      break;
  }
  return j;
}

inline json spec_to_json(const ModelSpec& spec) {
  json j;
  j["family"] = family_name(spec.family);
  j["G"] = spec.G;
  j["d"] = spec.d;
  j["hyper"] = hyper_to_json(spec);
  return j;
}

inline ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.G = j.at("G").get<int>();
  spec.d = j.at("d").get<int>();
  const json& h = j.at("hyper");
  HyperParams& hp = spec.hyper;
  if (h.contains("e")) {
    auto e = h["e"].get<std::vector<double>>();
    hp.e = Eigen::Map<Eigen::VectorXd>(e.data(), e.size());
  } else {
    hp.e = Eigen::VectorXd::Ones(spec.G);
  }
  hp.x0 = h.value("x0", 0.0);
  hp.lambda = h.value("lambda", 1.0);
  hp.sigma_shape = h.value("sigma_shape", 2.0);
  hp.zeta_shape = h.value("zeta_shape", 0.2);
  hp.kappa0 = h.value("kappa0", 1e-5);
  hp.phi0 = h.value("phi0", 0.0);
  if (h.contains("beta")) {
    auto b = h["beta"].get<std::vector<double>>();
    hp.beta = Eigen::Map<Eigen::VectorXd>(b.data(), b.size());
  }
  if (h.contains("Lambda")) {
    auto L = h["Lambda"].get<std::vector<std::vector<double>>>();
    hp.Lambda.resize(spec.d, spec.d);
    for (int a = 0; a < spec.d; ++a)
      for (int b = 0; b < spec.d; ++b) hp.Lambda(a, b) = L[a][b];
  }
  if (h.contains("lambda_r")) {
    auto l = h["lambda_r"].get<std::vector<double>>();
    hp.lambda_r = Eigen::Map<Eigen::VectorXd>(l.data(), l.size());
  }
  validate_spec(spec);
  return spec;
}

inline json result_to_json(const ThamesResult& r) {
  json j;
  j["G"] = r.G;
  j["log_z"] = r.log_z;
  j["se_log_z"] = r.se_log_z;
  j["alpha"] = r.alpha;
  j["c_final"] = r.c_final;
  j["log_vol_B"] = r.log_vol_B;
  j["vol_B"] = std::exp(r.log_vol_B);
  j["omega_size"] = r.omega_size;
  std::vector<int> iset;
  for (int g : r.I_set) iset.push_back(g + 1);
  j["I_set"] = iset;
  j["CO"] = r.co;
  j["n_points_in_B"] = r.n_points_in_B;
  j["phat0"] = r.phat0;
  if (r.reduced_from > 0) j["reduced_from"] = r.reduced_from;
  j["status"] = r.status;
  j["provenance"] = r.provenance;
  return j;
}

// ---------------------------------------------------------------------------
// posterior-run persistence (JSON lines with a header record)

inline std::uint64_t spec_hash(const ModelSpec& spec) {
  std::string s = spec_to_json(spec).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void save_run(const PosteriorRun& run, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  json header;
  header["spec"] = spec_to_json(run.spec);
  header["spec_hash"] = spec_hash(run.spec);
  header["seed"] = run.seed;
  header["T"] = run.T();
  header["R"] = run.R();
  header["n"] = run.n();
  out << header.dump() << "\n";
  for (int t = 0; t < run.T(); ++t) {
    json line;
    Eigen::VectorXd v = run.draws.row(t).transpose();
    line["v"] = std::vector<double>(v.data(), v.data() + v.size());
    line["lp"] = run.log_post[t];
    std::vector<int> a(run.n());
    for (int i = 0; i < run.n(); ++i) a[i] = run.allocations(t, i) + 1;
    line["a"] = a;
    out << line.dump() << "\n";
  }
}

inline PosteriorRun load_run(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open run file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty run file: " + path);
  json header = json::parse(line);
  PosteriorRun run;
  run.spec = spec_from_json(header.at("spec"));
  run.seed = header.value("seed", 0ULL);
  int T = header.at("T").get<int>();
  int R = header.at("R").get<int>();
  int n = header.at("n").get<int>();
  if (header.contains("spec_hash") &&
      header["spec_hash"].get<std::uint64_t>() != spec_hash(run.spec))
    throw data_error("run file header hash mismatch: " + path);
  run.draws.resize(T, R);
  run.log_post.resize(T);
  run.allocations.resize(T, n);
  for (int t = 0; t < T; ++t) {
    if (!std::getline(in, line)) throw data_error("truncated run file: " + path);
    json rec = json::parse(line);
    auto v = rec.at("v").get<std::vector<double>>();
    if (static_cast<int>(v.size()) != R) throw data_error("draw length mismatch in " + path);
    run.draws.row(t) = Eigen::Map<Eigen::VectorXd>(v.data(), R).transpose();
    run.log_post[t] = rec.at("lp").get<double>();
    auto a = rec.at("a").get<std::vector<int>>();
    if (static_cast<int>(a.size()) != n) throw data_error("allocation length mismatch");
    for (int i = 0; i < n; ++i) run.allocations(t, i) = a[i] - 1;
  }
  return run;
}

// ---------------------------------------------------------------------------
// sweep CSV (stable schema shared by estimates and oracle values)

inline std::string sweep_csv_header() {
  return "G,log_z,se_log_z,CO,I_size,omega_size,alpha,c_final,status,provenance";
}

inline std::string sweep_csv_row(const ThamesResult& r) {
  std::ostringstream os;
  os << r.G << "," << format_double(r.log_z) << "," << format_double(r.se_log_z) << ","
     << r.co << "," << r.I_set.size() << "," << r.omega_size << ","
     << format_double(r.alpha) << "," << format_double(r.c_final) << ",\"" << r.status
     << "\"," << r.provenance;
  return os.str();
}

inline void write_sweep_csv(const std::vector<ThamesResult>& rows, const std::string& path,
                            const std::string& timestamp) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << "# generated=" << timestamp << "\n" << sweep_csv_header() << "\n";
  for (const auto& r : rows) out << sweep_csv_row(r) << "\n";
}

// audit export: draw index plus space-separated 1-based destination labels
inline void write_permutations_csv(const RelabelledRun& rr, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << "t,perm\n";
  for (int t = 0; t < rr.T(); ++t) {
    out << (t + 1) << ",";
    for (size_t g = 0; g < rr.perms[t].size(); ++g)
      out << (g ? " " : "") << (rr.perms[t][g] + 1);
    out << "\n";
  }
}

inline void write_text_file(const std::string& content, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  out << content;
}

}  // namespace thames
