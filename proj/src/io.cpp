#include "pyramid/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>

namespace pyramid {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, int& v) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end && !s.empty();
}

bool parse_real(const std::string& s, double& v) {
  if (s.empty()) return false;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

std::vector<std::vector<std::string>> split_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    rows.push_back(split_line(line));
  }
  return rows;
}

template <class T, class Parse>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> parse_table(const std::string& text,
                                                             const std::string& what, Parse parse) {
  auto rows = split_rows(text);
  if (!rows.empty()) {
    T probe;
    bool numeric = true;
    for (const auto& c : rows[0]) numeric = numeric && parse(c, probe);
    if (!numeric) rows.erase(rows.begin());
  }
  if (rows.empty()) return {};
  const std::size_t cols = rows[0].size();
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols)
      throw InputError(what + ": row " + std::to_string(r + 1) + " has " +
                       std::to_string(rows[r].size()) + " cells, expected " + std::to_string(cols));
    for (std::size_t c = 0; c < cols; ++c) {
      T v;
      if (!parse(rows[r][c], v))
        throw InputError(what + ": malformed cell '" + rows[r][c] + "' at row " +
                         std::to_string(r + 1) + ", column " + std::to_string(c + 1));
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  return m;
}

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// One retained draw per line.
class RowWriter {
 public:
  explicit RowWriter(std::string header) { out_ << header << '\n'; }
  template <class Seq>
  void row(const Seq& values) {
    bool first = true;
    for (const auto& v : values) {
      if (!first) out_ << ',';
      first = false;
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>)
        out_ << fmt_real(v);
      else
        out_ << v;
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

std::string header_for(const std::string& prefix, std::initializer_list<int> dims) {
  std::vector<int> d(dims);
  std::vector<int> idx(d.size(), 1);
  std::string h;
  long total = 1;
  for (int x : d) total *= x;
  for (long t = 0; t < total; ++t) {
    if (t) h += ',';
    h += prefix;
    for (int v : idx) h += "_" + std::to_string(v);
    for (int a = static_cast<int>(d.size()) - 1; a >= 0; --a) {
      if (++idx[a] <= d[a]) break;
      idx[a] = 1;
    }
  }
  return h;
}

std::vector<double> flat(const Matrix& m) {
  std::vector<double> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

std::vector<int> flat(const IntMatrix& m) {
  std::vector<int> v;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
  return v;
}

template <class M, class Row>
M unflat(const Row& row, Eigen::Index offset, int rows, int cols) {
  M m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = row(offset + static_cast<Eigen::Index>(r) * cols + c);
  return m;
}

Matrix read_block(const fs::path& dir, const std::string& name, int draws, int width) {
  const fs::path p = dir / name;
  Matrix m = parse_real_table(read_file(p), p.string());
  if (width == 0) return Matrix(draws, 0);
  if (m.rows() != draws || m.cols() != width)
    throw InputError(p.string() + ": expected " + std::to_string(draws) + " x " +
                     std::to_string(width) + " values");
  return m;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << contents;
    if (!f) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

IntMatrix parse_int_table(const std::string& text, const std::string& what) {
  return parse_table<int>(text, what, parse_int);
}

Matrix parse_real_table(const std::string& text, const std::string& what) {
  return parse_table<double>(text, what, parse_real);
}

Dataset read_dataset_csv(const fs::path& path, int categories) {
  IntMatrix v = parse_int_table(read_file(path), path.string());
  if (v.size() == 0) throw InputError(path.string() + ": no data rows");
  if (categories > 0) return Dataset::make(std::move(v), std::vector<int>(v.cols(), categories));
  return Dataset::infer(std::move(v));
}

std::string dataset_to_csv(const Dataset& data) {
  std::string s;
  for (int j = 0; j < data.p(); ++j) s += (j ? ",y" : "y") + std::to_string(j + 1);
  s += '\n';
  s += int_matrix_to_csv(data.values);
  return s;
}

std::string int_matrix_to_csv(const IntMatrix& m) {
  std::string s;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += std::to_string(m(r, c));
    }
    s += '\n';
  }
  return s;
}

std::string matrix_to_csv(const Matrix& m) {
  std::string s;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) s += ',';
      s += fmt_real(m(r, c));
    }
    s += '\n';
  }
  return s;
}

GraphicalMatrix read_graph_csv(const fs::path& path) {
  return GraphicalMatrix::make(parse_int_table(read_file(path), path.string()));
}

namespace {

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + " must be an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw InputError(what + " has ragged rows");
    for (std::size_t c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw InputError(what + " has a non-numeric entry");
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

}  // namespace

Json to_json(const TwoLayerParams& t) {
  Json j;
  j["graph"] = matrix_json(t.graph.entries.cast<double>());
  j["cardinalities"] = t.cardinalities;
  j["beta0"] = matrix_json(t.beta0);
  j["beta"] = Json::array();
  for (const auto& b : t.beta) j["beta"].push_back(matrix_json(b));
  j["tau"] = std::vector<double>(t.tau.data(), t.tau.data() + t.tau.size());
  j["eta"] = matrix_json(t.eta);
  return j;
}

TwoLayerParams two_layer_from_json(const Json& j) {
  try {
    TwoLayerParams t;
    t.graph = GraphicalMatrix::make(matrix_from_json(j.at("graph"), "graph").cast<int>());
    t.cardinalities = j.at("cardinalities").get<std::vector<int>>();
    t.beta0 = matrix_from_json(j.at("beta0"), "beta0");
    for (const auto& b : j.at("beta")) t.beta.push_back(matrix_from_json(b, "beta"));
    const auto tau = j.at("tau").get<std::vector<double>>();
    t.tau = Eigen::Map<const Vector>(tau.data(), static_cast<Eigen::Index>(tau.size()));
    t.eta = matrix_from_json(j.at("eta"), "eta");
    validate(t);
    return t;
  } catch (const Json::exception& e) {
    throw InputError(std::string("malformed truth document: ") + e.what());
  }
}

void write_draws(const fs::path& dir, const PosteriorDraws& d) {
  fs::create_directories(dir);
  const int m = d.size();
  const int dm1 = d.d - 1;
  Json meta = {{"n", d.n},         {"p", d.p},           {"d", d.d},
               {"K", d.K},         {"B", d.B},           {"mode", to_string(d.mode)},
               {"iterations", d.iterations}, {"burn_in", d.burn_in}, {"thin", d.thin},
               {"draws", m},       {"local_draws", !d.A.empty()}};

  RowWriter g(header_for("g", {d.p, d.K}));
  RowWriter beta(header_for("beta", {dm1, d.p, d.K}));
  RowWriter beta0(header_for("beta0", {d.p, dm1}));
  RowWriter sigma2(header_for("sigma2", {dm1, d.K}));
  RowWriter gamma("gamma");
  RowWriter tau(header_for("tau", {d.B}));
  RowWriter eta(header_for("eta", {d.K, d.B}));
  RowWriter pi(header_for("pi", {d.K}));
  RowWriter zind(header_for("zind", {d.K}));
  RowWriter a(header_for("a", {d.n, d.K}));
  RowWriter z(header_for("z", {d.n}));
  for (int t = 0; t < m; ++t) {
    g.row(flat(d.G[t]));
    std::vector<double> b;
    for (const auto& slice : d.beta[t]) {
      auto f = flat(slice);
      b.insert(b.end(), f.begin(), f.end());
    }
    beta.row(b);
    beta0.row(flat(d.beta0[t]));
    sigma2.row(flat(d.sigma2[t]));
    gamma.row(std::vector<double>{d.gamma[t]});
    tau.row(flat(Matrix(d.tau[t].transpose())));
    eta.row(flat(d.eta[t]));
    if (!d.csp_pi.empty()) {
      pi.row(flat(Matrix(d.csp_pi[t].transpose())));
      zind.row(d.csp_zind[t]);
    }
    if (!d.A.empty()) {
      a.row(flat(d.A[t]));
      std::vector<int> zz(d.Z[t]);
      for (auto& v : zz) ++v;
      z.row(zz);
    }
  }
  write_file_atomic(dir / "G.csv", g.str());
  write_file_atomic(dir / "beta.csv", beta.str());
  write_file_atomic(dir / "beta0.csv", beta0.str());
  write_file_atomic(dir / "sigma2.csv", sigma2.str());
  write_file_atomic(dir / "gamma.csv", gamma.str());
  write_file_atomic(dir / "tau.csv", tau.str());
  write_file_atomic(dir / "eta.csv", eta.str());
  if (!d.csp_pi.empty()) {
    write_file_atomic(dir / "csp_pi.csv", pi.str());
    write_file_atomic(dir / "csp_zind.csv", zind.str());
  }
  if (!d.A.empty()) {
    write_file_atomic(dir / "A.csv", a.str());
    write_file_atomic(dir / "Z.csv", z.str());
  }
  write_file_atomic(dir / "A_mean.csv", matrix_to_csv(d.A_mean));
  write_file_atomic(dir / "Z_freq.csv", matrix_to_csv(d.Z_freq));
  RowWriter trace("iteration,log_lik,edges,active_columns");
  for (std::size_t t = 0; t < d.log_lik.size(); ++t)
    trace.row(std::vector<std::string>{std::to_string(t + 1), fmt_real(d.log_lik[t]),
                                       std::to_string(d.edge_count[t]),
                                       std::to_string(d.active_columns[t])});
  write_file_atomic(dir / "trace.csv", trace.str());
  write_file_atomic(dir / "draws.json", meta.dump(2) + "\n");
}

PosteriorDraws read_draws(const fs::path& dir) {
  Json meta;
  try {
    meta = Json::parse(read_file(dir / "draws.json"));
  } catch (const Json::exception& e) {
    throw InputError("malformed draws.json: " + std::string(e.what()));
  }
  PosteriorDraws d;
  int m = 0;
  bool local = false;
  try {
    d.n = meta.at("n");
    d.p = meta.at("p");
    d.d = meta.at("d");
    d.K = meta.at("K");
    d.B = meta.at("B");
    d.mode = parse_prior_mode(meta.at("mode").get<std::string>());
    d.iterations = meta.at("iterations");
    d.burn_in = meta.at("burn_in");
    d.thin = meta.at("thin");
    m = meta.at("draws");
    local = meta.at("local_draws");
  } catch (const Json::exception& e) {
    throw InputError("malformed draws.json: " + std::string(e.what()));
  }
  const int dm1 = d.d - 1;
  const Matrix G = read_block(dir, "G.csv", m, d.p * d.K);
  const Matrix beta = read_block(dir, "beta.csv", m, dm1 * d.p * d.K);
  const Matrix beta0 = read_block(dir, "beta0.csv", m, d.p * dm1);
  const Matrix sigma2 = read_block(dir, "sigma2.csv", m, dm1 * d.K);
  const Matrix gamma = read_block(dir, "gamma.csv", m, 1);
  const Matrix tau = read_block(dir, "tau.csv", m, d.B);
  const Matrix eta = read_block(dir, "eta.csv", m, d.K * d.B);
  const bool csp = d.mode == PriorMode::csp;
  Matrix pi, zind, A, Z;
  if (csp) {
    pi = read_block(dir, "csp_pi.csv", m, d.K);
    zind = read_block(dir, "csp_zind.csv", m, d.K);
  }
  if (local) {
    A = read_block(dir, "A.csv", m, d.n * d.K);
    Z = read_block(dir, "Z.csv", m, d.n);
  }
  for (int t = 0; t < m; ++t) {
    d.G.push_back(unflat<Matrix>(G.row(t), 0, d.p, d.K).cast<int>());
    std::vector<Matrix> b;
    for (int c = 0; c < dm1; ++c)
      b.push_back(unflat<Matrix>(beta.row(t), static_cast<Eigen::Index>(c) * d.p * d.K, d.p, d.K));
    d.beta.push_back(std::move(b));
    d.beta0.push_back(unflat<Matrix>(beta0.row(t), 0, d.p, dm1));
    d.sigma2.push_back(unflat<Matrix>(sigma2.row(t), 0, dm1, d.K));
    d.gamma.push_back(gamma(t, 0));
    d.tau.push_back(tau.row(t).transpose());
    d.eta.push_back(unflat<Matrix>(eta.row(t), 0, d.K, d.B));
    if (csp) {
      d.csp_pi.push_back(pi.row(t).transpose());
      std::vector<int> zi(d.K);
      for (int k = 0; k < d.K; ++k) zi[k] = static_cast<int>(zind(t, k));
      d.csp_zind.push_back(std::move(zi));
    }
    if (local) {
      d.A.push_back(unflat<Matrix>(A.row(t), 0, d.n, d.K).cast<int>());
      std::vector<int> zz(d.n);
      for (int i = 0; i < d.n; ++i) zz[i] = static_cast<int>(Z(t, i)) - 1;
      d.Z.push_back(std::move(zz));
    }
  }
  d.A_mean = parse_real_table(read_file(dir / "A_mean.csv"), "A_mean.csv");
  d.Z_freq = parse_real_table(read_file(dir / "Z_freq.csv"), "Z_freq.csv");
  if (d.A_mean.rows() != d.n || d.A_mean.cols() != d.K || d.Z_freq.rows() != d.n ||
      d.Z_freq.cols() != d.B)
    throw InputError("subject summaries do not match draws.json");
  const fs::path tp = dir / "trace.csv";
  if (fs::exists(tp)) {
    const Matrix tr = parse_real_table(read_file(tp), tp.string());
    for (Eigen::Index r = 0; r < tr.rows(); ++r) {
      d.log_lik.push_back(tr(r, 1));
      d.edge_count.push_back(static_cast<int>(tr(r, 2)));
      d.active_columns.push_back(static_cast<int>(tr(r, 3)));
    }
  }
  return d;
}

}  // namespace pyramid
