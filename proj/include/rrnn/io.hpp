#pragma once

// File formats: model and certificate JSON, dataset directories (manifest
// plus one CSV per sequence), training history and sweep CSVs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rrnn/benchmark.hpp"
#include "rrnn/evaluation.hpp"
#include "rrnn/model_zoo.hpp"
#include "rrnn/training.hpp"

namespace rrnn {

using json = nlohmann::json;
namespace fs = std::filesystem;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decimal text that round-trips a double exactly.
inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// --- matrices ------------------------------------------------------------------

inline json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline MatrixXd matrix_from_json(const json& j, const std::string& name, Eigen::Index rows,
                                 Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw FormatError("matrix '" + name + "' must have " + std::to_string(rows) + " rows");
  }
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw FormatError("matrix '" + name + "' row " + std::to_string(i) + " must have " +
                        std::to_string(cols) + " entries");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      const json& x = row[static_cast<std::size_t>(c)];
      if (!x.is_number()) throw FormatError("matrix '" + name + "' has a non-numeric entry");
      m(i, c) = x.get<double>();
    }
  }
  return m;
}

inline VectorXd vector_from_json(const json& j, const std::string& name, Eigen::Index size) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size) {
    throw FormatError("vector '" + name + "' must have " + std::to_string(size) + " entries");
  }
  VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const json& x = j[static_cast<std::size_t>(i)];
    if (!x.is_number()) throw FormatError("vector '" + name + "' has a non-numeric entry");
    v(i) = x.get<double>();
  }
  return v;
}

namespace detail {

inline const json& field(const json& j, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) throw FormatError("missing field '" + key + "'");
  return j.at(key);
}

inline Eigen::Index dim_field(const json& dims, const std::string& key) {
  const json& v = field(dims, key);
  if (!v.is_number_integer() || v.get<long>() < 1) {
    throw FormatError("dims." + key + " must be a positive integer");
  }
  return v.get<Eigen::Index>();
}

}  // namespace detail

// --- models --------------------------------------------------------------------

inline json model_to_json(const CertifiedBundle& b) {
  const auto& t = b.theta;
  json j;
  j["kind"] = std::string(to_string(kind_of(b)));
  j["dims"] = {{"n", t.n()}, {"q", t.q()}, {"m", t.m()}, {"p", t.p()}};
  j["beta"] = t.beta;
  j["activation"] = std::string(to_string(t.activation));
  j["matrices"] = {{"E", to_json(t.E)},     {"F", to_json(t.F)},     {"B1", to_json(t.B1)},
                   {"B2", to_json(t.B2)},   {"C1", to_json(t.C1)},   {"D11", to_json(t.D11)},
                   {"D12", to_json(t.D12)}, {"Lambda", to_json(t.lambda)},
                   {"C2", to_json(t.C2)},   {"b", to_json(t.b)},     {"D22", to_json(t.D22)}};
  j["P"] = to_json(b.P);
  if (b.kind == ConstraintKind::RobustGamma) j["gamma"] = b.gamma;
  return j;
}

inline json model_to_json(const Elman& e) {
  json j;
  j["kind"] = "rnn";
  j["dims"] = {{"n", e.A.rows()}, {"q", e.A.rows()}, {"m", e.B.cols()}, {"p", e.C.rows()}};
  j["beta"] = slope_bound(e.activation);
  j["activation"] = std::string(to_string(e.activation));
  j["matrices"] = {{"A", to_json(e.A)}, {"B", to_json(e.B)}, {"b", to_json(e.b)},
                   {"C", to_json(e.C)}, {"D", to_json(e.D)}};
  return j;
}

inline json model_to_json(const ContractingRnn& c) {
  const CiRnn& r = c.net;
  json j;
  j["kind"] = std::string(to_string(kind_of(c)));
  j["dims"] = {{"n", r.E.rows()}, {"q", r.E.rows()}, {"m", r.B.cols()}, {"p", r.C.rows()}};
  j["beta"] = slope_bound(r.activation);
  j["activation"] = std::string(to_string(r.activation));
  j["matrices"] = {{"E", to_json(r.E)}, {"F", to_json(r.F)}, {"B", to_json(r.B)},
                   {"b", to_json(r.b)}, {"C", to_json(r.C)}, {"D", to_json(r.D)}};
  j["P"] = to_json(MatrixXd(c.p.asDiagonal()));
  return j;
}

inline json model_to_json(const Lstm& l) {
  json j;
  j["kind"] = "lstm";
  j["dims"] = {{"n", l.n()}, {"q", 4 * l.n()}, {"m", l.m()}, {"p", l.p()}};
  j["beta"] = 1.0;
  j["activation"] = "sigmoid";
  j["matrices"] = {{"Wx", to_json(l.Wx)}, {"Wu", to_json(l.Wu)}, {"bias", to_json(l.bias)},
                   {"C", to_json(l.C)},   {"D", to_json(l.D)}};
  return j;
}

inline json model_to_json(const SequenceModel& m) {
  return std::visit([](const auto& x) { return model_to_json(x); }, m);
}

inline SequenceModel model_from_json(const json& j) {
  const ModelKind kind = model_kind_from_string(detail::field(j, "kind").get<std::string>());
  const json& dims = detail::field(j, "dims");
  const Eigen::Index n = detail::dim_field(dims, "n"), q = detail::dim_field(dims, "q"),
                     m = detail::dim_field(dims, "m"), p = detail::dim_field(dims, "p");
  const json& mats = detail::field(j, "matrices");
  auto mat = [&](const char* name, Eigen::Index r, Eigen::Index c) {
    return matrix_from_json(detail::field(mats, name), name, r, c);
  };
  auto vec = [&](const char* name, Eigen::Index s) {
    return vector_from_json(detail::field(mats, name), name, s);
  };
  const Activation act = activation_from_string(detail::field(j, "activation").get<std::string>());

  switch (kind) {
    case ModelKind::robust_star:
    case ModelKind::robust_gamma: {
      CertifiedBundle b;
      auto& t = b.theta;
      t.E = mat("E", n, n);
      t.F = mat("F", n, n);
      t.B1 = mat("B1", n, q);
      t.B2 = mat("B2", n, m);
      t.C1 = mat("C1", p, n);
      t.D11 = mat("D11", p, q);
      t.D12 = mat("D12", p, m);
      t.lambda = vec("Lambda", q);
      t.C2 = mat("C2", q, n);
      t.b = vec("b", q);
      t.D22 = mat("D22", q, m);
      t.activation = act;
      t.beta = detail::field(j, "beta").get<double>();
      b.P = matrix_from_json(detail::field(j, "P"), "P", n, n);
      if (kind == ModelKind::robust_gamma) {
        b.kind = ConstraintKind::RobustGamma;
        b.gamma = detail::field(j, "gamma").get<double>();
        if (!(b.gamma > 0)) throw FormatError("gamma must be positive");
      } else {
        b.kind = ConstraintKind::RobustStar;
      }
      return b;
    }
    case ModelKind::rnn: {
      Elman e;
      e.A = mat("A", n, n);
      e.B = mat("B", n, m);
      e.b = vec("b", n);
      e.C = mat("C", p, n);
      e.D = mat("D", p, m);
      e.activation = act;
      return e;
    }
    case ModelKind::cirnn:
    case ModelKind::srnn: {
      ContractingRnn c;
      c.identity_e = kind == ModelKind::srnn;
      c.net.E = mat("E", n, n);
      c.net.F = mat("F", n, n);
      c.net.B = mat("B", n, m);
      c.net.b = vec("b", n);
      c.net.C = mat("C", p, n);
      c.net.D = mat("D", p, m);
      c.net.activation = act;
      c.p = matrix_from_json(detail::field(j, "P"), "P", n, n).diagonal();
      return c;
    }
    case ModelKind::lstm: {
      Lstm l;
      l.Wx = mat("Wx", 4 * n, n);
      l.Wu = mat("Wu", 4 * n, m);
      l.bias = vec("bias", 4 * n);
      l.C = mat("C", p, n);
      l.D = mat("D", p, m);
      return l;
    }
  }
  throw FormatError("unhandled model kind");
}

inline SequenceModel load_model(const fs::path& path) {
  try {
    return model_from_json(read_json(path));
  } catch (const FormatError& e) {
    throw FormatError("model file '" + path.string() + "': " + e.what());
  } catch (const json::exception& e) {
    throw FormatError("model file '" + path.string() + "': " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError("model file '" + path.string() + "': " + e.what());
  }
}

inline void save_model(const fs::path& path, const SequenceModel& m, const json& manifest = {}) {
  json j = model_to_json(m);
  if (!manifest.is_null()) j["manifest"] = manifest;
  write_json(path, j);
}

/// Certificate summary written alongside a certified model.
inline json certificate_to_json(const FeasibilityReport& rep, ConstraintKind kind, double gamma,
                                const MatrixXd& P, std::optional<double> certified_gamma = {}) {
  json j;
  j["kind"] = std::string(to_string(kind));
  if (kind == ConstraintKind::RobustGamma) j["gamma"] = gamma;
  else j["gamma"] = nullptr;
  j["P"] = to_json(P);
  j["margins"] = {{"lmi", rep.lmi_margin},
                  {"P", rep.P_margin},
                  {"lambda_min", rep.lambda_min},
                  {"feasible", rep.feasible}};
  j["epsilon"] = kStrictEps;
  if (certified_gamma) j["certified_gamma"] = *certified_gamma;
  return j;
}

// --- sequences and datasets --------------------------------------------------------

inline std::string sequence_to_csv(const SeqBatch& b) {
  if (b.u.cols() != 1 || b.y.cols() != 1) {
    throw FormatError("sequence CSV holds single-input single-output data");
  }
  std::string out = "t,u,y\n";
  for (Eigen::Index k = 0; k < b.u.rows(); ++k) {
    out += fmt17(static_cast<double>(k) * b.dt);
    out += ',';
    out += fmt17(b.u(k, 0));
    out += ',';
    out += fmt17(b.y(k, 0));
    out += '\n';
  }
  return out;
}

inline SeqBatch sequence_from_csv(const std::string& text, const std::string& name = "sequence") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "t,u,y") {
    throw FormatError(name + ": expected header 't,u,y'");
  }
  std::vector<double> t, u, y;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    double vals[3];
    const char* p = line.c_str();
    for (int c = 0; c < 3; ++c) {
      char* end = nullptr;
      vals[c] = std::strtod(p, &end);
      if (end == p || (c < 2 && *end != ',') || (c == 2 && *end != '\0' && *end != '\r')) {
        throw FormatError(name + ": malformed line " + std::to_string(lineno));
      }
      p = end + 1;
    }
    t.push_back(vals[0]);
    u.push_back(vals[1]);
    y.push_back(vals[2]);
  }
  if (u.empty()) throw FormatError(name + ": no samples");
  SeqBatch b;
  const auto T = static_cast<Eigen::Index>(u.size());
  b.u = Eigen::Map<const MatrixXd>(u.data(), T, 1);
  b.y = Eigen::Map<const MatrixXd>(y.data(), T, 1);
  b.dt = T > 1 ? t[1] - t[0] : 0.2;
  return b;
}

inline json to_json(const MsdConfig& c) {
  return {{"masses", c.masses},       {"dampers", c.dampers}, {"springs", c.springs},
          {"sample_rate", c.sample_rate}, {"step", c.step}};
}

inline json to_json(const DatasetConfig& c) {
  return {{"msd", to_json(c.msd)},
          {"train_batches", c.train_batches},
          {"train_length", c.train_length},
          {"val_length", c.val_length},
          {"test_length", c.test_length},
          {"tau", c.tau},
          {"train_sigma", c.train_sigma},
          {"val_sigma", c.val_sigma},
          {"test_sigmas", c.test_sigmas},
          {"test_realizations", c.test_realizations},
          {"noise_snr_db", std::isfinite(c.noise_snr_db) ? json(c.noise_snr_db) : json(nullptr)},
          {"seed", c.seed}};
}

namespace detail {
template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                           const std::string& where) {
  if (!j.is_object()) throw FormatError(where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw FormatError(where + ": unknown key '" + it.key() + "'");
  }
}
}  // namespace detail

inline MsdConfig msd_config_from_json(const json& j) {
  detail::reject_unknown(j, {"masses", "dampers", "springs", "sample_rate", "step"}, "msd");
  MsdConfig c;
  detail::read_opt(j, "masses", c.masses);
  detail::read_opt(j, "dampers", c.dampers);
  detail::read_opt(j, "springs", c.springs);
  detail::read_opt(j, "sample_rate", c.sample_rate);
  detail::read_opt(j, "step", c.step);
  c.validate();
  return c;
}

/// Reads a dataset configuration; keys absent from j keep their defaults.
inline DatasetConfig dataset_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"msd", "train_batches", "train_length", "val_length", "test_length",
                          "tau", "train_sigma", "val_sigma", "test_sigmas", "test_realizations",
                          "noise_snr_db", "seed"},
                         "dataset config");
  DatasetConfig c;
  try {
    if (j.contains("msd")) c.msd = msd_config_from_json(j.at("msd"));
    detail::read_opt(j, "train_batches", c.train_batches);
    detail::read_opt(j, "train_length", c.train_length);
    detail::read_opt(j, "val_length", c.val_length);
    detail::read_opt(j, "test_length", c.test_length);
    detail::read_opt(j, "tau", c.tau);
    detail::read_opt(j, "train_sigma", c.train_sigma);
    detail::read_opt(j, "val_sigma", c.val_sigma);
    detail::read_opt(j, "test_sigmas", c.test_sigmas);
    detail::read_opt(j, "test_realizations", c.test_realizations);
    if (j.contains("noise_snr_db")) {
      c.noise_snr_db = j.at("noise_snr_db").is_null() ? std::numeric_limits<double>::infinity()
                                                      : j.at("noise_snr_db").get<double>();
    }
    detail::read_opt(j, "seed", c.seed);
  } catch (const json::type_error& e) {
    throw FormatError(std::string("dataset config: ") + e.what());
  }
  if (c.train_length < 1 || c.val_length < 1 || c.test_length < 1 || c.train_batches < 1 ||
      c.test_realizations < 0 || !(c.tau > 0)) {
    throw FormatError("dataset config: lengths, counts and tau must be positive");
  }
  return c;
}

inline std::string test_file_name(double sigma, std::size_t r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "test_s%s_%03zu.csv", fmt17(sigma).c_str(), r);
  return buf;
}

/// Writes manifest.json plus one CSV per sequence into dir.
inline void write_dataset(const fs::path& dir, const Dataset& ds, const DatasetConfig& cfg) {
  fs::create_directories(dir);
  json files;
  json train = json::array();
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "train_%03zu.csv", i);
    write_text(dir / name, sequence_to_csv(ds.train[i]));
    train.push_back({{"file", name}, {"seed", ds.train[i].seed}});
  }
  files["train"] = train;
  write_text(dir / "val.csv", sequence_to_csv(ds.val));
  files["val"] = {{"file", "val.csv"}, {"seed", ds.val.seed}};
  json tests = json::array();
  for (const auto& [sigma, seqs] : ds.tests) {
    for (std::size_t r = 0; r < seqs.size(); ++r) {
      const std::string name = test_file_name(sigma, r);
      write_text(dir / name, sequence_to_csv(seqs[r]));
      tests.push_back({{"file", name}, {"sigma_u", sigma}, {"realization", r}, {"seed", seqs[r].seed}});
    }
  }
  files["tests"] = tests;
  json manifest;
  manifest["format"] = "rrnn-dataset-1";
  manifest["config"] = to_json(cfg);
  manifest["files"] = files;
  write_json(dir / "manifest.json", manifest);
}

struct LoadedDataset {
  Dataset data;
  DatasetConfig config;
};

inline LoadedDataset read_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw FormatError("dataset '" + dir.string() + "' has no manifest.json");
  const json manifest = read_json(mpath);
  LoadedDataset out;
  out.config = dataset_config_from_json(detail::field(manifest, "config"));
  const json& files = detail::field(manifest, "files");
  auto load = [&](const json& entry, double sigma) {
    const std::string name = detail::field(entry, "file").get<std::string>();
    SeqBatch b = sequence_from_csv(read_text(dir / name), name);
    b.seed = detail::field(entry, "seed").get<std::uint64_t>();
    b.sigma_u = sigma;
    b.tau = out.config.tau;
    return b;
  };
  for (const json& e : detail::field(files, "train")) {
    out.data.train.push_back(load(e, out.config.train_sigma));
  }
  out.data.val = load(detail::field(files, "val"), out.config.val_sigma);
  for (const json& e : detail::field(files, "tests")) {
    const double s = detail::field(e, "sigma_u").get<double>();
    out.data.tests[s].push_back(load(e, s));
  }
  return out;
}

// --- CSV tables ------------------------------------------------------------------

inline std::string history_to_csv(const TrainHistory& h) {
  std::string out = "epoch,loss,val_nse,alpha,lr,lmi_margin,seconds\n";
  for (const auto& r : h.epochs) {
    out += std::to_string(r.epoch) + "," + fmt17(r.loss) + "," + fmt17(r.val_nse) + "," +
           fmt17(r.alpha) + "," + fmt17(r.lr) + "," + fmt17(r.lmi_margin) + "," +
           fmt17(r.seconds) + "\n";
  }
  return out;
}

inline std::string nse_rows_to_csv(const std::vector<NseRow>& rows) {
  std::string out = "model,sigma_u,realization,nse\n";
  for (const auto& r : rows) {
    out += r.model + "," + fmt17(r.sigma_u) + "," + std::to_string(r.realization) + "," +
           fmt17(r.nse) + "\n";
  }
  return out;
}

/// Minimal CSV reader for the tables above (no quoting).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("CSV has no column '" + name + "'");
  }
};

inline CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  CsvTable t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) out.push_back(cur);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!std::getline(in, line)) throw FormatError("'" + path.string() + "' is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    if (row.size() != t.header.size()) {
      throw FormatError("'" + path.string() + "': row width differs from header");
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline json report_to_json(const RobustnessReport& r) {
  json j;
  j["gamma_hat"] = r.gamma_hat;
  j["gamma_cert"] = r.gamma_cert ? json(*r.gamma_cert) : json(nullptr);
  j["restart_ratios"] = r.restart_ratios;
  j["reinflations"] = r.reinflations;
  return j;
}

}  // namespace rrnn
