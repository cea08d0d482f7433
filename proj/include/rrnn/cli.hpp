#pragma once

// Command-line driver: datagen, train, eval, attack, certify, embed and
// export-plots. Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rrnn/io.hpp"

namespace rrnn::cli {

inline constexpr int kOk = 0;
inline constexpr int kValidation = 1;
inline constexpr int kRuntime = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Console {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;

  void progress(const std::string& line) const {
    if (!quiet) out << line << '\n' << std::flush;
  }
  void warn(const std::string& line) const { err << "warning: " << line << '\n'; }
};

/// Flag value if given, else ROBUST_RNN_SEED if set, else the file value.
inline std::uint64_t resolve_seed(const CLI::Option* flag, std::uint64_t flag_value,
                                  std::uint64_t file_value) {
  if (flag != nullptr && flag->count() > 0) return flag_value;
  if (const char* env = std::getenv("ROBUST_RNN_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("ROBUST_RNN_SEED must be a nonnegative integer, got '") + env +
                       "'");
    }
  }
  return file_value;
}

inline json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  return read_json(path);
}

inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || *end != '\0') throw UsageError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(what + " is empty");
  return out;
}

/// File stem, or the run directory for the default "model.json" checkpoint name.
inline std::string model_name(const std::string& path) {
  const fs::path p(path);
  const std::string dir = p.parent_path().filename().string();
  return p.stem() == "model" && !dir.empty() ? dir : p.stem().string();
}

inline json manifest(const std::string& command, std::uint64_t seed) {
  return {{"command", command}, {"seed", seed}, {"threads", worker_count()}};
}

inline void write_manifest_sidecar(const fs::path& file, const json& m) {
  write_json(fs::path(file.string() + ".manifest.json"), m);
}

// --- datagen ---------------------------------------------------------------------

struct DatagenArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  int train_batches = 0;
  Eigen::Index train_length = 0, val_length = 0, test_length = 0;
  int realizations = 0;
  double snr = 0;
  std::string sigmas;
  CLI::Option *seed_opt{}, *batches_opt{}, *train_len_opt{}, *val_len_opt{}, *test_len_opt{},
      *real_opt{}, *snr_opt{}, *sigmas_opt{};
};

inline int cmd_datagen(const DatagenArgs& a, const Console& con) {
  DatasetConfig cfg = dataset_config_from_json(read_config(a.config));
  if (a.batches_opt->count()) cfg.train_batches = a.train_batches;
  if (a.train_len_opt->count()) cfg.train_length = a.train_length;
  if (a.val_len_opt->count()) cfg.val_length = a.val_length;
  if (a.test_len_opt->count()) cfg.test_length = a.test_length;
  if (a.real_opt->count()) cfg.test_realizations = a.realizations;
  if (a.snr_opt->count()) cfg.noise_snr_db = a.snr;
  if (a.sigmas_opt->count()) cfg.test_sigmas = parse_list(a.sigmas, "--sigmas");
  cfg.seed = resolve_seed(a.seed_opt, a.seed, cfg.seed);
  dataset_config_from_json(to_json(cfg));  // re-validate after overrides
  const Dataset ds = make_dataset(cfg);
  write_dataset(a.out, ds, cfg);
  con.progress("wrote " + std::to_string(ds.train.size()) + " training sequences, 1 validation sequence and " +
               std::to_string(cfg.test_sigmas.size() * static_cast<std::size_t>(cfg.test_realizations)) +
               " test sequences to " + a.out);
  return kOk;
}

// --- train -------------------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, model, activation;
  double gamma = 0;
  std::uint64_t seed = 0;
  int max_epochs = 0, batches = 0;
  Eigen::Index n = 0, q = 0;
  double lr = 0;
  CLI::Option *seed_opt{}, *model_opt{}, *gamma_opt{}, *epochs_opt{}, *batches_opt{}, *n_opt{},
      *q_opt{}, *lr_opt{}, *act_opt{};
};

inline TrainConfig train_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"lr0", "alpha0", "alpha_final", "lr_decay", "alpha_decay", "patience",
                          "adam_beta1", "adam_beta2", "adam_eps", "max_backtracks", "max_epochs"},
                         "train");
  TrainConfig c;
  detail::read_opt(j, "lr0", c.lr0);
  detail::read_opt(j, "alpha0", c.alpha0);
  detail::read_opt(j, "alpha_final", c.alpha_final);
  detail::read_opt(j, "lr_decay", c.lr_decay);
  detail::read_opt(j, "alpha_decay", c.alpha_decay);
  detail::read_opt(j, "patience", c.patience);
  detail::read_opt(j, "adam_beta1", c.adam_beta1);
  detail::read_opt(j, "adam_beta2", c.adam_beta2);
  detail::read_opt(j, "adam_eps", c.adam_eps);
  detail::read_opt(j, "max_backtracks", c.max_backtracks);
  detail::read_opt(j, "max_epochs", c.max_epochs);
  return c;
}

/// Smallest gamma certified by the RobustGamma LMI with theta and P fixed.
inline std::optional<double> certified_gamma(const CertifiedBundle& b, double tol = 1e-6) {
  double hi = 0;
  if (b.kind == ConstraintKind::RobustGamma && gamma_feasible(b.theta, b.P, b.gamma)) {
    hi = b.gamma;
  } else {
    const auto g = find_feasible_gamma(b.theta, b.P);
    if (!g) return std::nullopt;
    hi = *g;
  }
  return bisect_gamma(b.theta, b.P, hi * 1e-9, hi, tol);
}

/// Certified bundle behind a model, if it has one.
inline std::optional<CertifiedBundle> bundle_of(const SequenceModel& m) {
  if (const auto* b = std::get_if<CertifiedBundle>(&m)) return *b;
  if (const auto* c = std::get_if<ContractingRnn>(&m)) {
    if (!feasibility(*c).feasible) return std::nullopt;
    return embed_cirnn(c->net, c->p);
  }
  return std::nullopt;
}

template <class Model>
int train_and_write(const Model& init, const Dataset& ds, int batches, const TrainConfig& tc,
                    const fs::path& out, const json& man, const Console& con) {
  const std::size_t count =
      batches > 0 ? std::min<std::size_t>(ds.train.size(), static_cast<std::size_t>(batches))
                  : ds.train.size();
  std::span<const SeqBatch> span(ds.train.data(), count);
  auto res = train(init, span, ds.val, tc, [&](const EpochRecord& r) {
    char line[256];
    std::snprintf(line, sizeof line,
                  "epoch %4d  loss %.6e  val_nse %.6f  alpha %.3e  lr %.3e  margin %.3e",
                  r.epoch, r.loss, r.val_nse, r.alpha, r.lr, r.lmi_margin);
    con.progress(line);
  });
  for (const auto& w : res.history.warnings) con.warn(w);
  fs::create_directories(out);
  json m = man;
  m["initial_val_nse"] = res.history.initial_val_nse;
  m["best_val_nse"] = res.history.best_val_nse;
  m["epochs"] = res.history.epochs.size();
  save_model(out / "model.json", SequenceModel(res.model), m);
  write_text(out / "history.csv", history_to_csv(res.history));
  write_manifest_sidecar(out / "history.csv", man);
  const SequenceModel trained(res.model);
  if (is_constrained(res.model)) {
    const FeasibilityReport rep = feasibility(res.model);
    if (const auto b = bundle_of(trained)) {
      write_json(out / "certificate.json",
                 certificate_to_json(rep, b->kind, b->gamma, b->P, certified_gamma(*b)));
    } else {
      const auto& c = std::get<ContractingRnn>(trained);
      write_json(out / "certificate.json",
                 certificate_to_json(rep, ConstraintKind::CiRnnContraction, 0.0,
                                     MatrixXd(c.p.asDiagonal())));
    }
  }
  con.progress("best val_nse " + fmt17(res.history.best_val_nse) + "; wrote " + out.string());
  return kOk;
}

inline int cmd_train(const TrainArgs& a, const Console& con) {
  json file = read_config(a.config);
  detail::reject_unknown(file, {"model", "gamma", "activation", "dims", "train", "seed", "batches"},
                         "train config");
  std::string kind_text = file.value("model", std::string("robust-star"));
  if (a.model_opt->count()) kind_text = a.model;
  ModelKind kind;
  try {
    kind = model_kind_from_string(kind_text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--model: ") + e.what());
  }
  std::optional<double> gamma;
  if (file.contains("gamma")) gamma = file.at("gamma").get<double>();
  if (a.gamma_opt->count()) gamma = a.gamma;
  if (kind == ModelKind::robust_gamma && !gamma) {
    throw UsageError("--gamma is required for model robust-gamma");
  }
  if (gamma && !(*gamma > 0)) throw UsageError("--gamma must be positive");
  std::string act_text = file.value("activation", std::string("relu"));
  if (a.act_opt->count()) act_text = a.activation;
  Activation act;
  try {
    act = activation_from_string(act_text);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--activation: ") + e.what());
  }

  if (a.data.empty()) throw UsageError("--data is required");
  const LoadedDataset loaded = read_dataset(a.data);
  ModelDims dims;
  dims.m = loaded.data.val.u.cols();
  dims.p = loaded.data.val.y.cols();
  if (file.contains("dims")) {
    const json& d = file.at("dims");
    detail::reject_unknown(d, {"n", "q"}, "dims");
    detail::read_opt(d, "n", dims.n);
    detail::read_opt(d, "q", dims.q);
  }
  if (a.n_opt->count()) dims.n = a.n;
  if (a.q_opt->count()) dims.q = a.q;
  if (dims.n < 1 || dims.q < 1) throw UsageError("dims.n and dims.q must be >= 1");
  if (kind != ModelKind::robust_star && kind != ModelKind::robust_gamma && dims.q != dims.n) {
    dims.q = dims.n;  // only the robust kinds have a separate nonlinearity width
  }

  TrainConfig tc = file.contains("train") ? train_config_from_json(file.at("train")) : TrainConfig{};
  if (a.epochs_opt->count()) tc.max_epochs = a.max_epochs;
  if (a.lr_opt->count()) tc.lr0 = a.lr;
  tc.seed = resolve_seed(a.seed_opt, a.seed, file.value("seed", std::uint64_t{0}));
  int batches = file.value("batches", 0);
  if (a.batches_opt->count()) batches = a.batches;
  try {
    tc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  json man = manifest("train", tc.seed);
  man["data"] = a.data;
  man["model"] = std::string(to_string(kind));
  SequenceModel init;
  switch (kind) {
    case ModelKind::robust_star: init = init_robust(dims, std::nullopt, tc.seed, act); break;
    case ModelKind::robust_gamma: init = init_robust(dims, gamma, tc.seed, act); break;
    case ModelKind::rnn: init = init_elman(dims, tc.seed, act); break;
    case ModelKind::cirnn: init = init_contracting(dims, false, tc.seed, act); break;
    case ModelKind::srnn: init = init_contracting(dims, true, tc.seed, act); break;
    case ModelKind::lstm: init = Lstm::random(dims.n, dims.m, dims.p, tc.seed); break;
  }
  return std::visit(
      [&](const auto& m) { return train_and_write(m, loaded.data, batches, tc, a.out, man, con); },
      init);
}

// --- eval --------------------------------------------------------------------------

struct EvalArgs {
  std::vector<std::string> models;
  std::string data, config, out, sigmas;
  int realizations = 0;
  std::uint64_t seed = 0;
  CLI::Option *seed_opt{}, *real_opt{}, *sigmas_opt{};
};

inline int cmd_eval(const EvalArgs& a, const Console& con) {
  DatasetConfig cfg;
  if (!a.data.empty()) {
    cfg = read_dataset(a.data).config;
  } else {
    cfg = dataset_config_from_json(read_config(a.config));
  }
  std::vector<double> sigmas = cfg.test_sigmas;
  if (a.sigmas_opt->count()) sigmas = parse_list(a.sigmas, "--sigmas");
  int realizations = cfg.test_realizations;
  if (a.real_opt->count()) realizations = a.realizations;
  if (realizations < 1) throw UsageError("--realizations must be >= 1");
  cfg.seed = resolve_seed(a.seed_opt, a.seed, cfg.seed);
  std::vector<std::pair<std::string, SequenceModel>> models;
  for (const auto& path : a.models) {
    if (!fs::exists(path)) throw UsageError("model file '" + path + "' does not exist");
    const std::string name = model_name(path);
    for (const auto& [other, _] : models) {
      if (other == name) throw UsageError("two models share the name '" + name + "'");
    }
    models.emplace_back(name, load_model(path));
  }
  const auto rows = nse_sweep(models, cfg, sigmas, realizations);
  write_text(a.out, nse_rows_to_csv(rows));
  json man = manifest("eval", cfg.seed);
  man["models"] = a.models;
  man["sigmas"] = sigmas;
  man["realizations"] = realizations;
  write_manifest_sidecar(a.out, man);
  for (const auto& [name, model] : models) {
    std::string line = name + ":";
    for (double s : sigmas) line += " median@" + fmt17(s) + "=" + fmt17(median_nse(rows, name, s));
    con.progress(line);
  }
  return kOk;
}

// --- attack ------------------------------------------------------------------------

struct AttackArgs {
  std::string model, config, out;
  int iterations = 0, restarts = 0;
  Eigen::Index horizon = 0;
  double step_size = 0;
  std::uint64_t seed = 0;
  CLI::Option *seed_opt{}, *iter_opt{}, *restart_opt{}, *horizon_opt{}, *step_opt{};
};

inline AttackConfig attack_config_from_json(const json& j) {
  detail::reject_unknown(j,
                         {"iterations", "step_size", "restarts", "init_std", "horizon", "tau",
                          "sigma_u", "seed"},
                         "attack config");
  AttackConfig c;
  detail::read_opt(j, "iterations", c.iterations);
  detail::read_opt(j, "step_size", c.step_size);
  detail::read_opt(j, "restarts", c.restarts);
  detail::read_opt(j, "init_std", c.init_std);
  detail::read_opt(j, "horizon", c.horizon);
  detail::read_opt(j, "tau", c.tau);
  detail::read_opt(j, "sigma_u", c.sigma_u);
  detail::read_opt(j, "seed", c.seed);
  return c;
}

inline int cmd_attack(const AttackArgs& a, const Console& con) {
  AttackConfig cfg = attack_config_from_json(read_config(a.config));
  if (a.iter_opt->count()) cfg.iterations = a.iterations;
  if (a.restart_opt->count()) cfg.restarts = a.restarts;
  if (a.horizon_opt->count()) cfg.horizon = a.horizon;
  if (a.step_opt->count()) cfg.step_size = a.step_size;
  cfg.seed = resolve_seed(a.seed_opt, a.seed, cfg.seed);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!fs::exists(a.model)) throw UsageError("model file '" + a.model + "' does not exist");
  const SequenceModel model = load_model(a.model);
  std::optional<double> cert;
  if (const auto b = bundle_of(model)) cert = certified_gamma(*b);
  const RobustnessReport rep = lipschitz_attack(model, cfg, cert);
  json j = report_to_json(rep);
  j["model"] = model_name(a.model);
  j["manifest"] = manifest("attack", cfg.seed);
  write_json(a.out, j);
  con.progress("gamma_hat " + fmt17(rep.gamma_hat) +
               (cert ? "  gamma_cert " + fmt17(*cert) : std::string()));
  if (cert && rep.gamma_hat > *cert * (1.0 + 1e-6)) {
    con.warn("observed gain exceeds the certified bound");
    return kRuntime;
  }
  return kOk;
}

// --- certify -----------------------------------------------------------------------

struct CertifyArgs {
  std::string model, out;
  double tol = 1e-6;
};

inline int cmd_certify(const CertifyArgs& a, const Console& con) {
  if (!fs::exists(a.model)) throw UsageError("model file '" + a.model + "' does not exist");
  const SequenceModel model = load_model(a.model);
  const ModelKind kind = kind_of(model);
  if (kind == ModelKind::rnn || kind == ModelKind::lstm) {
    throw UsageError("model file '" + a.model + "': kind '" + std::string(to_string(kind)) +
                     "' carries no certificate");
  }
  const FeasibilityReport rep = feasibility(model);
  if (!rep.feasible) {
    throw UsageError("model file '" + a.model + "': infeasible checkpoint (lmi margin " +
                     fmt17(rep.lmi_margin) + ", P margin " + fmt17(rep.P_margin) +
                     ", lambda_min " + fmt17(rep.lambda_min) + ")");
  }
  const auto bundle = bundle_of(model);
  const auto gamma = certified_gamma(*bundle, a.tol);
  json j = certificate_to_json(rep, bundle->kind, bundle->gamma, bundle->P, gamma);
  j["model"] = model_name(a.model);
  j["model_kind"] = std::string(to_string(kind));
  if (!a.out.empty()) write_json(a.out, j);
  con.progress("feasible  lmi margin " + fmt17(rep.lmi_margin) + "  certified gamma " +
               (gamma ? fmt17(*gamma) : std::string("none")));
  return kOk;
}

// --- embed -------------------------------------------------------------------------

struct EmbedArgs {
  std::string lti, cirnn, out, activation = "relu";
};

inline int cmd_embed(const EmbedArgs& a, const Console& con) {
  if (a.lti.empty() == a.cirnn.empty()) throw UsageError("give exactly one of --lti or --cirnn");
  CertifiedBundle b;
  if (!a.lti.empty()) {
    if (!fs::exists(a.lti)) throw UsageError("LTI file '" + a.lti + "' does not exist");
    const json j = read_json(a.lti);
    detail::reject_unknown(j, {"A", "B", "C", "D"}, "LTI file '" + a.lti + "'");
    const auto& A = detail::field(j, "A");
    const auto n = static_cast<Eigen::Index>(A.size());
    const auto& B = detail::field(j, "B");
    const auto& C = detail::field(j, "C");
    if (n < 1 || B.empty() || C.empty() || !B[0].is_array() || !C.is_array()) {
      throw FormatError("LTI file '" + a.lti + "': A, B, C must be nonempty matrices");
    }
    const auto m = static_cast<Eigen::Index>(B[0].size());
    const auto p = static_cast<Eigen::Index>(C.size());
    const MatrixXd Am = matrix_from_json(A, "A", n, n);
    const MatrixXd Bm = matrix_from_json(B, "B", n, m);
    const MatrixXd Cm = matrix_from_json(C, "C", p, n);
    const MatrixXd Dm = j.contains("D") ? matrix_from_json(j.at("D"), "D", p, m)
                                        : MatrixXd::Zero(p, m);
    Activation act;
    try {
      act = activation_from_string(a.activation);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("--activation: ") + e.what());
    }
    try {
      b = embed_lti(Am, Bm, Cm, Dm, -1, act);
    } catch (const NotStable& e) {
      throw UsageError("LTI file '" + a.lti + "': " + e.what());
    }
  } else {
    if (!fs::exists(a.cirnn)) throw UsageError("model file '" + a.cirnn + "' does not exist");
    const SequenceModel m = load_model(a.cirnn);
    const auto* c = std::get_if<ContractingRnn>(&m);
    if (c == nullptr) throw UsageError("model file '" + a.cirnn + "' is not a cirnn or srnn model");
    if (!feasibility(*c).feasible) {
      throw UsageError("model file '" + a.cirnn + "': contraction LMI does not hold");
    }
    b = embed_cirnn(c->net, c->p);
  }
  const FeasibilityReport rep = feasibility_margin(b);
  save_model(a.out, b, manifest("embed", 0));
  con.progress("embedded into robust-star; lmi margin " + fmt17(rep.lmi_margin));
  return rep.feasible ? kOk : kRuntime;
}

// --- export-plots ------------------------------------------------------------------

struct ExportArgs {
  std::vector<std::string> histories, reports, models;
  std::string nse, data, out;
  double nominal_sigma = 3.0, trajectory_sigma = 10.0;
  int trajectory_realization = 0;
};

inline int cmd_export(const ExportArgs& a, const Console& con) {
  fs::create_directories(a.out);
  int written = 0;
  auto need = [](const std::string& p) {
    if (!fs::exists(p)) throw UsageError("input file '" + p + "' does not exist");
  };

  if (!a.histories.empty()) {
    std::string csv = "model,epoch,val_nse,loss,seconds\n";
    for (const auto& path : a.histories) {
      need(path);
      const CsvTable t = read_csv(path);
      const std::string name = fs::path(path).parent_path().filename().string().empty()
                                   ? model_name(path)
                                   : fs::path(path).parent_path().filename().string();
      const auto ce = t.column("epoch"), cv = t.column("val_nse"), cl = t.column("loss"),
                 cs = t.column("seconds");
      for (const auto& r : t.rows) csv += name + "," + r[ce] + "," + r[cv] + "," + r[cl] + "," + r[cs] + "\n";
    }
    write_text(fs::path(a.out) / "validation_curves.csv", csv);
    ++written;
  }

  std::map<std::string, std::map<double, std::vector<double>>> by_model;
  if (!a.nse.empty()) {
    need(a.nse);
    const CsvTable t = read_csv(a.nse);
    const auto cm = t.column("model"), cs = t.column("sigma_u"), cn = t.column("nse");
    for (const auto& r : t.rows) by_model[r[cm]][std::stod(r[cs])].push_back(std::stod(r[cn]));
    std::string box = "model,sigma_u,min,q25,median,q75,max,count\n";
    for (const auto& [name, sig] : by_model) {
      for (const auto& [s, v] : sig) {
        box += name + "," + fmt17(s) + "," + fmt17(quantile(v, 0.0)) + "," + fmt17(quantile(v, 0.25)) +
               "," + fmt17(median(v)) + "," + fmt17(quantile(v, 0.75)) + "," + fmt17(quantile(v, 1.0)) +
               "," + std::to_string(v.size()) + "\n";
      }
    }
    write_text(fs::path(a.out) / "nse_boxplots.csv", box);
    ++written;
  }

  if (!a.reports.empty()) {
    std::string csv = "model,nse_median,gamma_hat,gamma_cert\n";
    for (const auto& path : a.reports) {
      need(path);
      const json r = read_json(path);
      const std::string name = r.value("model", model_name(path));
      double med = std::numeric_limits<double>::quiet_NaN();
      if (auto it = by_model.find(name); it != by_model.end()) {
        if (auto s = it->second.find(a.nominal_sigma); s != it->second.end()) med = median(s->second);
      }
      const json& gc = detail::field(r, "gamma_cert");
      csv += name + "," + fmt17(med) + "," + fmt17(detail::field(r, "gamma_hat").get<double>()) + "," +
             (gc.is_null() ? std::string() : fmt17(gc.get<double>())) + "\n";
    }
    write_text(fs::path(a.out) / "nse_vs_lipschitz.csv", csv);
    ++written;
  }

  if (!a.models.empty()) {
    DatasetConfig cfg;
    if (!a.data.empty()) cfg = read_dataset(a.data).config;
    const SeqBatch seq = make_test_sequence(cfg, a.trajectory_sigma, a.trajectory_realization);
    std::vector<std::string> names;
    std::vector<MatrixXd> preds;
    for (const auto& path : a.models) {
      need(path);
      names.push_back(model_name(path));
      preds.push_back(predict(load_model(path), seq.u));
    }
    std::string csv = "t,u,y";
    for (const auto& n : names) csv += "," + n;
    csv += "\n";
    for (Eigen::Index k = 0; k < seq.u.rows(); ++k) {
      csv += fmt17(static_cast<double>(k) * seq.dt) + "," + fmt17(seq.u(k, 0)) + "," + fmt17(seq.y(k, 0));
      for (const auto& p : preds) csv += "," + fmt17(p(k, 0));
      csv += "\n";
    }
    write_text(fs::path(a.out) / "trajectories.csv", csv);
    ++written;
  }
  if (written == 0) throw UsageError("nothing to export; give --histories, --nse, --reports or --models");
  con.progress("wrote " + std::to_string(written) + " table(s) to " + a.out);
  return kOk;
}

// --- entry point -------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Robust RNN system identification toolkit", "rrnn"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  DatagenArgs dg;
  auto* datagen = app.add_subcommand("datagen", "Generate the mass-spring-damper dataset");
  datagen->add_option("--config", dg.config, "Dataset config JSON")->check(CLI::ExistingFile);
  datagen->add_option("--out", dg.out, "Output directory")->required();
  dg.seed_opt = datagen->add_option("--seed", dg.seed, "Master seed");
  dg.batches_opt = datagen->add_option("--train-batches", dg.train_batches, "Training sequences");
  dg.train_len_opt = datagen->add_option("--train-length", dg.train_length, "Training sequence length");
  dg.val_len_opt = datagen->add_option("--val-length", dg.val_length, "Validation sequence length");
  dg.test_len_opt = datagen->add_option("--test-length", dg.test_length, "Test sequence length");
  dg.real_opt = datagen->add_option("--realizations", dg.realizations, "Test realizations per amplitude");
  dg.snr_opt = datagen->add_option("--snr", dg.snr, "Measurement SNR in dB");
  dg.sigmas_opt = datagen->add_option("--sigmas", dg.sigmas, "Comma-separated test amplitudes");

  TrainArgs tr;
  auto* trainc = app.add_subcommand("train", "Train a model on a dataset directory");
  trainc->add_option("--config", tr.config, "Train config JSON")->check(CLI::ExistingFile);
  trainc->add_option("--data", tr.data, "Dataset directory");
  trainc->add_option("--out", tr.out, "Output directory")->required();
  tr.model_opt = trainc->add_option("--model", tr.model, "rnn|lstm|srnn|cirnn|robust-star|robust-gamma");
  tr.gamma_opt = trainc->add_option("--gamma", tr.gamma, "Gain bound for robust-gamma");
  tr.act_opt = trainc->add_option("--activation", tr.activation, "relu|tanh|sigmoid");
  tr.seed_opt = trainc->add_option("--seed", tr.seed, "Master seed");
  tr.epochs_opt = trainc->add_option("--max-epochs", tr.max_epochs, "Epoch cap");
  tr.batches_opt = trainc->add_option("--batches", tr.batches, "Use only the first K training sequences");
  tr.n_opt = trainc->add_option("--n", tr.n, "State dimension");
  tr.q_opt = trainc->add_option("--q", tr.q, "Nonlinearity width");
  tr.lr_opt = trainc->add_option("--lr", tr.lr, "Initial learning rate");

  EvalArgs ev;
  auto* evalc = app.add_subcommand("eval", "NSE sweep over input amplitudes");
  evalc->add_option("--models", ev.models, "Model JSON files")->required();
  evalc->add_option("--data", ev.data, "Dataset directory supplying the test recipe");
  evalc->add_option("--config", ev.config, "Dataset config JSON (when --data is absent)");
  evalc->add_option("--out", ev.out, "Output CSV")->required();
  ev.sigmas_opt = evalc->add_option("--sigmas", ev.sigmas, "Comma-separated amplitudes");
  ev.real_opt = evalc->add_option("--realizations", ev.realizations, "Realizations per amplitude");
  ev.seed_opt = evalc->add_option("--seed", ev.seed, "Master seed");

  AttackArgs at;
  auto* attack = app.add_subcommand("attack", "Gradient-ascent Lipschitz lower bound");
  attack->add_option("--model", at.model, "Model JSON")->required();
  attack->add_option("--config", at.config, "Attack config JSON")->check(CLI::ExistingFile);
  attack->add_option("--out", at.out, "Report JSON")->required();
  at.iter_opt = attack->add_option("--iterations", at.iterations, "Ascent iterations");
  at.restart_opt = attack->add_option("--restarts", at.restarts, "Random restarts");
  at.horizon_opt = attack->add_option("--horizon", at.horizon, "Sequence length");
  at.step_opt = attack->add_option("--step-size", at.step_size, "ADAM step size");
  at.seed_opt = attack->add_option("--seed", at.seed, "Master seed");

  CertifyArgs ce;
  auto* certify = app.add_subcommand("certify", "Feasibility report and certified gain bound");
  certify->add_option("--model", ce.model, "Model JSON")->required();
  certify->add_option("--out", ce.out, "Certificate JSON");
  certify->add_option("--tol", ce.tol, "Relative bisection tolerance");

  EmbedArgs em;
  auto* embed = app.add_subcommand("embed", "Embed an LTI system or ci-RNN into robust-star");
  embed->add_option("--lti", em.lti, "JSON with matrices A, B, C and optional D");
  embed->add_option("--cirnn", em.cirnn, "cirnn or srnn model JSON");
  embed->add_option("--activation", em.activation, "Activation for the LTI embedding");
  embed->add_option("--out", em.out, "Output model JSON")->required();

  ExportArgs ex;
  auto* exportc = app.add_subcommand("export-plots", "Aggregate results into plot-ready tables");
  exportc->add_option("--histories", ex.histories, "history.csv files");
  exportc->add_option("--nse", ex.nse, "NSE sweep CSV");
  exportc->add_option("--reports", ex.reports, "Attack report JSON files");
  exportc->add_option("--models", ex.models, "Model JSON files for trajectory tables");
  exportc->add_option("--data", ex.data, "Dataset directory for the trajectory input");
  exportc->add_option("--nominal-sigma", ex.nominal_sigma, "Amplitude used for median NSE");
  exportc->add_option("--trajectory-sigma", ex.trajectory_sigma, "Amplitude of the trajectory input");
  exportc->add_option("--trajectory-realization", ex.trajectory_realization, "Realization index");
  exportc->add_option("--out", ex.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << "error: " << e.what() << '\n';
    return kValidation;
  }

  const Console con{out, err, quiet};
  try {
    if (*datagen) return cmd_datagen(dg, con);
    if (*trainc) return cmd_train(tr, con);
    if (*evalc) return cmd_eval(ev, con);
    if (*attack) return cmd_attack(at, con);
    if (*certify) return cmd_certify(ce, con);
    if (*embed) return cmd_embed(em, con);
    if (*exportc) return cmd_export(ex, con);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const json::exception& e) {
    err << "error: malformed JSON value: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kValidation;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"rrnn"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rrnn::cli
