// Command-line front end: detect / semi / dp / propcheck subcommands over
// numeric CSV datasets. Outputs land in --out-dir as scores.csv,
// metrics.json and trajectory.jsonl.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odim/odim.hpp"
#include "odim/params_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonOpts {
  std::string data_path;
  std::string label_col;
  std::string out_dir = "odim-out";
  std::string scaler = "minmax";
  std::string delimiter = ",";
  bool no_header = false;
  bool save_models = false;
  bool normalize_member_scores = false;
  std::size_t latent_dim = 5;
  std::size_t hidden = 50;
  std::size_t samples_k = 50;
  std::size_t nu = 10;
  std::size_t npat = 10;
  std::size_t batch = 128;
  std::size_t ensemble = 10;
  std::size_t threads = 0;
  double lr = 5e-4;
  std::uint64_t seed = 0;
};

void add_common_options(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--data", o.data_path, "input CSV file")->required();
  cmd->add_option("--label-col", o.label_col,
                  "label column name or 0-based index (0/1 labels)");
  cmd->add_option("--out-dir", o.out_dir, "output directory");
  cmd->add_option("--scaler", o.scaler, "feature scaling: minmax or standard")
      ->check(CLI::IsMember({"minmax", "standard"}));
  cmd->add_option("--delimiter", o.delimiter, "CSV delimiter (single character)");
  cmd->add_flag("--no-header", o.no_header, "CSV has no header row");
  cmd->add_flag("--save-models", o.save_models,
                "write each member's snapshot parameters to out-dir");
  cmd->add_flag("--normalize-member-scores", o.normalize_member_scores,
                "min-max normalize each member's losses before ensembling");
  cmd->add_option("--latent-dim", o.latent_dim, "latent dimension d");
  cmd->add_option("--hidden", o.hidden, "hidden layer width");
  cmd->add_option("--samples-k", o.samples_k, "IWAE sample count K");
  cmd->add_option("--nu", o.nu, "updates per stopping-rule check (N_u)");
  cmd->add_option("--npat", o.npat, "patience (N_pat)");
  cmd->add_option("--batch", o.batch, "minibatch size");
  cmd->add_option("--ensemble", o.ensemble, "number of ensembled models B");
  cmd->add_option("--threads", o.threads, "worker threads (0 = all cores)");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--seed", o.seed, "random seed");
}

odim::TrainConfig make_config(const CommonOpts& o) {
  odim::TrainConfig cfg;
  cfg.k_samples = o.samples_k;
  cfg.n_u = o.nu;
  cfg.n_pat = o.npat;
  cfg.ensemble = o.ensemble;
  cfg.batch = o.batch;
  cfg.lr = o.lr;
  cfg.latent_dim = o.latent_dim;
  cfg.hidden_dim = o.hidden;
  cfg.seed = o.seed;
  cfg.scaler = o.scaler == "standard" ? odim::ScalerKind::Standardize
                                      : odim::ScalerKind::MinMax;
  cfg.threads = o.threads;
  cfg.normalize_member_scores = o.normalize_member_scores;
  return cfg;
}

odim::Dataset load_dataset(const CommonOpts& o) {
  odim::DatasetFile f;
  f.path = o.data_path;
  f.header = !o.no_header;
  f.label_column = o.label_col;
  if (o.delimiter.size() != 1)
    throw odim::ArgumentError("--delimiter must be a single character");
  f.delimiter = o.delimiter[0];
  return odim::load_csv(f);
}

void write_scores_csv(const fs::path& path, const odim::ScoreReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw odim::DataError("cannot write " + path.string());
  out << "index,score" << (report.labels ? ",label" : "") << "\n";
  char buf[64];
  for (std::size_t i = 0; i < report.scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g", i, report.scores[i]);
    out << buf;
    if (report.labels) out << ',' << (*report.labels)[i];
    out << '\n';
  }
}

void write_trajectory_jsonl(const fs::path& path, const odim::ScoreReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw odim::DataError("cannot write " + path.string());
  for (std::size_t b = 0; b < report.members.size(); ++b) {
    for (const auto& c : report.members[b].trajectory) {
      json row;
      row["member"] = b;
      row["update"] = c.update;
      row["wd"] = c.wd;
      row["sec"] = c.seconds;
      out << row.dump() << '\n';
    }
  }
}

json config_echo(const CommonOpts& o, const std::string& mode) {
  json j;
  j["mode"] = mode;
  j["data"] = o.data_path;
  j["label_col"] = o.label_col;
  j["scaler"] = o.scaler;
  j["latent_dim"] = o.latent_dim;
  j["hidden"] = o.hidden;
  j["samples_k"] = o.samples_k;
  j["nu"] = o.nu;
  j["npat"] = o.npat;
  j["batch"] = o.batch;
  j["ensemble"] = o.ensemble;
  j["lr"] = o.lr;
  j["seed"] = o.seed;
  j["threads"] = o.threads;
  j["normalize_member_scores"] = o.normalize_member_scores;
  return j;
}

void write_metrics_json(const fs::path& path, json j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw odim::DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int finish_run(const CommonOpts& o, const odim::ScoreReport& report, json metrics,
               double seconds) {
  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);

  metrics["n_samples"] = report.scores.size();
  metrics["runtime_seconds"] = seconds;
  if (report.auc) metrics["auc"] = *report.auc;
  if (report.average_precision) metrics["pr"] = *report.average_precision;
  json wd = json::array(), upd = json::array(), sec = json::array();
  for (const auto& m : report.members) {
    wd.push_back(m.snapshot.wd);
    upd.push_back(m.snapshot.update_count);
    sec.push_back(m.seconds);
  }
  metrics["member_wd"] = wd;
  metrics["member_best_update"] = upd;
  metrics["member_seconds"] = sec;
  metrics["warnings"] = report.warnings;

  write_scores_csv(dir / "scores.csv", report);
  write_trajectory_jsonl(dir / "trajectory.jsonl", report);
  write_metrics_json(dir / "metrics.json", metrics);

  if (o.save_models) {
    for (std::size_t b = 0; b < report.members.size(); ++b) {
      const auto& snap = report.members[b].snapshot;
      odim::save_params(snap.params, odim::member_seed(o.seed, b),
                        (dir / ("member_" + std::to_string(b) + ".odim")).string());
    }
  }

  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "scored " << report.scores.size() << " samples";
  if (report.auc) std::cout << "  auc=" << *report.auc;
  if (report.average_precision) std::cout << "  pr=" << *report.average_precision;
  std::cout << "  (" << seconds << " s)\n";
  std::cout << "outputs in " << fs::absolute(dir).string() << '\n';
  return 0;
}

std::vector<std::size_t> read_labeled_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw odim::DataError("cannot open labeled-rows file: " + path);
  std::vector<std::size_t> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t;
    for (char c : line)
      if (c != ' ' && c != '\t' && c != '\r') t.push_back(c);
    if (t.empty()) continue;
    try {
      rows.push_back(std::stoull(t));
    } catch (...) {
      throw odim::DataError(path + ": line " + std::to_string(lineno) +
                            ": expected a row index, got '" + t + "'");
    }
  }
  return rows;
}

int cmd_detect(const CommonOpts& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const odim::Dataset ds = load_dataset(o);
  const odim::TrainConfig cfg = make_config(o);
  const odim::ScoreReport report =
      odim::run_odim(ds.features, cfg, ds.labels ? &*ds.labels : nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return finish_run(o, report, config_echo(o, "detect"), secs);
}

int cmd_semi(const CommonOpts& o, const std::string& labeled_path, double gamma,
             double u) {
  const auto t0 = std::chrono::steady_clock::now();
  const odim::Dataset ds = load_dataset(o);
  odim::TrainConfig cfg = make_config(o);
  cfg.semi_gamma = gamma;
  cfg.semi_u = u;
  const std::vector<std::size_t> rows = read_labeled_rows(labeled_path);
  const odim::ScoreReport report = odim::run_odim_semisupervised(
      ds.features, rows, cfg, ds.labels ? &*ds.labels : nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = config_echo(o, "semi");
  metrics["gamma"] = gamma;
  metrics["cubo_u"] = u;
  metrics["labeled_rows"] = rows.size();
  return finish_run(o, report, std::move(metrics), secs);
}

int cmd_dp(const CommonOpts& o, double clip, double noise_mult,
           std::uint64_t dp_updates) {
  const auto t0 = std::chrono::steady_clock::now();
  const odim::Dataset ds = load_dataset(o);
  odim::TrainConfig cfg = make_config(o);
  odim::DpTrainConfig dp;
  dp.mech.clip_norm = clip;
  dp.mech.noise_mult = noise_mult;
  dp.mech.group_size = cfg.batch;
  dp.update_budget = dp_updates;
  cfg.dp = dp;
  const odim::ScoreReport report =
      odim::run_odim(ds.features, cfg, ds.labels ? &*ds.labels : nullptr);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json metrics = config_echo(o, "dp");
  metrics["dp_clip"] = clip;
  metrics["dp_noise_mult"] = noise_mult;
  metrics["dp_updates"] = dp_updates;
  return finish_run(o, report, std::move(metrics), secs);
}

struct PropcheckOpts {
  std::size_t dim = 20;
  std::size_t latent = 5;
  std::size_t inits = 10000;
  std::string norms = "10,30,100,300,1000";
  std::string direction = "ones";
  std::size_t prop2_dim = 10;
  std::size_t prop2_samples = 10000;
  std::uint64_t seed = 0;
  std::string out_dir = "odim-out";
};

int cmd_propcheck(const PropcheckOpts& o) {
  std::vector<double> norms;
  {
    std::stringstream ss(o.norms);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) norms.push_back(std::stod(tok));
    }
  }
  if (norms.size() < 2) throw odim::ArgumentError("--norms needs >= 2 values");

  odim::SeededRng rng1(odim::derive_seed(o.seed, 101));
  const odim::Prop1Result p1 = odim::prop1_scaling_experiment(
      o.dim, o.latent, o.inits, norms, rng1,
      o.direction == "random" ? odim::SweepDirection::Random
                              : odim::SweepDirection::AllOnes);

  odim::SeededRng rng2(odim::derive_seed(o.seed, 102));
  const odim::Prop2Result p2 =
      odim::prop2_norm_experiment(o.prop2_dim, o.prop2_samples, rng2);

  json j;
  j["gradient_scaling"] = {
      {"dim", o.dim},
      {"latent", o.latent},
      {"inits", o.inits},
      {"direction", o.direction},
      {"norms_l1", p1.norms_l1},
      {"norms_l2", p1.norms_l2},
      {"mean_sq_grad_norm", p1.estimates},
      {"slope_l1", p1.slope_l1},
      {"slope_l2", p1.slope_l2},
      {"slope_stderr", p1.slope_stderr},
      {"slope_ci95", {p1.ci_lo, p1.ci_hi}},
  };
  j["scaling_norm_gap"] = {
      {"dim", o.prop2_dim},
      {"samples", o.prop2_samples},
      {"minmax_inlier_mean", p2.minmax_inlier_mean},
      {"minmax_outlier_mean", p2.minmax_outlier_mean},
      {"minmax_gap", p2.minmax_gap},
      {"minmax_gap_se", p2.minmax_gap_se},
      {"standardize_inlier_mean", p2.standardize_inlier_mean},
      {"standardize_outlier_mean", p2.standardize_outlier_mean},
      {"standardize_gap", p2.standardize_gap},
      {"standardize_gap_se", p2.standardize_gap_se},
  };
  j["seed"] = o.seed;

  fs::create_directories(o.out_dir);
  write_metrics_json(fs::path(o.out_dir) / "propcheck.json", j);

  std::cout << "gradient-norm log-log slope vs l1-norm: " << p1.slope_l1 << "  (ci ["
            << p1.ci_lo << ", " << p1.ci_hi << "])\n";
  std::cout << "min-max l1 gap: " << p2.minmax_gap << " +- " << p2.minmax_gap_se
            << "   standardization l1 gap: " << p2.standardize_gap << " +- "
            << p2.standardize_gap_se << '\n';
  std::cout << "report in " << (fs::path(o.out_dir) / "propcheck.json").string()
            << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outlier detection with under-fitted deep generative models"};
  app.require_subcommand(1);

  CommonOpts detect_opts;
  auto* detect = app.add_subcommand(
      "detect", "unsupervised detection: score every row of the dataset");
  add_common_options(detect, detect_opts);

  CommonOpts semi_opts;
  std::string labeled_path;
  double gamma = 1.0, cubo_u = 2.0;
  auto* semi = app.add_subcommand(
      "semi", "semi-supervised detection with known outlier rows");
  add_common_options(semi, semi_opts);
  semi->add_option("--labeled-rows", labeled_path,
                   "file with one 0-based known-outlier row index per line")
      ->required();
  semi->add_option("--gamma", gamma, "weight of the CUBO term");
  semi->add_option("--cubo-u", cubo_u, "CUBO order u (> 1)");

  CommonOpts dp_opts;
  double clip = 20.0, noise_mult = 1.02;
  std::uint64_t dp_updates = 0;
  auto* dp = app.add_subcommand(
      "dp", "detection with differentially private updates (clip + noise)");
  add_common_options(dp, dp_opts);
  dp->add_option("--clip", clip, "per-sample gradient clipping norm C");
  dp->add_option("--noise-mult", noise_mult, "noise multiplier sigma");
  dp->add_option("--dp-updates", dp_updates, "update budget per member")->required();

  PropcheckOpts pc;
  auto* propcheck = app.add_subcommand(
      "propcheck", "numerical checks of the gradient-scaling and norm-gap claims");
  propcheck->add_option("--dim", pc.dim, "input dimension for the gradient sweep");
  propcheck->add_option("--latent-dim", pc.latent, "latent dimension");
  propcheck->add_option("--inits", pc.inits, "random initializations per norm");
  propcheck->add_option("--norms", pc.norms, "comma-separated target l1-norms");
  propcheck->add_option("--direction", pc.direction, "sweep direction: ones|random")
      ->check(CLI::IsMember({"ones", "random"}));
  propcheck->add_option("--prop2-dim", pc.prop2_dim, "dimension for the norm-gap check");
  propcheck->add_option("--prop2-samples", pc.prop2_samples,
                        "sample count for the norm-gap check");
  propcheck->add_option("--seed", pc.seed, "random seed");
  propcheck->add_option("--out-dir", pc.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (app.got_subcommand(detect)) return cmd_detect(detect_opts);
    if (app.got_subcommand(semi)) return cmd_semi(semi_opts, labeled_path, gamma, cubo_u);
    if (app.got_subcommand(dp)) return cmd_dp(dp_opts, clip, noise_mult, dp_updates);
    if (app.got_subcommand(propcheck)) return cmd_propcheck(pc);
  } catch (const odim::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 1;
}
