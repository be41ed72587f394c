// pmn: command-line front end for partitioned Markov network structure learning.

#include "pmn/error.hpp"
#include "pmn/pipelines.hpp"
#include "pmn/prmodel.hpp"
#include "pmn/solver.hpp"
#include "pmn/structure.hpp"
#include "pmn/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::ordered_json;
using namespace pmn;

struct Invocation {
  std::vector<std::string> argv;  // without the program name
};

void write_manifest(const std::string& output, const Invocation& inv, const std::string& command,
                    std::vector<std::string> inputs, std::vector<std::string> outputs, const std::string& partition,
                    const std::string& feature, const std::string& schedule, std::optional<std::uint64_t> seed) {
  RunManifest m;
  m.command = command;
  m.argv = inv.argv;
  m.inputs = std::move(inputs);
  m.outputs = std::move(outputs);
  m.partition = partition;
  m.feature = feature;
  m.schedule = schedule;
  m.seed = seed;
  write_json(manifest_path(output), to_json(m));
}

CellMode parse_mode(const std::string& s) {
  if (s == "numeric") return CellMode::numeric;
  if (s == "categorical") return CellMode::categorical;
  if (s == "vote") return CellMode::vote;
  throw ConfigError("unknown --mode '" + s + "' (expected numeric, categorical or vote)");
}

struct DataOptions {
  std::string data;
  std::string partition;
  std::string feature = "product";
  std::string mode;  // defaults from the feature
  int categories = 0;
  bool diagonal = false;
  std::uint64_t seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--data", data, "dataset CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--partition", partition, "group spec, e.g. 1-40|41-50 or name,...|name,...")->required();
    cmd->add_option("--feature", feature, "product, sq or delta")->check(CLI::IsMember({"product", "sq", "delta"}));
    cmd->add_option("--mode", mode, "cell mode: numeric, categorical or vote");
    cmd->add_option("--categories", categories, "categorical k (0 infers it from the data)");
    cmd->add_flag("--diagonal", diagonal, "include univariate (u, u) blocks");
    cmd->add_option("--seed", seed, "seed for permuted-pair subsampling and CV folds");
  }

  LoadedDataset load() const {
    LoadOptions opts;
    opts.mode = mode.empty() ? (feature == "delta" ? CellMode::categorical : CellMode::numeric) : parse_mode(mode);
    opts.categories = categories;
    return load_csv_dataset(data, partition, opts);
  }

  FeatureMap feature_map(const Dataset& d) const {
    return FeatureMap::from_name(feature, d.domain().is_categorical() ? d.domain().categories : categories);
  }

  SolverConfig solver() const {
    SolverConfig cfg;
    cfg.seed = seed;
    cfg.include_diagonal = diagonal;
    return cfg;
  }
};

FitRecord fit_context(const LoadedDataset& loaded, const FeatureMap& f, const DataOptions& opts) {
  FitRecord rec;
  rec.feature = f.name();
  rec.categories = f.categories();
  rec.include_diagonal = opts.diagonal;
  rec.partition = loaded.data.partition();
  rec.names = loaded.names;
  return rec;
}

Dataset load_for_record(const std::string& path, const Partition& partition, const std::string& feature, int categories) {
  LoadOptions opts;
  opts.mode = FeatureMap::from_name(feature, categories).categorical() ? CellMode::categorical : CellMode::numeric;
  opts.categories = categories;
  auto loaded = load_csv_dataset(path, format_partition(partition), opts);
  if (loaded.data.m() != partition.m()) throw ConfigError("dataset width does not match the fitted model");
  return loaded.data;
}

int run(const std::vector<std::string>& args) {
  Invocation inv{args};
  CLI::App app{"Partitioned Markov network structure learning", "pmn"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset and its true support");
  gen->require_subcommand(1);
  double rho = 0.5;
  long n = 0;
  std::uint64_t seed = 0;
  std::string out, truth;
  int m1 = 40, m2 = 10, passage = 10, eig_rank = 15;
  auto* gauss = gen->add_subcommand("gaussian", "Gaussian with planted cross-group passages");
  auto* diamond = gen->add_subcommand("diamond", "concatenated 4-variable diamond blocks (MCMC)");
  DiamondSpec dspec;
  for (auto* cmd : {gauss, diamond}) {
    cmd->add_option("--rho", rho, "coupling coefficient")->required();
    cmd->add_option("--n", n, "number of samples")->required()->check(CLI::PositiveNumber);
    cmd->add_option("--seed", seed, "random seed")->required();
    cmd->add_option("--out", out, "dataset CSV")->required();
    cmd->add_option("--truth", truth, "true support JSON")->required();
  }
  gauss->add_option("--m1", m1, "group1 size");
  gauss->add_option("--m2", m2, "group2 size");
  gauss->add_option("--passage", passage, "number of planted passages");
  gauss->add_option("--eig-rank", eig_rank, "rank of the eigenvalue used for the passage fill");
  diamond->add_option("--blocks", dspec.blocks, "number of 4-variable blocks");
  diamond->add_option("--burn-in", dspec.burn_in, "discarded MCMC steps per block");
  diamond->add_option("--thinning", dspec.thinning, "MCMC steps between kept states");
  diamond->add_option("--proposal-std", dspec.proposal_std, "random-walk proposal std");

  // fit
  auto* fitc = app.add_subcommand("fit", "fit the group-lasso model at one lambda (or pick it by CV)");
  DataOptions fit_opts;
  fit_opts.add(fitc);
  std::optional<double> lambda;
  int cv_folds = 0;
  fitc->add_option("--lambda", lambda, "regularization (per-sample scaling)");
  fitc->add_option("--cv", cv_folds, "pick lambda by K-fold cross-validation");
  fitc->add_option("--out", out, "FIT.json")->required();

  // path
  auto* pathc = app.add_subcommand("path", "warm-started regularization path");
  DataOptions path_opts;
  path_opts.add(pathc);
  std::string schedule_text = "span:20:0.001";
  pathc->add_option("--schedule", schedule_text, "geom:COUNT[:FACTOR], span:COUNT[:RATIO] or until:K[:START[:FACTOR]]");
  pathc->add_option("--out", out, "PATH.json")->required();

  // roc
  auto* rocc = app.add_subcommand("roc", "ROC curve and AUC of a path against a true support");
  std::string path_in, truth_in;
  bool cross_only = false;
  rocc->add_option("--path", path_in, "PATH.json")->required()->check(CLI::ExistingFile);
  rocc->add_option("--truth", truth_in, "truth JSON")->required()->check(CLI::ExistingFile);
  rocc->add_flag("--cross-only", cross_only, "restrict the rates to cross-group blocks");
  rocc->add_option("--out", out, "ROC.csv")->required();

  // edges
  auto* edgesc = app.add_subcommand("edges", "export the cross-group edges of a fit");
  std::string fit_in, format = "dot", scope = "cross";
  std::size_t top = 0;
  double pen_scale = 10.0;
  edgesc->add_option("--fit", fit_in, "FIT.json")->required()->check(CLI::ExistingFile);
  edgesc->add_option("--top", top, "keep the K heaviest edges (0 keeps all)");
  edgesc->add_option("--format", format, "dot, json or csv");
  edgesc->add_option("--scope", scope, "cross or all")->check(CLI::IsMember({"cross", "all"}));
  edgesc->add_option("--pen-scale", pen_scale, "DOT penwidth per unit weight");
  edgesc->add_option("--out", out, "output file")->required();

  // align
  auto* alignc = app.add_subcommand("align", "window two sequences and learn cross-sequence window pairs");
  std::string seq1, seq2, alphabet = "real";
  SequencePairConfig scfg;
  double lambda_ratio = 0.5;
  std::optional<double> align_lambda;
  std::size_t align_top = 0;
  alignc->add_option("--seq1", seq1, "first sequence file")->required()->check(CLI::ExistingFile);
  alignc->add_option("--seq2", seq2, "second sequence file")->required()->check(CLI::ExistingFile);
  alignc->add_option("--window", scfg.window, "window size (samples per variable)")->required();
  alignc->add_option("--step", scfg.step, "stride between windows");
  alignc->add_option("--alphabet", alphabet, "real or coded")->check(CLI::IsMember({"real", "coded"}));
  alignc->add_option("--lambda", align_lambda, "regularization; defaults to --lambda-ratio * lambda_max");
  alignc->add_option("--lambda-ratio", lambda_ratio, "fraction of lambda_max used without --lambda");
  alignc->add_option("--top", align_top, "keep the K heaviest pairs (0 keeps all)");
  alignc->add_option("--seed", seed, "seed for permuted-pair subsampling");
  alignc->add_option("--out", out, "ALIGN.json")->required();

  // diag
  auto* diagc = app.add_subcommand("diag", "dependency and incoherence diagnostics at a fitted model");
  std::string diag_data;
  std::size_t cap = 2000;
  diagc->add_option("--fit", fit_in, "FIT.json")->required()->check(CLI::ExistingFile);
  diagc->add_option("--data", diag_data, "dataset CSV")->required()->check(CLI::ExistingFile);
  diagc->add_option("--truth", truth_in, "use this support instead of the fitted one")->check(CLI::ExistingFile);
  diagc->add_option("--cap", cap, "largest restricted Hessian dimension");
  diagc->add_option("--seed", seed, "seed for permuted-pair subsampling");
  diagc->add_option("--out", out, "DIAG.json")->required();

  // rerun
  auto* rerunc = app.add_subcommand("rerun", "repeat the command recorded in a manifest");
  std::string manifest_in;
  rerunc->add_option("--manifest", manifest_in, "*.manifest.json")->required()->check(CLI::ExistingFile);

  std::vector<const char*> cargv{"pmn"};
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "pmn: usage error: " << e.what() << " (see pmn --help)\n";
    return 2;
  }

  if (gauss->parsed()) {
    const auto spec = build_gaussian_spec(rho, m1, m2, passage, eig_rank);
    const auto data = sample_gaussian(spec, n, seed);
    write_csv_dataset(data, {}, out);
    TruthRecord tr;
    tr.m = spec.m;
    tr.partition = spec.partition();
    tr.pairs = truth_pairs(spec);
    tr.generator = {{"kind", "gaussian"}, {"rho", rho},           {"n", n},
                    {"seed", seed},       {"m1", m1},             {"m2", m2},
                    {"passage_size", passage}, {"eig_rank", eig_rank}, {"lambda_fill", spec.lambda_fill}};
    write_json(truth, to_json(tr));
    write_manifest(out, inv, "gen gaussian", {}, {out, truth}, format_partition(tr.partition), "", "", seed);
    return 0;
  }
  if (diamond->parsed()) {
    dspec.rho = rho;
    dspec.seed = seed;
    const auto sample = sample_diamond(dspec, n);
    for (const auto& w : sample.warnings) std::cerr << "pmn: warning: " << w << '\n';
    write_csv_dataset(sample.data, {}, out);
    TruthRecord tr;
    tr.m = sample.data.m();
    tr.partition = dspec.partition();
    tr.pairs = dspec.truth_pairs();
    tr.generator = {{"kind", "diamond"},       {"rho", rho},
                    {"n", n},                  {"seed", seed},
                    {"blocks", dspec.blocks},  {"burn_in", dspec.burn_in},
                    {"thinning", dspec.thinning}, {"proposal_std", dspec.proposal_std},
                    {"acceptance", sample.acceptance}};
    write_json(truth, to_json(tr));
    write_manifest(out, inv, "gen diamond", {}, {out, truth}, format_partition(tr.partition), "", "", seed);
    return 0;
  }
  if (fitc->parsed()) {
    if (!lambda && cv_folds == 0) throw ConfigError("fit needs --lambda or --cv");
    const auto loaded = fit_opts.load();
    const auto f = fit_opts.feature_map(loaded.data);
    const auto cfg = fit_opts.solver();
    auto rec = fit_context(loaded, f, fit_opts);
    double lam = lambda.value_or(0.0);
    if (cv_folds > 0) {
      std::vector<double> grid;
      if (lambda) grid.push_back(*lambda);
      const Objective full(loaded.data, f, build_pair_index(loaded.data.m(), cfg.include_diagonal, f.block_dim()),
                           cfg.pair_policy());
      const auto defaults = default_lambda_grid(lambda_max(full));
      grid.insert(grid.end(), defaults.begin(), defaults.end());
      rec.cv = cross_validate(loaded.data, f, grid, cv_folds, cfg, fit_opts.seed);
      lam = rec.cv->best_lambda;
    }
    const auto r = fit(loaded.data, f, lam, cfg);
    rec.lambda = lam;
    rec.theta = r.theta_hat;
    rec.objective_trace = r.objective_trace;
    rec.iterations = r.iterations;
    rec.converged = r.converged;
    rec.kkt_max_residual = r.kkt.max_residual;
    write_json(out, to_json(rec));
    write_manifest(out, inv, "fit", {fit_opts.data}, {out}, fit_opts.partition, rec.feature, "", fit_opts.seed);
    if (!r.converged) std::cerr << "pmn: warning: solver stopped before convergence (KKT " << r.kkt.max_residual << ")\n";
    return 0;
  }
  if (pathc->parsed()) {
    const auto schedule = Schedule::parse(schedule_text);
    const auto loaded = path_opts.load();
    const auto f = path_opts.feature_map(loaded.data);
    const auto path = lambda_path(loaded.data, f, schedule, path_opts.solver());
    const auto rec = make_path_record(path, fit_context(loaded, f, path_opts), schedule.to_string());
    write_json(out, to_json(rec));
    write_manifest(out, inv, "path", {path_opts.data}, {out}, path_opts.partition, rec.feature, rec.schedule,
                   path_opts.seed);
    return 0;
  }
  if (rocc->parsed()) {
    const auto path = path_record_from_json(read_json(path_in));
    const auto tr = truth_record_from_json(read_json(truth_in));
    if (path.thetas.empty()) throw ConfigError("path file has no entries");
    if (tr.m != path.partition.m()) throw ConfigError("truth and path disagree on the number of variables");
    const auto& index = path.thetas.front().index();
    const auto truth_set = support_from_pairs(index, tr.pairs);
    std::ostringstream os;
    os << "kind,lambda,tnr,tpr,value\n";
    std::vector<SupportSet> supports;
    for (const auto& th : path.thetas) supports.push_back(extract_support(th));
    RocCurve roc;
    if (cross_only) {
      // map cross-group blocks onto a compact universe
      std::vector<std::size_t> cross;
      for (std::size_t t = 0; t < index.size(); ++t) {
        if (path.partition.crosses(index.pair(t).u, index.pair(t).v)) cross.push_back(t);
      }
      auto compact = [&](const SupportSet& s) {
        SupportSet c;
        for (std::size_t i = 0; i < cross.size(); ++i)
          if (s.contains(cross[i])) c.active.insert(i);
        return c;
      };
      std::vector<SupportSet> compacted;
      for (const auto& s : supports) compacted.push_back(compact(s));
      roc = roc_curve(compacted, path.lambdas, compact(truth_set), cross.size());
    } else {
      roc = roc_curve(supports, path.lambdas, truth_set, index.size());
    }
    for (std::size_t i = 0; i < roc.raw.size(); ++i) {
      os << "raw," << format_double(roc.lambdas[i]) << ',' << format_double(roc.raw[i].tnr) << ','
         << format_double(roc.raw[i].tpr) << ",\n";
    }
    for (const auto& p : roc.envelope) os << "envelope,," << format_double(p.tnr) << ',' << format_double(p.tpr) << ",\n";
    os << "auc,,,," << format_double(roc.auc) << '\n';
    write_text(out, os.str());
    write_manifest(out, inv, "roc", {path_in, truth_in}, {out}, format_partition(path.partition), path.feature,
                   path.schedule, std::nullopt);
    return 0;
  }
  if (edgesc->parsed()) {
    const auto rec = fit_record_from_json(read_json(fit_in));
    auto edges = cross_group_edges(extract_support(rec.theta), rec.theta, rec.partition,
                                   scope == "all" ? EdgeList::Scope::all : EdgeList::Scope::cross_group_only);
    if (top > 0 && edges.edges.size() > top) edges.edges.resize(top);
    export_edges(edges, parse_edge_format(format), out, rec.names, DotStyle{pen_scale});
    write_manifest(out, inv, "edges", {fit_in}, {out}, format_partition(rec.partition), rec.feature, "", std::nullopt);
    return 0;
  }
  if (alignc->parsed()) {
    scfg.alphabet = alphabet == "coded" ? SequencePairConfig::Alphabet::coded : SequencePairConfig::Alphabet::real;
    const auto windowed = window_sequences(read_sequence(seq1, scfg.alphabet), read_sequence(seq2, scfg.alphabet), scfg);
    const auto& data = windowed.data;
    const auto f = scfg.alphabet == SequencePairConfig::Alphabet::coded
                       ? FeatureMap::kronecker_delta(data.domain().categories)
                       : FeatureMap::product();
    SolverConfig cfg;
    cfg.seed = seed;
    const Objective obj(data, f, build_pair_index(data.m(), false, 1), cfg.pair_policy());
    const double lmax = lambda_max(obj);
    const double lam = align_lambda.value_or(lambda_ratio * lmax);
    const auto r = fit(obj, lam, cfg);
    auto edges = cross_group_edges(extract_support(r.theta_hat), r.theta_hat, data.partition());
    if (align_top > 0 && edges.edges.size() > align_top) edges.edges.resize(align_top);
    ordered_json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "alignment";
    j["alphabet"] = alphabet;
    j["window"] = scfg.window;
    j["step"] = scfg.step;
    j["windows1"] = windowed.windows1;
    j["windows2"] = windowed.windows2;
    j["feature"] = f.name();
    j["lambda"] = lam;
    j["lambda_max0"] = lmax;
    j["converged"] = r.converged;
    j["pairs"] = ordered_json::array();
    for (const auto& e : edges.edges) {
      const int w1 = e.u;
      const int w2 = e.v - windowed.windows1;
      j["pairs"].push_back({{"window1", w1},
                            {"window2", w2},
                            {"start1", windowed.starts1[static_cast<std::size_t>(w1)]},
                            {"start2", windowed.starts2[static_cast<std::size_t>(w2)]},
                            {"weight", e.weight},
                            {"sign", e.sign}});
    }
    write_json(out, j);
    write_manifest(out, inv, "align", {seq1, seq2}, {out}, format_partition(data.partition()), f.name(), "", seed);
    return 0;
  }
  if (diagc->parsed()) {
    const auto rec = fit_record_from_json(read_json(fit_in));
    const auto data = load_for_record(diag_data, rec.partition, rec.feature, rec.categories);
    const auto f = rec.feature_map();
    std::vector<std::size_t> support;
    if (!truth_in.empty()) {
      const auto tr = truth_record_from_json(read_json(truth_in));
      const auto s = support_from_pairs(rec.theta.index(), tr.pairs);
      support.assign(s.active.begin(), s.active.end());
    } else {
      const auto s = extract_support(rec.theta);
      support.assign(s.active.begin(), s.active.end());
    }
    if (support.empty()) throw ConfigError("diag: the support is empty (fit at a smaller lambda or pass --truth)");
    PairPolicy policy = PairPolicy::automatic(seed);
    const auto rep = diagnostics(rec.theta, data, f, support, policy, cap);
    auto j = to_json(rep);
    if (rep.worst_block) {
      const auto p = rec.theta.index().pair(*rep.worst_block);
      j["worst_pair"] = {p.u, p.v};
    }
    write_json(out, j);
    std::vector<std::string> inputs{fit_in, diag_data};
    if (!truth_in.empty()) inputs.push_back(truth_in);
    write_manifest(out, inv, "diag", inputs, {out}, format_partition(rec.partition), rec.feature, "", seed);
    return 0;
  }
  if (rerunc->parsed()) {
    const auto m = manifest_from_json(read_json(manifest_in));
    return run(m.argv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "pmn: error: " << msg << '\n';
    return 1;
  }
}
