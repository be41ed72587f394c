#include "pmn/pipelines.hpp"

#include "pmn/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace pmn {

using nlohmann::json;
using nlohmann::ordered_json;

VoteDataset build_vote_dataset(const Eigen::MatrixXd& votes, const std::vector<std::string>& senator_ids,
                               const std::vector<std::string>& party_labels,
                               const std::optional<std::string>& group1_label) {
  const auto m = static_cast<std::size_t>(votes.cols());
  if (senator_ids.size() != m) throw ParseError("votes: expected " + std::to_string(m) + " senator ids");
  if (party_labels.size() != m) {
    throw ParseError("votes: missing party label (" + std::to_string(party_labels.size()) + " labels for " +
                     std::to_string(m) + " senators)");
  }
  std::set<std::string> seen;
  for (const auto& id : senator_ids) {
    if (!seen.insert(id).second) throw ParseError("votes: duplicate senator id '" + id + "'");
  }
  std::set<std::string> parties;
  for (std::size_t u = 0; u < m; ++u) {
    if (party_labels[u].empty()) throw ParseError("votes: missing party label for '" + senator_ids[u] + "'");
    parties.insert(party_labels[u]);
  }
  if (parties.size() != 2) throw ParseError("votes: expected exactly two parties, found " + std::to_string(parties.size()));
  const std::string first = group1_label.value_or(*parties.begin());
  if (!parties.count(first)) throw ParseError("votes: unknown party '" + first + "'");
  const std::string second = first == *parties.begin() ? *parties.rbegin() : *parties.begin();

  for (Eigen::Index q = 0; q < votes.rows(); ++q) {
    for (Eigen::Index u = 0; u < votes.cols(); ++u) {
      const double v = votes(q, u);
      if (v != 1.0 && v != -1.0 && v != 0.0) {
        throw ParseError("votes: question " + std::to_string(q + 1) + ", senator '" +
                         senator_ids[static_cast<std::size_t>(u)] + "' has vote " + std::to_string(v) +
                         " outside {1, -1, 0}");
      }
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t u = 0; u < m; ++u) {
    if (party_labels[u] == first) order.push_back(u);
  }
  const auto m1 = static_cast<int>(order.size());
  for (std::size_t u = 0; u < m; ++u) {
    if (party_labels[u] == second) order.push_back(u);
  }
  Eigen::MatrixXd grouped(votes.rows(), votes.cols());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < m; ++c) {
    grouped.col(static_cast<Eigen::Index>(c)) = votes.col(static_cast<Eigen::Index>(order[c]));
    names.push_back(senator_ids[order[c]]);
  }
  return {Dataset(std::move(grouped), Partition::contiguous(m1, static_cast<int>(m) - m1)), std::move(names), first,
          second};
}

void SequencePairConfig::validate() const {
  if (window < 2) throw ConfigError("sequence windows: window must be >= 2");
  if (step < 1) throw ConfigError("sequence windows: step must be >= 1");
}

Sequence read_sequence(const std::filesystem::path& path, SequencePairConfig::Alphabet alphabet) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Sequence seq;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (alphabet == SequencePairConfig::Alphabet::coded) {
      if (!line.empty() && (line[0] == '>' || line[0] == ';')) continue;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) seq.codes += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      }
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        seq.values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(no) + ": '" + tok + "' is not a number");
      }
    }
  }
  return seq;
}

WindowedDataset window_sequences(const Sequence& seq1, const Sequence& seq2, const SequencePairConfig& cfg) {
  cfg.validate();
  const bool coded = cfg.alphabet == SequencePairConfig::Alphabet::coded;
  const auto len1 = static_cast<int>(coded ? seq1.codes.size() : seq1.values.size());
  const auto len2 = static_cast<int>(coded ? seq2.codes.size() : seq2.values.size());
  if (cfg.window > len1 || cfg.window > len2) {
    throw ConfigError("sequence windows: window " + std::to_string(cfg.window) + " exceeds a sequence length (" +
                      std::to_string(len1) + ", " + std::to_string(len2) + ")");
  }
  WindowedDataset out{Dataset(Eigen::MatrixXd::Zero(2, 2), Partition::contiguous(1, 1)), 0, 0, {}, {}, {}};
  out.windows1 = (len1 - cfg.window) / cfg.step + 1;
  out.windows2 = (len2 - cfg.window) / cfg.step + 1;
  const int n = cfg.window;
  Eigen::MatrixXd samples(n, out.windows1 + out.windows2);

  std::array<int, 256> code{};
  code.fill(-1);
  if (coded) {
    std::set<char> alphabet(seq1.codes.begin(), seq1.codes.end());
    alphabet.insert(seq2.codes.begin(), seq2.codes.end());
    for (char c : alphabet) {
      code[static_cast<unsigned char>(c)] = static_cast<int>(out.dictionary.size());
      out.dictionary += c;
    }
  }
  auto value = [&](const Sequence& s, int pos) {
    return coded ? static_cast<double>(code[static_cast<unsigned char>(s.codes[static_cast<std::size_t>(pos)])])
                 : s.values[static_cast<std::size_t>(pos)];
  };
  for (int u = 0; u < out.windows1; ++u) {
    out.starts1.push_back(u * cfg.step);
    for (int i = 0; i < n; ++i) samples(i, u) = value(seq1, u * cfg.step + i);
  }
  for (int v = 0; v < out.windows2; ++v) {
    out.starts2.push_back(v * cfg.step);
    for (int i = 0; i < n; ++i) samples(i, out.windows1 + v) = value(seq2, v * cfg.step + i);
  }
  const Domain domain = coded ? Domain::categorical(std::max<int>(1, static_cast<int>(out.dictionary.size())))
                              : Domain::continuous();
  out.data = Dataset(std::move(samples), Partition::contiguous(out.windows1, out.windows2), domain);
  return out;
}

EdgeFormat parse_edge_format(const std::string& name) {
  if (name == "dot") return EdgeFormat::dot;
  if (name == "json") return EdgeFormat::json;
  if (name == "csv") return EdgeFormat::csv;
  throw ConfigError("unknown edge format '" + name + "' (expected dot, json or csv)");
}

namespace {

std::string node_name(int u, const std::vector<std::string>& names) {
  return names.empty() ? "x" + std::to_string(u + 1) : names.at(static_cast<std::size_t>(u));
}

std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string sign_name(int sign) { return sign > 0 ? "positive" : (sign < 0 ? "negative" : "zero"); }

}  // namespace

std::string render_edges(const EdgeList& edges, EdgeFormat format, const std::vector<std::string>& names,
                         const DotStyle& style) {
  std::ostringstream os;
  switch (format) {
    case EdgeFormat::dot: {
      os << "graph pmn {\n";
      std::set<int> nodes;
      for (const auto& e : edges.edges) nodes.insert({e.u, e.v});
      for (int u : nodes) os << "  " << dot_quote(node_name(u, names)) << ";\n";
      for (const auto& e : edges.edges) {
        os << "  " << dot_quote(node_name(e.u, names)) << " -- " << dot_quote(node_name(e.v, names))
           << " [color=" << (e.sign < 0 ? "blue" : "red") << ", penwidth=" << format_double(style.pen_scale * e.weight)
           << ", weight=" << format_double(e.weight) << "];\n";
      }
      os << "}\n";
      break;
    }
    case EdgeFormat::json: {
      ordered_json j;
      j["format_version"] = kFormatVersion;
      j["kind"] = "edges";
      j["scope"] = edges.scope == EdgeList::Scope::all ? "all" : "cross_group_only";
      j["edges"] = ordered_json::array();
      for (const auto& e : edges.edges) {
        j["edges"].push_back({{"u", e.u}, {"v", e.v}, {"u_name", node_name(e.u, names)},
                              {"v_name", node_name(e.v, names)}, {"weight", e.weight}, {"sign", sign_name(e.sign)}});
      }
      os << j.dump(2) << '\n';
      break;
    }
    case EdgeFormat::csv: {
      os << "u,v,u_name,v_name,weight,sign\n";
      for (const auto& e : edges.edges) {
        os << e.u << ',' << e.v << ',' << node_name(e.u, names) << ',' << node_name(e.v, names) << ','
           << format_double(e.weight) << ',' << sign_name(e.sign) << '\n';
      }
      break;
    }
  }
  return os.str();
}

void export_edges(const EdgeList& edges, EdgeFormat format, const std::filesystem::path& path,
                  const std::vector<std::string>& names, const DotStyle& style) {
  write_text(path, render_edges(edges, format, names, style));
}

// ---------------------------------------------------------------------------------------------

namespace {

ordered_json partition_json(const Partition& p) {
  return {{"group1", p.group1()}, {"group2", p.group2()}};
}

Partition partition_from(const json& j) {
  return Partition(j.at("group1").get<std::vector<int>>(), j.at("group2").get<std::vector<int>>());
}

void check_header(const json& j, const std::string& kind) {
  if (!j.contains("format_version") || j.at("format_version").get<int>() != kFormatVersion) {
    throw ParseError(kind + ": unsupported or missing format_version");
  }
  if (j.value("kind", std::string{}) != kind) throw ParseError("expected a '" + kind + "' document");
}

ordered_json support_json(const ParamBlocks& theta) {
  ordered_json out = ordered_json::array();
  for (std::size_t t = 0; t < theta.index().size(); ++t) {
    if (!theta.block(t).isZero(0.0)) out.push_back({theta.index().pair(t).u, theta.index().pair(t).v});
  }
  return out;
}

ParamBlocks theta_from(const json& j, int m, bool diag, int b) {
  const auto flat = j.get<std::vector<double>>();
  return ParamBlocks(build_pair_index(m, diag, b), Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size())));
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

FeatureMap FitRecord::feature_map() const { return FeatureMap::from_name(feature, categories); }

ordered_json to_json(const FitRecord& rec) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "fit";
  j["lambda"] = rec.lambda;
  j["feature"] = rec.feature;
  j["categories"] = rec.categories;
  j["block_dim"] = rec.theta.index().block_dim();
  j["include_diagonal"] = rec.include_diagonal;
  j["m"] = rec.partition.m();
  j["partition"] = partition_json(rec.partition);
  j["names"] = rec.names;
  j["converged"] = rec.converged;
  j["iterations"] = rec.iterations;
  j["kkt_max_residual"] = rec.kkt_max_residual;
  j["support"] = support_json(rec.theta);
  j["theta"] = to_vector(rec.theta.flat());
  j["objective_trace"] = rec.objective_trace;
  if (rec.cv) {
    j["cv"] = {{"best_lambda", rec.cv->best_lambda},
               {"lambdas", rec.cv->lambdas},
               {"mean_scores", rec.cv->mean_scores},
               {"folds", rec.cv->fold_scores.empty() ? 0 : rec.cv->fold_scores.front().size()}};
  }
  return j;
}

FitRecord fit_record_from_json(const json& j) {
  check_header(j, "fit");
  FitRecord rec;
  rec.lambda = j.at("lambda").get<double>();
  rec.feature = j.at("feature").get<std::string>();
  rec.categories = j.value("categories", 0);
  rec.include_diagonal = j.at("include_diagonal").get<bool>();
  rec.partition = partition_from(j.at("partition"));
  rec.names = j.value("names", std::vector<std::string>{});
  rec.theta = theta_from(j.at("theta"), j.at("m").get<int>(), rec.include_diagonal, j.at("block_dim").get<int>());
  rec.objective_trace = j.value("objective_trace", std::vector<double>{});
  rec.iterations = j.value("iterations", 0);
  rec.converged = j.value("converged", false);
  rec.kkt_max_residual = j.value("kkt_max_residual", 0.0);
  return rec;
}

PathRecord make_path_record(const PathResult& path, const FitRecord& context, const std::string& schedule) {
  PathRecord rec;
  rec.feature = context.feature;
  rec.categories = context.categories;
  rec.include_diagonal = context.include_diagonal;
  rec.partition = context.partition;
  rec.names = context.names;
  rec.schedule = schedule;
  rec.lambda_max0 = path.lambda_max0;
  rec.stop_reason = to_string(path.stop_reason);
  for (const auto& e : path.entries) {
    rec.lambdas.push_back(e.lambda);
    rec.thetas.push_back(e.fit.theta_hat);
    rec.converged.push_back(e.fit.converged);
  }
  return rec;
}

ordered_json to_json(const PathRecord& rec) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "path";
  j["feature"] = rec.feature;
  j["categories"] = rec.categories;
  j["block_dim"] = rec.thetas.empty() ? 1 : rec.thetas.front().index().block_dim();
  j["include_diagonal"] = rec.include_diagonal;
  j["m"] = rec.partition.m();
  j["partition"] = partition_json(rec.partition);
  j["names"] = rec.names;
  j["schedule"] = rec.schedule;
  j["lambda_max0"] = rec.lambda_max0;
  j["stop_reason"] = rec.stop_reason;
  j["entries"] = ordered_json::array();
  for (std::size_t i = 0; i < rec.lambdas.size(); ++i) {
    ordered_json e;
    e["lambda"] = rec.lambdas[i];
    e["support_size"] = extract_support(rec.thetas[i]).size();
    e["converged"] = static_cast<bool>(rec.converged[i]);
    e["support"] = support_json(rec.thetas[i]);
    e["theta"] = to_vector(rec.thetas[i].flat());
    j["entries"].push_back(std::move(e));
  }
  return j;
}

PathRecord path_record_from_json(const json& j) {
  check_header(j, "path");
  PathRecord rec;
  rec.feature = j.at("feature").get<std::string>();
  rec.categories = j.value("categories", 0);
  rec.include_diagonal = j.at("include_diagonal").get<bool>();
  rec.partition = partition_from(j.at("partition"));
  rec.names = j.value("names", std::vector<std::string>{});
  rec.schedule = j.value("schedule", std::string{});
  rec.lambda_max0 = j.value("lambda_max0", 0.0);
  rec.stop_reason = j.value("stop_reason", std::string{});
  const int m = j.at("m").get<int>();
  const int b = j.at("block_dim").get<int>();
  for (const auto& e : j.at("entries")) {
    rec.lambdas.push_back(e.at("lambda").get<double>());
    rec.thetas.push_back(theta_from(e.at("theta"), m, rec.include_diagonal, b));
    rec.converged.push_back(e.value("converged", false));
  }
  return rec;
}

ordered_json to_json(const TruthRecord& rec) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "truth";
  j["m"] = rec.m;
  j["partition"] = partition_json(rec.partition);
  j["pairs"] = ordered_json::array();
  for (const auto& p : rec.pairs) j["pairs"].push_back({p.u, p.v});
  j["generator"] = rec.generator;
  return j;
}

TruthRecord truth_record_from_json(const json& j) {
  check_header(j, "truth");
  TruthRecord rec;
  rec.m = j.at("m").get<int>();
  rec.partition = partition_from(j.at("partition"));
  for (const auto& p : j.at("pairs")) rec.pairs.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
  rec.generator = j.value("generator", ordered_json::object());
  return rec;
}

ordered_json to_json(const DiagnosticsReport& rep) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "diagnostics";
  j["support_size"] = rep.support_size;
  j["lambda_min"] = rep.lambda_min;
  j["degenerate"] = rep.degenerate;
  j["incoherence_margin"] = rep.incoherence_margin;
  j["worst_block"] = rep.worst_block ? ordered_json(*rep.worst_block) : ordered_json(nullptr);
  j["feature_bounds"] = {{"bound_inf", rep.feature_bounds.bound_inf},
                         {"bound_l2", rep.feature_bounds.bound_l2},
                         {"declared", rep.feature_bounds_declared}};
  j["ratio_bounds"] = {{"min", rep.ratio_min}, {"max", rep.ratio_max}};
  return j;
}

ordered_json to_json(const RunManifest& m) {
  ordered_json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = "manifest";
  j["tool"] = "pmn";
  j["tool_version"] = kToolVersion;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["partition"] = m.partition;
  j["feature"] = m.feature;
  j["schedule"] = m.schedule;
  j["seed"] = m.seed ? ordered_json(*m.seed) : ordered_json(nullptr);
  return j;
}

RunManifest manifest_from_json(const json& j) {
  check_header(j, "manifest");
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.partition = j.value("partition", std::string{});
  m.feature = j.value("feature", std::string{});
  m.schedule = j.value("schedule", std::string{});
  if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

std::filesystem::path manifest_path(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace pmn
