#pragma once

#include "pmn/prmodel.hpp"
#include "pmn/solver.hpp"
#include "pmn/structure.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pmn {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------------------------
// Datasets on disk

/// `A-B|C-D` with 1-based inclusive ranges (comma lists of ranges or single indices allowed on
/// either side), or `name,...|name,...` against the CSV header.
Partition parse_partition(const std::string& spec, int m, const std::vector<std::string>& header = {});
/// Inverse of parse_partition for index specs, with runs compressed to ranges ("1-3,7|4-6").
std::string format_partition(const Partition& p);

enum class CellMode {
  numeric,      // every cell parses as a number
  categorical,  // integer codes or free-form tokens, dictionary-coded in first-appearance order
  vote,         // numeric and restricted to {1, -1, 0}
};

struct LoadOptions {
  CellMode mode = CellMode::numeric;
  std::optional<bool> header;  // auto-detected when unset: first row has a non-numeric cell
  int categories = 0;          // categorical: 0 infers k = max code + 1
};

struct LoadedDataset {
  Dataset data;
  std::vector<std::string> names;       // header, or x1..xm
  std::vector<std::string> dictionary;  // categorical tokens by code, empty for integer-coded input
};

/// Throws ParseError (with line numbers) for ragged rows, bad cells or a bad partition spec.
LoadedDataset load_csv_dataset(const std::filesystem::path& path, const std::string& partition_spec,
                               const LoadOptions& options = {});
LoadedDataset parse_csv_dataset(const std::string& text, const std::string& partition_spec,
                                const LoadOptions& options = {}, const std::string& source = "<memory>");

/// Shortest round-trip decimal representation.
std::string format_double(double x);

/// Header row of names, then one row per sample at full precision.
void write_csv_dataset(const Dataset& data, const std::vector<std::string>& names, const std::filesystem::path& path);

// ---------------------------------------------------------------------------------------------
// Application workflows

struct VoteDataset {
  Dataset data;
  std::vector<std::string> names;  // column order after grouping by party
  std::string group1_label;
  std::string group2_label;
};

/// Rows are questions, columns senators. Columns are regrouped by party (group1 = `group1_label`,
/// or the lexicographically first label). Throws ParseError on duplicate ids, missing labels,
/// more than two parties or a vote outside {1, -1, 0}.
VoteDataset build_vote_dataset(const Eigen::MatrixXd& votes, const std::vector<std::string>& senator_ids,
                               const std::vector<std::string>& party_labels,
                               const std::optional<std::string>& group1_label = std::nullopt);

struct SequencePairConfig {
  enum class Alphabet { real, coded };
  int window = 2;
  int step = 1;
  Alphabet alphabet = Alphabet::real;
  void validate() const;
};

struct Sequence {
  std::vector<double> values;  // real alphabet
  std::string codes;           // coded alphabet
  std::size_t size() const { return codes.empty() ? values.size() : codes.size(); }
};

/// Numbers separated by whitespace or commas (real), or FASTA/plain text letters (coded).
Sequence read_sequence(const std::filesystem::path& path, SequencePairConfig::Alphabet alphabet);

struct WindowedDataset {
  Dataset data;
  int windows1 = 0;
  int windows2 = 0;
  std::vector<int> starts1;  // 0-based start offset of each group1 window
  std::vector<int> starts2;
  std::string dictionary;  // coded alphabet: code -> character
};

/// Variable u of group1 is window u of seq1 (start u * step); sample i is offset i inside every window.
WindowedDataset window_sequences(const Sequence& seq1, const Sequence& seq2, const SequencePairConfig& cfg);

// ---------------------------------------------------------------------------------------------
// Exports and records

enum class EdgeFormat { dot, json, csv };
EdgeFormat parse_edge_format(const std::string& name);

struct DotStyle {
  double pen_scale = 10.0;  // penwidth = pen_scale * weight
};

/// DOT edges are red for positive and blue for negative influence. Names label nodes when given.
std::string render_edges(const EdgeList& edges, EdgeFormat format, const std::vector<std::string>& names = {},
                         const DotStyle& style = {});
void export_edges(const EdgeList& edges, EdgeFormat format, const std::filesystem::path& path,
                  const std::vector<std::string>& names = {}, const DotStyle& style = {});

/// A fitted model as stored in FIT.json.
struct FitRecord {
  double lambda = 0.0;
  std::string feature = "product";
  int categories = 0;
  bool include_diagonal = false;
  Partition partition;
  std::vector<std::string> names;
  ParamBlocks theta;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  double kkt_max_residual = 0.0;
  std::optional<CrossValidation> cv;

  FeatureMap feature_map() const;
};

nlohmann::ordered_json to_json(const FitRecord& rec);
FitRecord fit_record_from_json(const nlohmann::json& j);

struct PathRecord {
  std::string feature = "product";
  int categories = 0;
  bool include_diagonal = false;
  Partition partition;
  std::vector<std::string> names;
  std::string schedule;
  double lambda_max0 = 0.0;
  std::string stop_reason;
  std::vector<double> lambdas;
  std::vector<ParamBlocks> thetas;
  std::vector<bool> converged;
};

PathRecord make_path_record(const PathResult& path, const FitRecord& context, const std::string& schedule);
nlohmann::ordered_json to_json(const PathRecord& rec);
PathRecord path_record_from_json(const nlohmann::json& j);

struct TruthRecord {
  int m = 0;
  Partition partition;
  std::vector<VariablePair> pairs;
  nlohmann::ordered_json generator;
};

nlohmann::ordered_json to_json(const TruthRecord& rec);
TruthRecord truth_record_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const DiagnosticsReport& rep);

/// Inputs, options and argv of one CLI invocation; written next to every output as <out>.manifest.json.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string partition;
  std::string feature;
  std::string schedule;
  std::optional<std::uint64_t> seed;
};

nlohmann::ordered_json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
std::filesystem::path manifest_path(const std::filesystem::path& output);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace pmn
