#include "pmn/error.hpp"
#include "pmn/pipelines.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace pmn {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  std::string out(s.substr(first, last - first + 1));
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
  return out;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<int> parse_int(const std::string& s) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// One side of a partition spec: indices (1-based ranges) or header names.
std::vector<int> parse_group(const std::string& text, int m, const std::vector<std::string>& header,
                             const std::string& spec) {
  std::vector<int> out;
  for (const auto& item : split(text, ',')) {
    if (item.empty()) throw ParseError("partition '" + spec + "': empty item");
    const auto dash = item.find('-', 1);
    const auto lo_s = dash == std::string::npos ? item : trim(item.substr(0, dash));
    const auto hi_s = dash == std::string::npos ? item : trim(item.substr(dash + 1));
    const auto lo = parse_int(lo_s);
    const auto hi = parse_int(hi_s);
    if (lo && hi) {
      if (*lo < 1 || *hi > m || *lo > *hi) {
        throw ParseError("partition '" + spec + "': range " + item + " outside 1.." + std::to_string(m));
      }
      for (int u = *lo; u <= *hi; ++u) out.push_back(u - 1);
      continue;
    }
    const auto it = std::find(header.begin(), header.end(), item);
    if (it == header.end()) throw ParseError("partition '" + spec + "': unknown column name '" + item + "'");
    out.push_back(static_cast<int>(it - header.begin()));
  }
  return out;
}

}  // namespace

Partition parse_partition(const std::string& spec, int m, const std::vector<std::string>& header) {
  const auto bar = spec.find('|');
  if (bar == std::string::npos || spec.find('|', bar + 1) != std::string::npos) {
    throw ParseError("partition '" + spec + "': expected exactly one '|' between the two groups");
  }
  auto g1 = parse_group(spec.substr(0, bar), m, header, spec);
  auto g2 = parse_group(spec.substr(bar + 1), m, header, spec);
  try {
    return Partition(std::move(g1), std::move(g2));
  } catch (const SpecError& e) {
    throw ParseError("partition '" + spec + "': " + e.what());
  }
}

std::string format_partition(const Partition& p) {
  auto side = [](const std::vector<int>& g) {
    std::string out;
    for (std::size_t i = 0; i < g.size();) {
      std::size_t j = i;
      while (j + 1 < g.size() && g[j + 1] == g[j] + 1) ++j;
      if (!out.empty()) out += ',';
      out += std::to_string(g[i] + 1);
      if (j > i) out += '-' + std::to_string(g[j] + 1);
      i = j + 1;
    }
    return out;
  };
  return side(p.group1()) + "|" + side(p.group2());
}

LoadedDataset parse_csv_dataset(const std::string& text, const std::string& partition_spec, const LoadOptions& options,
                                const std::string& source) {
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_no;
  {
    std::istringstream in(text);
    std::string line;
    int no = 0;
    while (std::getline(in, line)) {
      ++no;
      if (trim(line).empty()) continue;
      rows.push_back(split(line, ','));
      line_no.push_back(no);
    }
  }
  if (rows.empty()) throw ParseError(source + ": no data rows");

  bool has_header = false;
  if (options.header) {
    has_header = *options.header;
  } else if (options.mode == CellMode::categorical) {
    const bool first_codes = std::all_of(rows[0].begin(), rows[0].end(), [](const auto& c) { return parse_int(c).has_value(); });
    const bool rest_codes = rows.size() > 1 && std::all_of(rows[1].begin(), rows[1].end(), [](const auto& c) {
                              return parse_int(c).has_value();
                            });
    has_header = !first_codes && rest_codes;
  } else {
    has_header = std::any_of(rows[0].begin(), rows[0].end(), [](const auto& c) { return !parse_number(c).has_value(); });
  }

  const std::size_t width = rows[0].size();
  std::vector<std::string> names;
  std::size_t first = 0;
  if (has_header) {
    names = rows[0];
    std::set<std::string> seen;
    for (const auto& nm : names) {
      if (!seen.insert(nm).second) throw ParseError(source + ":" + std::to_string(line_no[0]) + ": duplicate column '" + nm + "'");
    }
    first = 1;
  } else {
    for (std::size_t u = 0; u < width; ++u) names.push_back("x" + std::to_string(u + 1));
  }
  const auto n = static_cast<Eigen::Index>(rows.size() - first);
  Eigen::MatrixXd samples(n, static_cast<Eigen::Index>(width));
  std::vector<std::string> dictionary;
  std::unordered_map<std::string, int> codes;
  bool tokens = false;
  if (options.mode == CellMode::categorical) {
    for (std::size_t r = first; r < rows.size() && !tokens; ++r) {
      for (const auto& c : rows[r]) tokens = tokens || !parse_int(c).has_value();
    }
  }

  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto where = source + ":" + std::to_string(line_no[r]);
    if (rows[r].size() != width) {
      throw ParseError(where + ": expected " + std::to_string(width) + " cells, found " + std::to_string(rows[r].size()));
    }
    for (std::size_t u = 0; u < width; ++u) {
      const auto& cell = rows[r][u];
      const auto i = static_cast<Eigen::Index>(r - first);
      const auto col = static_cast<Eigen::Index>(u);
      const auto cell_name = where + ", column " + std::to_string(u + 1) + " (" + names[u] + ")";
      if (options.mode == CellMode::categorical && tokens) {
        auto [it, inserted] = codes.emplace(cell, static_cast<int>(dictionary.size()));
        if (inserted) dictionary.push_back(cell);
        samples(i, col) = it->second;
        continue;
      }
      const auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) throw ParseError(cell_name + ": '" + cell + "' is not a number");
      if (options.mode == CellMode::vote && *v != 1.0 && *v != -1.0 && *v != 0.0) {
        throw ParseError(cell_name + ": vote '" + cell + "' outside {1, -1, 0}");
      }
      if (options.mode == CellMode::categorical && (*v < 0 || *v != std::floor(*v))) {
        throw ParseError(cell_name + ": '" + cell + "' is not a nonnegative integer code");
      }
      samples(i, col) = *v;
    }
  }

  Partition partition = parse_partition(partition_spec, static_cast<int>(width), has_header ? names : std::vector<std::string>{});
  Domain domain = Domain::continuous();
  if (options.mode == CellMode::categorical) {
    int k = options.categories;
    const int observed = samples.size() ? static_cast<int>(samples.maxCoeff()) + 1 : 1;
    if (k == 0) k = tokens ? static_cast<int>(dictionary.size()) : observed;
    if (observed > k) throw ParseError(source + ": code " + std::to_string(observed - 1) + " exceeds k=" + std::to_string(k));
    domain = Domain::categorical(k);
  }
  try {
    return {Dataset(std::move(samples), std::move(partition), domain), std::move(names), std::move(dictionary)};
  } catch (const Error& e) {
    throw ParseError(source + ": " + e.what());
  }
}

LoadedDataset load_csv_dataset(const std::filesystem::path& path, const std::string& partition_spec,
                               const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv_dataset(ss.str(), partition_spec, options, path.string());
}

std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buf, ptr);
}

void write_csv_dataset(const Dataset& data, const std::vector<std::string>& names, const std::filesystem::path& path) {
  if (!names.empty() && static_cast<int>(names.size()) != data.m()) {
    throw InvalidDimension("write_csv_dataset: names do not match the column count");
  }
  std::string out;
  for (int u = 0; u < data.m(); ++u) {
    if (u) out += ',';
    out += names.empty() ? "x" + std::to_string(u + 1) : names[static_cast<std::size_t>(u)];
  }
  out += '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (int u = 0; u < data.m(); ++u) {
      if (u) out += ',';
      out += format_double(data.samples()(i, u));
    }
    out += '\n';
  }
  write_text(path, out);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pmn
