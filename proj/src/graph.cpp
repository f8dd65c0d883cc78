#include "graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rng.hpp"

namespace csna {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::size_t Graph::undirected_edge_count() const {
  std::size_t count = 0;
  for (const Edge& e : edges)
    if (e.src < e.dst) ++count;
  return count;
}

void Graph::validate() const {
  require(features.rows == n, ErrorKind::Contract,
          "graph: feature rows " + std::to_string(features.rows) + " != n " + std::to_string(n));
  require(labels.size() == n, ErrorKind::Contract,
          "graph: label count " + std::to_string(labels.size()) + " != n " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < num_classes, ErrorKind::Contract,
            "graph: label " + std::to_string(labels[i]) + " of node " + std::to_string(i) +
                " outside [0," + std::to_string(num_classes) + ")");
  }
  std::size_t loops = 0;
  std::vector<std::uint8_t> has_loop(n, 0);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Edge& ed = edges[e];
    require(ed.src < n && ed.dst < n, ErrorKind::Contract,
            "graph: edge " + std::to_string(e) + " endpoint out of range");
    if (e > 0) {
      require(edges[e - 1] < ed, ErrorKind::Contract, "graph: edges unsorted or duplicated at " + std::to_string(e));
    }
    if (ed.src == ed.dst) {
      ++loops;
      has_loop[ed.src] = 1;
    } else {
      require(std::binary_search(edges.begin(), edges.end(), Edge{ed.dst, ed.src}), ErrorKind::Contract,
              "graph: edge (" + std::to_string(ed.src) + "," + std::to_string(ed.dst) + ") has no reverse");
    }
  }
  if (has_self_loops) {
    require(loops == n, ErrorKind::Contract, "graph: expected one self-loop per node");
  } else {
    require(loops == 0, ErrorKind::Contract, "graph: unexpected self-loops");
  }
}

Graph make_graph(std::size_t n, std::size_t num_classes, Matrix<double> features,
                 std::vector<int> labels, const std::vector<std::pair<NodeId, NodeId>>& undirected,
                 std::string name) {
  Graph g;
  g.name = std::move(name);
  g.n = n;
  g.num_classes = num_classes;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.edges.reserve(undirected.size() * 2);
  for (const auto& [i, j] : undirected) {
    require(i < n && j < n, ErrorKind::Index, "make_graph: endpoint out of range");
    require(i != j, ErrorKind::Contract, "make_graph: self-loop in undirected edge list");
    g.edges.push_back({i, j});
    g.edges.push_back({j, i});
  }
  std::sort(g.edges.begin(), g.edges.end());
  const auto dup = std::adjacent_find(g.edges.begin(), g.edges.end());
  require(dup == g.edges.end(), ErrorKind::Contract, "make_graph: duplicate edge");
  g.validate();
  return g;
}

namespace {

[[noreturn]] void parse_fail(const fs::path& file, std::size_t line, const std::string& what) {
  fail(ErrorKind::Parse, file.filename().string() + ":" + std::to_string(line) + ": " + what);
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class F>
void for_each_line(const fs::path& file, F&& fn) {
  const std::string text = read_text(file);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    const std::string_view line = trim(std::string_view(text).substr(pos, end - pos));
    if (!line.empty()) fn(line, line_no);
    if (end == text.size()) break;
    pos = end + 1;
  }
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t c = line.find(',', pos);
    out.push_back(trim(line.substr(pos, c == std::string_view::npos ? std::string_view::npos : c - pos)));
    if (c == std::string_view::npos) break;
    pos = c + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Graph load_graph(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(read_text(meta_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "meta.json: " + std::string(e.what()));
  }
  std::size_t n = 0, d = 0, classes = 0;
  std::string name;
  try {
    n = meta.at("n").get<std::size_t>();
    d = meta.at("d").get<std::size_t>();
    classes = meta.at("C").get<std::size_t>();
    name = meta.value("name", dir.filename().string());
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "meta.json: " + std::string(e.what()));
  }
  require(n > 0 && d > 0 && classes > 0, ErrorKind::Parse, "meta.json: n, d and C must be positive");

  Matrix<double> features(n, d);
  std::size_t feature_rows = 0;
  const fs::path feat_path = dir / "features.csv";
  for_each_line(feat_path, [&](std::string_view line, std::size_t no) {
    if (feature_rows >= n) parse_fail(feat_path, no, "more than n=" + std::to_string(n) + " rows");
    const auto cells = split_commas(line);
    if (cells.size() != d)
      parse_fail(feat_path, no, "expected " + std::to_string(d) + " values, got " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < d; ++j) {
      double v = 0.0;
      if (!parse_number(cells[j], v) || !std::isfinite(v))
        parse_fail(feat_path, no, "bad real '" + std::string(cells[j]) + "' in column " + std::to_string(j));
      features(feature_rows, j) = v;
    }
    ++feature_rows;
  });
  if (feature_rows != n)
    parse_fail(feat_path, feature_rows, "expected " + std::to_string(n) + " rows, got " + std::to_string(feature_rows));

  std::vector<int> labels;
  labels.reserve(n);
  const fs::path label_path = dir / "labels.csv";
  for_each_line(label_path, [&](std::string_view line, std::size_t no) {
    if (labels.size() >= n) parse_fail(label_path, no, "more than n=" + std::to_string(n) + " rows");
    int y = 0;
    if (!parse_number(line, y)) parse_fail(label_path, no, "bad integer label '" + std::string(line) + "'");
    if (y < 0 || static_cast<std::size_t>(y) >= classes)
      parse_fail(label_path, no, "label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
    labels.push_back(y);
  });
  if (labels.size() != n)
    parse_fail(label_path, labels.size(), "expected " + std::to_string(n) + " labels, got " + std::to_string(labels.size()));

  std::vector<std::pair<NodeId, NodeId>> undirected;
  std::set<std::pair<NodeId, NodeId>> seen;
  const fs::path edge_path = dir / "edges.csv";
  for_each_line(edge_path, [&](std::string_view line, std::size_t no) {
    const auto cells = split_commas(line);
    if (cells.size() != 2) parse_fail(edge_path, no, "expected 'i,j'");
    std::uint64_t i = 0, j = 0;
    if (!parse_number(cells[0], i) || !parse_number(cells[1], j)) parse_fail(edge_path, no, "bad node index");
    if (i >= n || j >= n)
      parse_fail(edge_path, no, "node index " + std::to_string(std::max(i, j)) + " >= n=" + std::to_string(n));
    if (i == j) parse_fail(edge_path, no, "self-loop " + std::to_string(i) + "," + std::to_string(j));
    if (i > j) parse_fail(edge_path, no, "edge must satisfy i<j");
    const std::pair<NodeId, NodeId> key{static_cast<NodeId>(i), static_cast<NodeId>(j)};
    if (!seen.insert(key).second)
      parse_fail(edge_path, no, "duplicate edge " + std::to_string(i) + "," + std::to_string(j));
    undirected.push_back(key);
  });

  return make_graph(n, classes, std::move(features), std::move(labels), undirected, name);
}

void save_graph(const Graph& g, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
    return out;
  };
  {
    json meta = {{"n", g.n}, {"d", g.feature_dim()}, {"C", g.num_classes}, {"name", g.name}};
    auto out = open("meta.json");
    out << meta.dump(2) << '\n';
  }
  {
    auto out = open("features.csv");
    char buf[32];
    for (std::size_t i = 0; i < g.n; ++i) {
      for (std::size_t j = 0; j < g.feature_dim(); ++j) {
        const auto res = std::to_chars(buf, buf + sizeof buf, g.features(i, j));
        if (j) out << ',';
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    }
  }
  {
    auto out = open("labels.csv");
    for (int y : g.labels) out << y << '\n';
  }
  {
    auto out = open("edges.csv");
    for (const Edge& e : g.edges)
      if (e.src < e.dst) out << e.src << ',' << e.dst << '\n';
  }
}

Graph add_self_loops(const Graph& g) {
  if (g.has_self_loops) return g;
  Graph out = g;
  out.edges.reserve(g.edges.size() + g.n);
  for (NodeId i = 0; i < g.n; ++i) out.edges.push_back({i, i});
  std::sort(out.edges.begin(), out.edges.end());
  out.has_self_loops = true;
  return out;
}

double edge_homophily(const Graph& g) {
  std::size_t total = 0;
  std::size_t same = 0;
  for (const Edge& e : g.edges) {
    if (e.src >= e.dst) continue;
    ++total;
    if (g.labels[e.src] == g.labels[e.dst]) ++same;
  }
  return total == 0 ? 0.0 : static_cast<double>(same) / static_cast<double>(total);
}

std::vector<std::size_t> out_degrees(const Graph& g) {
  std::vector<std::size_t> deg(g.n, 0);
  for (const Edge& e : g.edges) ++deg[e.src];
  return deg;
}

SplitSet generate_splits(std::size_t n, std::array<double, 3> ratios, std::size_t k, std::uint64_t seed) {
  require(n >= 3, ErrorKind::Contract, "generate_splits: need n >= 3, got " + std::to_string(n));
  require(k >= 1, ErrorKind::Contract, "generate_splits: need k >= 1");
  for (double r : ratios) require(r >= 0.0, ErrorKind::Contract, "generate_splits: negative ratio");
  require(std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) < 1e-9, ErrorKind::Contract,
          "generate_splits: ratios must sum to 1");
  SplitSet set;
  set.seed = seed;
  set.ratios = ratios;
  // floor(r * n) with a tolerance so that e.g. 0.6 * 10 = 6 is not read as 5.999...
  const auto cut = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_train = cut(ratios[0]);
  const std::size_t n_val = cut(ratios[1]);
  for (std::size_t s = 0; s < k; ++s) {
    std::vector<NodeId> perm(n);
    std::iota(perm.begin(), perm.end(), NodeId{0});
    Pcg32 rng = substream(seed, "splits", s);
    rng.shuffle(std::span<NodeId>(perm));
    Split sp;
    sp.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    sp.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                  perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    sp.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    set.splits.push_back(std::move(sp));
  }
  return set;
}

void validate_splits(const SplitSet& s, std::size_t n) {
  for (std::size_t k = 0; k < s.splits.size(); ++k) {
    std::vector<std::uint8_t> seen(n, 0);
    const Split& sp = s.splits[k];
    for (const auto* part : {&sp.train, &sp.val, &sp.test}) {
      for (NodeId i : *part) {
        require(i < n, ErrorKind::Index, "split " + std::to_string(k) + ": node " + std::to_string(i) + " >= n");
        require(!seen[i], ErrorKind::Contract, "split " + std::to_string(k) + ": node " + std::to_string(i) + " repeated");
        seen[i] = 1;
      }
    }
    require(std::all_of(seen.begin(), seen.end(), [](auto v) { return v != 0; }), ErrorKind::Contract,
            "split " + std::to_string(k) + " does not cover every node");
  }
}

std::string splits_to_json(const SplitSet& s) {
  json j;
  j["seed"] = s.seed;
  j["ratios"] = s.ratios;
  j["splits"] = json::array();
  for (const Split& sp : s.splits) j["splits"].push_back({{"train", sp.train}, {"val", sp.val}, {"test", sp.test}});
  return j.dump(1) + "\n";
}

SplitSet splits_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SplitSet s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratios = j.at("ratios").get<std::array<double, 3>>();
    for (const auto& sp : j.at("splits")) {
      s.splits.push_back({sp.at("train").get<std::vector<NodeId>>(), sp.at("val").get<std::vector<NodeId>>(),
                          sp.at("test").get<std::vector<NodeId>>()});
    }
    return s;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, "splits.json: " + std::string(e.what()));
  }
}

}  // namespace csna
