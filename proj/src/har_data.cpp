#include "harstack/har_data.hpp"

#include "harstack/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace harstack {

namespace fs = std::filesystem;

const std::vector<std::string>& har_class_names() {
  static const std::vector<std::string> names{"WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS",
                                              "SITTING", "STANDING",         "LAYING"};
  return names;
}

std::string to_string(HarSplit split) { return split == HarSplit::train ? "train" : "test"; }

namespace {

std::ifstream open_input(const fs::path& path) {
  if (!fs::exists(path)) throw NotFoundError("missing file " + path.string());
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return in;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

/// Parses whitespace-separated reals; returns false on a malformed token.
bool parse_reals(std::string_view line, std::vector<double>& out) {
  out.clear();
  const char* p = line.data();
  const char* end = p + line.size();
  while (true) {
    while (p != end && is_space(*p)) ++p;
    if (p == end) return true;
    if (*p == '+') ++p;
    double v = 0.0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next != end && !is_space(*next))) return false;
    out.push_back(v);
    p = next;
  }
}

bool blank(std::string_view line) {
  for (char c : line)
    if (!is_space(c)) return false;
  return true;
}

std::vector<std::string> read_activity_labels(const fs::path& path) {
  auto in = open_input(path);
  std::map<int, std::string> by_id;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream fields(line);
    int id = 0;
    std::string name;
    if (!(fields >> id >> name)) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected \"<id> <name>\"");
    }
    by_id[id] = name;
  }
  std::vector<std::string> names;
  for (int id = 1; id <= kHarClassCount; ++id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError(path.string() + ": no entry for activity " + std::to_string(id));
    names.push_back(it->second);
  }
  return names;
}

}  // namespace

namespace {

/// Accepts either a directory holding the split files directly or the
/// dataset root with train/ and test/ subdirectories.
fs::path locate(const fs::path& dir, const std::string& subdir, const std::string& name) {
  if (fs::exists(dir / name)) return dir / name;
  if (!subdir.empty() && fs::exists(dir / subdir / name)) return dir / subdir / name;
  if (subdir.empty() && dir.has_parent_path() && fs::exists(dir.parent_path() / name)) return dir.parent_path() / name;
  return dir / name;
}

}  // namespace

Dataset load_har_split(const fs::path& dir, HarSplit split, Index expected_features) {
  if (!fs::is_directory(dir)) throw NotFoundError("data directory not found: " + dir.string());
  const std::string tag = to_string(split);
  const fs::path x_path = locate(dir, tag, "X_" + tag + ".txt");
  const fs::path y_path = locate(dir, tag, "y_" + tag + ".txt");
  const fs::path names_path = locate(dir, "", "activity_labels.txt");

  Dataset d;
  d.class_names = read_activity_labels(names_path);

  std::vector<double> values;
  std::vector<double> row;
  std::size_t n_rows = 0;
  {
    auto in = open_input(x_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      if (!parse_reals(line, row)) {
        throw ParseError(x_path.string() + ":" + std::to_string(line_no) + ": malformed number");
      }
      if (static_cast<Index>(row.size()) != expected_features) {
        throw ParseError(x_path.string() + ":" + std::to_string(line_no) + ": expected " +
                         std::to_string(expected_features) + " fields, found " + std::to_string(row.size()));
      }
      for (double v : row) {
        if (!std::isfinite(v)) {
          throw ValidationError(x_path.string() + ":" + std::to_string(line_no) + ": non-finite value");
        }
      }
      values.insert(values.end(), row.begin(), row.end());
      ++n_rows;
    }
  }
  {
    auto in = open_input(y_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (blank(line)) continue;
      std::istringstream fields(line);
      int label = 0;
      std::string rest;
      if (!(fields >> label) || (fields >> rest)) {
        throw ParseError(y_path.string() + ":" + std::to_string(line_no) + ": expected one integer label");
      }
      if (label < 1 || label > kHarClassCount) {
        throw ValidationError(y_path.string() + ":" + std::to_string(line_no) + ": label " +
                              std::to_string(label) + " outside 1-6");
      }
      d.y.push_back(label - 1);
    }
  }
  if (d.y.size() != n_rows) {
    throw ValidationError(tag + " split has " + std::to_string(n_rows) + " feature rows but " +
                          std::to_string(d.y.size()) + " labels");
  }
  d.X = Eigen::Map<const Matrix>(values.data(), static_cast<Index>(n_rows), expected_features);
  return d;
}

void save_har_split(const fs::path& dir, HarSplit split, const Dataset& data) {
  fs::create_directories(dir);
  const std::string tag = to_string(split);
  {
    std::unique_ptr<std::FILE, int (*)(std::FILE*)> out(std::fopen((dir / ("X_" + tag + ".txt")).c_str(), "w"),
                                                        &std::fclose);
    if (!out) throw NotFoundError("cannot write into " + dir.string());
    for (Index i = 0; i < data.X.rows(); ++i) {
      for (Index j = 0; j < data.X.cols(); ++j) std::fprintf(out.get(), " %.14e", data.X(i, j));
      std::fputc('\n', out.get());
    }
  }
  {
    std::ofstream out(dir / ("y_" + tag + ".txt"));
    for (ClassLabel c : data.y) out << c + 1 << '\n';
  }
  {
    std::ofstream out(dir / "activity_labels.txt");
    const auto& names = data.class_names.empty() ? har_class_names() : data.class_names;
    for (std::size_t k = 0; k < names.size(); ++k) out << k + 1 << ' ' << names[k] << '\n';
  }
}

void stratified_partition(std::span<const ClassLabel> y, int n_classes, double fraction_a, RngSeed seed,
                          std::vector<std::size_t>& rows_a, std::vector<std::size_t>& rows_b) {
  if (!(fraction_a > 0.0 && fraction_a < 1.0)) {
    throw ValidationError("split fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || y[i] >= n_classes) throw ValidationError("label out of range");
    by_class[static_cast<std::size_t>(y[i])].push_back(i);
  }
  rows_a.clear();
  rows_b.clear();
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    if (members.size() < 2) throw ValidationError("class " + std::to_string(c) + " has fewer than 2 samples");
    Rng rng = make_stream(seed, "stratified-split", c);
    shuffle(members, rng);
    auto take = static_cast<std::size_t>(std::llround(fraction_a * static_cast<double>(members.size())));
    take = std::clamp<std::size_t>(take, 1, members.size() - 1);
    rows_a.insert(rows_a.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
    rows_b.insert(rows_b.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
  }
  std::sort(rows_a.begin(), rows_a.end());
  std::sort(rows_b.begin(), rows_b.end());
}

Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
  return Dataset{take_rows(d.X, rows), take_labels(d.y, rows), d.class_names};
}

SplitPair stratified_split(const Dataset& d, double fraction_a, RngSeed seed) {
  SplitPair pair;
  int n_classes = d.class_names.empty() ? infer_n_classes(d.y) : d.n_classes();
  stratified_partition(d.y, n_classes, fraction_a, seed, pair.rows_a, pair.rows_b);
  pair.part_a = subset(d, pair.rows_a);
  pair.part_b = subset(d, pair.rows_b);
  return pair;
}

}  // namespace harstack
