#include "dtr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

namespace dtr {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

// Parses "sK", "sK_J" or "aK".
std::optional<Factor> parse_factor(std::string_view token) {
  if (token.size() < 2) return std::nullopt;
  Factor f;
  if (token[0] == 's') {
    f.kind = Factor::Kind::State;
    const auto underscore = token.find('_');
    if (!parse_int(token.substr(1, underscore - 1), f.stage)) return std::nullopt;
    if (underscore != std::string_view::npos &&
        !parse_int(token.substr(underscore + 1), f.component)) {
      return std::nullopt;
    }
  } else if (token[0] == 'a') {
    f.kind = Factor::Kind::Action;
    f.component = 0;
    if (!parse_int(token.substr(1), f.stage)) return std::nullopt;
  } else {
    return std::nullopt;
  }
  if (f.stage < 1 || (f.kind == Factor::Kind::State && f.component < 1)) return std::nullopt;
  return f;
}

bool factor_less(const Factor& x, const Factor& y) {
  return std::tuple(x.stage, x.kind == Factor::Kind::Action, x.component) <
         std::tuple(y.stage, y.kind == Factor::Kind::Action, y.component);
}

std::string factor_name(const Factor& f) {
  if (f.kind == Factor::Kind::Action) return "a" + std::to_string(f.stage);
  return "s" + std::to_string(f.stage) + "_" + std::to_string(f.component);
}

}  // namespace

Term Term::state(int stage, int component) {
  Term t;
  t.factors_.push_back({Factor::Kind::State, stage, component});
  return t;
}

Term Term::action(int stage) {
  Term t;
  t.factors_.push_back({Factor::Kind::Action, stage, 0});
  return t;
}

Term Term::parse(const std::string& text) {
  const std::string cleaned = trim(text);
  if (cleaned.empty()) throw ParseError("empty model term");
  Term result;
  for (const auto& raw : split(cleaned, '*')) {
    std::string token = raw;
    int power = 1;
    if (const auto caret = token.find('^'); caret != std::string::npos) {
      if (!parse_int(trim(std::string_view(token).substr(caret + 1)), power) || power < 1) {
        throw ParseError("bad exponent in model term '" + text + "'");
      }
      token = trim(std::string_view(token).substr(0, caret));
    }
    if (token == "1") continue;
    const auto factor = parse_factor(token);
    if (!factor) throw ParseError("unrecognized model term '" + text + "'");
    for (int i = 0; i < power; ++i) result.factors_.push_back(*factor);
  }
  std::sort(result.factors_.begin(), result.factors_.end(), factor_less);
  return result;
}

Term Term::operator*(const Term& other) const {
  Term t = *this;
  t.factors_.insert(t.factors_.end(), other.factors_.begin(), other.factors_.end());
  std::sort(t.factors_.begin(), t.factors_.end(), factor_less);
  return t;
}

double Term::eval(const History& history) const {
  double value = 1.0;
  for (const auto& f : factors_) {
    if (f.kind == Factor::Kind::State) {
      value *= history.states[f.stage - 1][f.component - 1];
    } else {
      value *= history.actions[f.stage - 1];
    }
  }
  return value;
}

std::string Term::name() const {
  if (factors_.empty()) return "1";
  std::string out;
  for (std::size_t i = 0; i < factors_.size();) {
    std::size_t run = 1;
    while (i + run < factors_.size() && factors_[i + run] == factors_[i]) ++run;
    if (!out.empty()) out += '*';
    out += factor_name(factors_[i]);
    if (run > 1) out += "^" + std::to_string(run);
    i += run;
  }
  return out;
}

FeatureMap FeatureMap::parse(const std::vector<std::string>& names) {
  std::vector<Term> terms;
  terms.reserve(names.size());
  for (const auto& n : names) terms.push_back(Term::parse(n));
  return FeatureMap(std::move(terms));
}

std::vector<std::string> FeatureMap::names() const {
  std::vector<std::string> out;
  for (const auto& t : terms_) out.push_back(t.name());
  return out;
}

void FeatureMap::eval(const History& history, std::span<double> out) const {
  for (std::size_t j = 0; j < terms_.size(); ++j) out[j] = terms_[j].eval(history);
}

Vector FeatureMap::eval(const History& history) const {
  Vector v(static_cast<Eigen::Index>(terms_.size()));
  eval(history, std::span<double>(v.data(), terms_.size()));
  return v;
}

void FeatureMap::validate_for_stage(int stage, std::span<const int> state_dims) const {
  for (const auto& t : terms_) {
    for (const auto& f : t.factors()) {
      if (f.kind == Factor::Kind::State) {
        if (f.stage > stage) {
          throw ModelSpecError("term '" + t.name() + "' uses a future state at stage " +
                               std::to_string(stage));
        }
        if (f.stage > static_cast<int>(state_dims.size()) ||
            f.component > state_dims[f.stage - 1]) {
          throw ModelSpecError("term '" + t.name() + "' references a missing state component");
        }
      } else if (f.stage >= stage) {
        throw ModelSpecError("term '" + t.name() + "' uses action a" + std::to_string(f.stage) +
                             ", not yet observed at stage " + std::to_string(stage));
      }
    }
  }
}

bool FeatureMap::subset_of(const FeatureMap& other) const {
  return std::all_of(terms_.begin(), terms_.end(), [&](const Term& t) {
    return std::find(other.terms_.begin(), other.terms_.end(), t) != other.terms_.end();
  });
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> names;
  for (int k = 1; k <= stages; ++k) {
    for (int j = 1; j <= state_dims[k - 1]; ++j) {
      names.push_back("s" + std::to_string(k) + "_" + std::to_string(j));
    }
    names.push_back("a" + std::to_string(k));
  }
  names.push_back("y");
  return names;
}

void Dataset::validate() const {
  if (stages < 1) throw ParseError("dataset must have at least one stage");
  if (static_cast<int>(state_dims.size()) != stages) {
    throw ParseError("dataset state dimensions do not match the stage count");
  }
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    const std::string where = "trajectory " + std::to_string(i + 1);
    if (static_cast<int>(t.states.size()) != stages ||
        static_cast<int>(t.actions.size()) != stages) {
      throw ParseError(where + ": wrong number of stages");
    }
    for (int k = 0; k < stages; ++k) {
      if (static_cast<int>(t.states[k].size()) != state_dims[k]) {
        throw ParseError(where + ": wrong state dimension at stage " + std::to_string(k + 1));
      }
      if (t.actions[k] != 0 && t.actions[k] != 1) {
        throw ParseError(where + ": non-binary action at stage " + std::to_string(k + 1));
      }
    }
  }
}

Vector Dataset::actions(int stage) const {
  Vector a(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) a(i) = trajectories[i].actions[stage - 1];
  return a;
}

Vector Dataset::outcomes() const {
  Vector y(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) y(i) = trajectories[i].outcome;
  return y;
}

Matrix build_design(const Dataset& data, int stage, const FeatureMap& features) {
  if (stage < 1 || stage > data.stages + 1) {
    throw ModelSpecError("stage " + std::to_string(stage) + " outside 1.." +
                         std::to_string(data.stages + 1));
  }
  features.validate_for_stage(stage, data.state_dims);
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto p = static_cast<Eigen::Index>(features.size());
  Matrix x(n, p);
  std::vector<double> row(features.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    features.eval(data.trajectories[i].history(), row);
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = row[j];
  }
  return x;
}

double DecisionRule::contrast(const History& history) const {
  if (static_cast<std::size_t>(psi.size()) != features.size()) {
    throw InvalidParameterError("decision rule: psi length does not match its features");
  }
  double c = 0.0;
  for (std::size_t j = 0; j < features.size(); ++j) {
    c += psi(static_cast<Eigen::Index>(j)) * features.terms()[j].eval(history);
  }
  return c;
}

int apply_regime(const Regime& regime, int stage, const History& history) {
  if (stage < 1 || stage > regime.stages()) {
    throw InvalidParameterError("apply_regime: stage outside the regime");
  }
  return regime.rules[stage - 1].action(history);
}

Dataset read_dataset_csv(std::istream& in, int stages, const std::vector<int>& state_dims) {
  Dataset data;
  data.stages = stages;
  data.state_dims = state_dims;
  if (stages < 1 || static_cast<int>(state_dims.size()) != stages) {
    throw ParseError("state_dims must list one dimension per stage");
  }

  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    header = split(t, ',');
    break;
  }
  if (header.empty()) throw ParseError("missing header line");

  std::map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index[header[j]] = j;
  const auto columns = data.column_names();
  std::vector<std::size_t> position;
  for (const auto& c : columns) {
    const auto it = index.find(c);
    if (it == index.end()) throw ParseError("missing column " + c);
    position.push_back(it->second);
  }

  std::size_t row = 0;
  std::vector<double> values(columns.size());
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    ++row;
    const auto cells = split(t, ',');
    const std::string where = "row " + std::to_string(row);
    if (cells.size() != header.size()) {
      throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const std::string& cell = cells[position[c]];
      if (!parse_double(cell, values[c])) {
        throw ParseError(where + ", column " + columns[c] + ": " +
                         (cell.empty() ? "missing value" : "non-numeric value '" + cell + "'"));
      }
    }
    Trajectory traj;
    std::size_t c = 0;
    for (int k = 0; k < stages; ++k) {
      traj.states.emplace_back(values.begin() + c, values.begin() + c + state_dims[k]);
      c += state_dims[k];
      const double a = values[c];
      if (a != 0.0 && a != 1.0) {
        throw ParseError(where + ", column " + columns[c] + ": action must be 0 or 1");
      }
      traj.actions.push_back(static_cast<int>(a));
      ++c;
    }
    traj.outcome = values[c];
    data.trajectories.push_back(std::move(traj));
  }
  return data;
}

Dataset read_dataset_csv(const std::string& path, int stages, const std::vector<int>& state_dims) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_dataset_csv(in, stages, state_dims);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    header = split(t, ',');
    break;
  }
  int stages = 0;
  std::map<int, int> dims;
  for (const auto& name : header) {
    if (name == "y") continue;
    const auto f = parse_factor(name);
    if (!f) continue;
    if (f->kind == Factor::Kind::Action) {
      stages = std::max(stages, f->stage);
    } else {
      dims[f->stage] = std::max(dims[f->stage], f->component);
    }
  }
  if (stages < 1) throw ParseError(path + ": header names no action columns");
  std::vector<int> state_dims;
  for (int k = 1; k <= stages; ++k) state_dims.push_back(dims.count(k) ? dims[k] : 0);
  in.clear();
  in.seekg(0);
  return read_dataset_csv(in, stages, state_dims);
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

void write_dataset_csv(std::ostream& out, const Dataset& data, const std::string& comment) {
  if (!comment.empty()) {
    std::istringstream lines(comment);
    std::string line;
    while (std::getline(lines, line)) out << "# " << line << '\n';
  }
  const auto names = data.column_names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (const auto& t : data.trajectories) {
    for (int k = 0; k < data.stages; ++k) {
      for (double s : t.states[k]) out << format_double(s) << ',';
      out << t.actions[k] << ',';
    }
    out << format_double(t.outcome) << '\n';
  }
}

void write_dataset_csv(const std::string& path, const Dataset& data, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path);
  write_dataset_csv(out, data, comment);
}

}  // namespace dtr
