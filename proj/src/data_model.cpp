#include "acw/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace acw {

void SubjectRecord::validate(std::size_t row_index) const {
  auto fail = [&](const std::string& msg) {
    throw ValidationError("row " + std::to_string(row_index) + " (id=" + id + "): " + msg);
  };
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    if (!std::isfinite(x[j])) fail("non-finite covariate x" + std::to_string(j + 1));
  }
  if (source == Source::Rct) {
    if (!u || !event || !a) fail("RCT row must carry u, event and a");
    if (design_weight) fail("RCT row must not carry a design weight");
    if (*u < 0) fail("negative follow-up time");
    if (!std::isfinite(*u)) fail("non-finite follow-up time");
  } else {
    if (u || event || a) fail("OS row must not carry u, event or a");
    if (!design_weight) fail("OS row must carry a design weight");
    if (!(*design_weight > 0) || !std::isfinite(*design_weight)) fail("nonpositive design weight");
  }
}

CombinedDataset::CombinedDataset(std::vector<SubjectRecord> recs) : records(std::move(recs)) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].validate(i + 1);
    if (records[i].source == Source::Rct)
      ++n;
    else
      ++m;
  }
  if (!records.empty()) {
    p = records.front().x.size();
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].x.size() != p)
        throw ValidationError("row " + std::to_string(i + 1) + ": covariate length " +
                              std::to_string(records[i].x.size()) + " != " + std::to_string(p));
    }
  }
}

std::vector<std::size_t> CombinedDataset::rct_indices() const {
  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].source == Source::Rct) out.push_back(i);
  return out;
}

std::vector<std::size_t> CombinedDataset::os_indices() const {
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].source == Source::Os) out.push_back(i);
  return out;
}

void CombinedDataset::require_fittable() const {
  std::size_t count[2] = {0, 0};
  std::size_t events[2] = {0, 0};
  for (const auto& r : records) {
    if (r.source != Source::Rct) continue;
    int arm = *r.a ? 1 : 0;
    ++count[arm];
    if (*r.event) ++events[arm];
  }
  for (int arm = 0; arm < 2; ++arm) {
    if (count[arm] < 2)
      throw FitError("arm " + std::to_string(arm) + " has " + std::to_string(count[arm]) +
                     " RCT subjects; need at least 2");
    if (events[arm] == 0) throw FitError("arm " + std::to_string(arm) + " has no observed events");
  }
}

CombinedDataset arm_subset(const CombinedDataset& data, bool a) {
  std::vector<SubjectRecord> keep;
  keep.reserve(data.records.size());
  for (const auto& r : data.records) {
    if (r.source == Source::Os || (r.a && *r.a == a)) keep.push_back(r);
  }
  return CombinedDataset(std::move(keep));
}

double StepSurvival::at(double t) const {
  // Last jump time <= t.
  auto it = std::upper_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return value_at_zero;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::at_left(double t) const {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return value_at_zero;
  return values[static_cast<std::size_t>(it - times.begin()) - 1];
}

double StepSurvival::integral(double tau) const {
  if (tau <= 0) return 0.0;
  double acc = 0.0;
  double prev_t = 0.0;
  double prev_v = value_at_zero;
  for (std::size_t j = 0; j < times.size() && times[j] < tau; ++j) {
    if (times[j] > prev_t) acc += prev_v * (times[j] - prev_t);
    prev_t = std::max(prev_t, times[j]);
    prev_v = values[j];
  }
  acc += prev_v * (tau - prev_t);
  return acc;
}

void StepSurvival::check() const {
  if (times.size() != values.size()) throw ValidationError("step curve: times/values length mismatch");
  for (std::size_t j = 0; j < times.size(); ++j) {
    if (times[j] < 0) throw ValidationError("step curve: negative time");
    if (j > 0 && !(times[j] > times[j - 1]))
      throw ValidationError("step curve: times not strictly increasing");
  }
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ValidationError("row " + std::to_string(row) + ": non-numeric value '" + s + "' in column " + col);
  }
  if (pos != s.size())
    throw ValidationError("row " + std::to_string(row) + ": non-numeric value '" + s + "' in column " + col);
  return v;
}

bool parse_bool(const std::string& s, std::size_t row, const std::string& col) {
  std::string l = lower(s);
  if (l == "1" || l == "true") return true;
  if (l == "0" || l == "false") return false;
  throw ValidationError("row " + std::to_string(row) + ": expected 0/1 in column " + col + ", got '" + s + "'");
}

}  // namespace

CombinedDataset ingest_csv(const std::string& path, const ColumnMap& schema) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path + ": empty file");
  auto header = split_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < header.size(); ++j) col[header[j]] = j;

  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw ValidationError(path + ": missing column '" + name + "'");
    return it->second;
  };
  std::size_t c_id = need(schema.id);
  std::size_t c_source = need(schema.source);
  std::size_t c_u = need(schema.u);
  std::size_t c_event = need(schema.event);
  std::size_t c_a = need(schema.a);
  std::size_t c_d = need(schema.design_weight);
  std::vector<std::size_t> c_x;
  for (int k = 1;; ++k) {
    auto it = col.find(schema.x_prefix + std::to_string(k));
    if (it == col.end()) break;
    c_x.push_back(it->second);
  }
  if (c_x.empty()) throw ValidationError(path + ": no covariate columns '" + schema.x_prefix + "1..'");

  std::vector<SubjectRecord> records;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    auto fields = split_line(line);
    if (fields.size() < header.size())
      throw ValidationError("row " + std::to_string(row) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    SubjectRecord rec;
    rec.id = fields[c_id];
    std::string src = lower(fields[c_source]);
    if (src == "rct")
      rec.source = Source::Rct;
    else if (src == "os")
      rec.source = Source::Os;
    else
      throw ValidationError("row " + std::to_string(row) + ": source must be rct or os, got '" +
                            fields[c_source] + "'");
    rec.x.resize(static_cast<Eigen::Index>(c_x.size()));
    for (std::size_t k = 0; k < c_x.size(); ++k)
      rec.x[static_cast<Eigen::Index>(k)] =
          parse_double(fields[c_x[k]], row, schema.x_prefix + std::to_string(k + 1));
    if (!fields[c_u].empty()) rec.u = parse_double(fields[c_u], row, schema.u);
    if (!fields[c_event].empty()) rec.event = parse_bool(fields[c_event], row, schema.event);
    if (!fields[c_a].empty()) rec.a = parse_bool(fields[c_a], row, schema.a);
    if (!fields[c_d].empty()) rec.design_weight = parse_double(fields[c_d], row, schema.design_weight);
    rec.validate(row);
    records.push_back(std::move(rec));
  }
  return CombinedDataset(std::move(records));
}

void write_csv(const CombinedDataset& data, const std::string& path, const ColumnMap& schema) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << schema.id << ',' << schema.source << ',' << schema.u << ',' << schema.event << ','
      << schema.a;
  for (Eigen::Index k = 1; k <= data.p; ++k) out << ',' << schema.x_prefix << k;
  out << ',' << schema.design_weight << '\n';
  out.precision(17);
  for (const auto& r : data.records) {
    out << r.id << ',' << (r.source == Source::Rct ? "rct" : "os") << ',';
    if (r.u) out << *r.u;
    out << ',';
    if (r.event) out << (*r.event ? 1 : 0);
    out << ',';
    if (r.a) out << (*r.a ? 1 : 0);
    for (Eigen::Index k = 0; k < data.p; ++k) out << ',' << r.x[k];
    out << ',';
    if (r.design_weight) out << *r.design_weight;
    out << '\n';
  }
}

}  // namespace acw
