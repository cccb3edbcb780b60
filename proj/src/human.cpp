#include "medalign/human.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "medalign/error.hpp"
#include "medalign/text.hpp"

namespace medalign::evalkit {

namespace {

int parse_score(const std::string& field, const char* name) {
  try {
    std::size_t used = 0;
    int v = std::stoi(field, &used);
    if (used != field.size()) throw std::invalid_argument(name);
    return v;
  } catch (const std::logic_error&) {
    throw DataError(std::string(name) + " is not an integer: \"" + field + "\"");
  }
}

bool in_range(int v) { return v >= 1 && v <= 3; }

}  // namespace

HumanScoreFile read_human_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  HumanScoreFile out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty()) continue;
    auto cols = text::split(line, ',');
    for (auto& c : cols) c = text::trim(c);
    if (!header_seen) {
      header_seen = true;
      if (cols.size() == 6 && cols[0] == "annotator") continue;
    }
    if (cols.size() != 6) {
      out.rejected.push_back({line_no, "expected 6 columns, found " + std::to_string(cols.size())});
      continue;
    }
    try {
      out.records.push_back({cols[0], cols[1], cols[2], parse_score(cols[3], "fluency"),
                             parse_score(cols[4], "completeness"), parse_score(cols[5], "precision")});
    } catch (const DataError& e) {
      out.rejected.push_back({line_no, e.what()});
    }
  }
  return out;
}

namespace {

struct AspectAccumulator {
  double sum = 0.0;
  std::size_t n = 0;
  // item -> scores from each annotator
  std::map<std::string, std::vector<int>> by_item;

  void add(const std::string& item, int v) {
    sum += v;
    ++n;
    by_item[item].push_back(v);
  }

  AspectStats finish() const {
    AspectStats s;
    s.mean = n ? sum / static_cast<double>(n) : 0.0;
    double mad_sum = 0.0;
    std::size_t mad_items = 0;
    for (const auto& [item, scores] : by_item) {
      if (scores.size() < 2) continue;
      double d = 0.0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        for (std::size_t j = i + 1; j < scores.size(); ++j) {
          d += std::abs(scores[i] - scores[j]);
          ++pairs;
        }
      }
      mad_sum += d / static_cast<double>(pairs);
      ++mad_items;
    }
    if (mad_items) s.agreement_mad = mad_sum / static_cast<double>(mad_items);
    return s;
  }
};

}  // namespace

HumanAggregate aggregate_human_scores(const std::vector<HumanScoreRecord>& records) {
  struct Acc {
    AspectAccumulator fluency, completeness, precision;
    std::set<std::string> items;
    std::size_t records = 0;
  };
  std::map<std::string, Acc> acc;
  HumanAggregate out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!in_range(r.fluency) || !in_range(r.completeness) || !in_range(r.precision)) {
      out.rejected.push_back({0, "record " + std::to_string(i) + " (" + r.annotator + "/" + r.item + "/" + r.model +
                                     ") has a score outside [1, 3]"});
      continue;
    }
    auto& a = acc[r.model];
    a.fluency.add(r.item, r.fluency);
    a.completeness.add(r.item, r.completeness);
    a.precision.add(r.item, r.precision);
    a.items.insert(r.item);
    ++a.records;
  }
  for (const auto& [model, a] : acc) {
    out.models[model] = {a.fluency.finish(), a.completeness.finish(), a.precision.finish(), a.records, a.items.size()};
  }
  return out;
}

json to_json(const HumanAggregate& agg) {
  auto aspect = [](const AspectStats& s) {
    json j = {{"mean", s.mean}};
    j["agreement_mad"] = s.agreement_mad ? json(*s.agreement_mad) : json(nullptr);
    return j;
  };
  json models = json::object();
  for (const auto& [name, m] : agg.models) {
    models[name] = {{"fluency", aspect(m.fluency)},
                    {"completeness", aspect(m.completeness)},
                    {"precision", aspect(m.precision)},
                    {"records", m.records},
                    {"items", m.items}};
  }
  json rejected = json::array();
  for (const auto& r : agg.rejected) rejected.push_back({{"line", r.line}, {"reason", r.reason}});
  return {{"models", std::move(models)}, {"rejected", std::move(rejected)}};
}

std::string render_table(const HumanAggregate& agg) {
  std::size_t width = 5;
  for (const auto& [name, _] : agg.models) width = std::max(width, text::count_code_points(name));
  std::ostringstream os;
  auto pad = [&](const std::string& s) { os << s << std::string(width - text::count_code_points(s), ' '); };
  pad("Model");
  os << " |  Flu | Comp |  Pre\n" << std::string(width, '-') << "-+------+------+------\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& [name, m] : agg.models) {
    pad(name);
    os << " | " << std::setw(4) << m.fluency.mean << " | " << std::setw(4) << m.completeness.mean << " | "
       << std::setw(4) << m.precision.mean << "\n";
  }
  return os.str();
}

}  // namespace medalign::evalkit
