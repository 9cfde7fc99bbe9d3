#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>
#include <tuple>

#include "kgnn/error.hpp"
#include "kgnn/pipeline.hpp"

namespace kgnn::pipeline {

namespace {

std::string num(double v) {
  char buf[64];
  return std::string(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string metrics_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricRow& r : rows) {
    for (const std::string* f : {&r.method, &r.phase, &r.domain, &r.subset})
      if (f->find_first_of(",\n\"") != std::string::npos) throw ContractError("metric field '" + *f + "' needs quoting");
    out += r.method + "," + r.phase + "," + r.domain + "," + r.subset + "," + std::to_string(r.seed) + "," +
           num(r.accuracy) + "," + (r.forgetting_delta ? num(*r.forgetting_delta) : "") + "\n";
  }
  return out;
}

std::vector<MetricRow> parse_metrics_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (n == 1) {
      if (line != kMetricsHeader) throw ParseError(1, 1, "unexpected metrics header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != 7) throw ParseError(n, 1, "expected 7 fields, found " + std::to_string(f.size()));
    MetricRow r{f[0], f[1], f[2], f[3], 0, 0, std::nullopt};
    auto bad = [&](std::size_t col) { return ParseError(n, col, "malformed number"); };
    if (std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.seed).ptr != f[4].data() + f[4].size() || f[4].empty())
      throw bad(5);
    if (std::from_chars(f[5].data(), f[5].data() + f[5].size(), r.accuracy).ptr != f[5].data() + f[5].size() || f[5].empty())
      throw bad(6);
    if (!f[6].empty()) {
      double d = 0;
      if (std::from_chars(f[6].data(), f[6].data() + f[6].size(), d).ptr != f[6].data() + f[6].size()) throw bad(7);
      r.forgetting_delta = d;
    }
    rows.push_back(std::move(r));
  }
  if (n == 0) throw ParseError(1, 1, "empty metrics file");
  return rows;
}

std::string summarize(const std::vector<MetricRow>& rows) {
  struct Acc {
    std::vector<double> accuracy, forgetting;
  };
  std::map<std::tuple<std::string, std::string, std::string, std::string>, Acc> groups;
  for (const MetricRow& r : rows) {
    Acc& a = groups[{r.method, r.phase, r.domain, r.subset}];
    a.accuracy.push_back(r.accuracy);
    if (r.forgetting_delta) a.forgetting.push_back(*r.forgetting_delta);
  }
  std::ostringstream out;
  out << "method,phase,domain,subset,runs,median_accuracy,median_forgetting_delta\n";
  for (const auto& [key, a] : groups) {
    const auto& [method, phase, domain, subset] = key;
    out << method << ',' << phase << ',' << domain << ',' << subset << ',' << a.accuracy.size() << ','
        << num(median(a.accuracy)) << ',' << (a.forgetting.empty() ? "" : num(median(a.forgetting))) << '\n';
  }
  return out.str();
}

}  // namespace kgnn::pipeline
