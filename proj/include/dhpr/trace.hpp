#pragma once

#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dhpr/format.hpp"

namespace dhpr {

struct TraceRow {
  long long iter = 0;
  double eta_re = 0.0;
  double eta_kkt = 0.0;
  double kkt_norm = 0.0;
  std::optional<double> dual_gap;  // blank in the CSV when unavailable
  double sigma = 0.0;
  int restart_flag = 0;
  long long comm_rounds_cum = 0;
  long long scalars_sent_cum = 0;
  double wall_ms = 0.0;
};

inline const char* trace_header() {
  return "iter,eta_re,eta_kkt,kkt_norm,dual_gap,sigma,restart_flag,"
         "comm_rounds_cum,scalars_sent_cum,wall_ms";
}

struct Trace {
  std::vector<TraceRow> rows;

  std::string to_csv() const {
    std::string out = trace_header();
    out += '\n';
    for (const auto& r : rows) {
      out += std::to_string(r.iter);
      out += ',';
      out += format_g17(r.eta_re);
      out += ',';
      out += format_g17(r.eta_kkt);
      out += ',';
      out += format_g17(r.kkt_norm);
      out += ',';
      if (r.dual_gap) out += format_g17(*r.dual_gap);
      out += ',';
      out += format_g17(r.sigma);
      out += ',';
      out += std::to_string(r.restart_flag);
      out += ',';
      out += std::to_string(r.comm_rounds_cum);
      out += ',';
      out += std::to_string(r.scalars_sent_cum);
      out += ',';
      out += format_g17(r.wall_ms);
      out += '\n';
    }
    return out;
  }

  void write_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("Trace::write_csv: cannot write " + path);
    f << to_csv();
  }

  /// First recorded iteration with eta_re at or below eps.
  std::optional<long long> first_iter_at_or_below(double eps) const {
    for (const auto& r : rows)
      if (r.eta_re <= eps) return r.iter;
    return std::nullopt;
  }
};

namespace detail {

inline double parse_trace_double(const std::string& tok, const std::string& where) {
  const char* s = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw std::runtime_error("read_trace_csv: " + where + ": bad number '" + tok + "'");
  return v;
}

inline long long parse_trace_int(const std::string& tok, const std::string& where) {
  const char* s = tok.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(s, &end, 10);
  if (end == s || *end != '\0')
    throw std::runtime_error("read_trace_csv: " + where + ": bad integer '" + tok + "'");
  return v;
}

}  // namespace detail

inline Trace read_trace_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("read_trace_csv: " + path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != trace_header())
    throw std::runtime_error("read_trace_csv: " + path + ": unexpected header");
  Trace tr;
  long long lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> tok;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        tok.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    tok.push_back(cur);
    const std::string where = path + ":" + std::to_string(lineno);
    if (tok.size() != 10)
      throw std::runtime_error("read_trace_csv: " + where + ": expected 10 fields");
    TraceRow r;
    r.iter = detail::parse_trace_int(tok[0], where);
    r.eta_re = detail::parse_trace_double(tok[1], where);
    r.eta_kkt = detail::parse_trace_double(tok[2], where);
    r.kkt_norm = detail::parse_trace_double(tok[3], where);
    if (!tok[4].empty()) r.dual_gap = detail::parse_trace_double(tok[4], where);
    r.sigma = detail::parse_trace_double(tok[5], where);
    r.restart_flag = static_cast<int>(detail::parse_trace_int(tok[6], where));
    r.comm_rounds_cum = detail::parse_trace_int(tok[7], where);
    r.scalars_sent_cum = detail::parse_trace_int(tok[8], where);
    r.wall_ms = detail::parse_trace_double(tok[9], where);
    tr.rows.push_back(std::move(r));
  }
  return tr;
}

}  // namespace dhpr
