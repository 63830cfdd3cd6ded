#pragma once

#include <Eigen/Core>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dhpr/problem.hpp"

namespace dhpr {

/// LIBSVM text format: one sample per line, "label idx:val idx:val ...",
/// indices 1-based and strictly increasing within a line. The feature
/// dimension is the largest index seen anywhere in the file.
inline Dataset load_libsvm(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_libsvm: cannot open " + path);

  struct Entry { int idx; double val; };
  std::vector<std::vector<Entry>> rows;
  std::vector<double> labels;
  int max_idx = 0;
  std::string line;
  int lineno = 0;

  auto fail = [&](const std::string& what) {
    throw std::runtime_error("load_libsvm: " + path + ":" +
                             std::to_string(lineno) + ": " + what);
  };
  auto parse_double = [&](const std::string& tok) {
    const char* s = tok.c_str();
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    if (end == s || *end != '\0') fail("bad number '" + tok + "'");
    return v;
  };

  while (std::getline(in, line)) {
    ++lineno;
    // strip a trailing comment and CR
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line
    labels.push_back(parse_double(tok));
    rows.emplace_back();
    int prev_idx = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
        fail("expected idx:val, got '" + tok + "'");
      const std::string istr = tok.substr(0, colon);
      char* end = nullptr;
      const long idx = std::strtol(istr.c_str(), &end, 10);
      if (end == istr.c_str() || *end != '\0' || idx < 1)
        fail("bad feature index '" + istr + "'");
      if (idx <= prev_idx) fail("feature indices must be strictly increasing");
      prev_idx = static_cast<int>(idx);
      max_idx = std::max(max_idx, static_cast<int>(idx));
      rows.back().push_back({static_cast<int>(idx), parse_double(tok.substr(colon + 1))});
    }
  }
  if (rows.empty()) throw std::runtime_error("load_libsvm: " + path + ": no samples");

  Dataset data;
  data.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), max_idx);
  data.labels.resize(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    data.labels[static_cast<Eigen::Index>(r)] = labels[r];
    for (const auto& e : rows[r])
      data.features(static_cast<Eigen::Index>(r), e.idx - 1) = e.val;
  }
  return data;
}

}  // namespace dhpr
