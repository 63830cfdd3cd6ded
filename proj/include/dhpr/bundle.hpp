#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "dhpr/format.hpp"
#include "dhpr/problem.hpp"

namespace dhpr {

// A problem bundle is a directory holding problem.json (dimensions, graph,
// per-agent specs) plus one agent_<i>.csv per agent with rows
// "a_1,...,a_p,b" printed as %.17g so doubles round-trip exactly.
// Agent numbering on disk is 1-based.

inline void save_problem(const DistributedProblem& prob, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["p"] = prob.p;
  j["n_agents"] = prob.n_agents();
  j["graph"] = graph_to_json(prob.graph);
  nlohmann::json agents = nlohmann::json::array();
  for (int i = 0; i < prob.n_agents(); ++i) {
    const auto& ag = prob.agents[static_cast<std::size_t>(i)];
    const std::string csv = "agent_" + std::to_string(i + 1) + ".csv";
    nlohmann::json a;
    a["m"] = ag.m();
    a["loss"] = to_string(ag.loss.kind);
    a["reg"] = regularizer_to_json(ag.reg);
    a["lambda_A"] = ag.lambda_A;
    a["data"] = csv;
    agents.push_back(std::move(a));

    std::ofstream out(fs::path(dir) / csv);
    if (!out) throw std::runtime_error("save_problem: cannot write " + csv);
    for (int r = 0; r < ag.m(); ++r) {
      for (int c = 0; c < ag.p(); ++c) out << format_g17(ag.A(r, c)) << ',';
      out << format_g17(ag.loss.b[r]) << '\n';
    }
  }
  j["agents"] = std::move(agents);
  std::ofstream out(fs::path(dir) / "problem.json");
  if (!out) throw std::runtime_error("save_problem: cannot write problem.json");
  out << j.dump(2) << '\n';
}

inline DistributedProblem load_problem(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "problem.json");
  if (!in) throw std::runtime_error("load_problem: cannot open " + dir + "/problem.json");
  nlohmann::json j;
  in >> j;

  DistributedProblem prob;
  prob.p = j.at("p").get<int>();
  prob.graph = graph_from_json(j.at("graph"));
  for (const auto& a : j.at("agents")) {
    AgentProblem ag;
    const int m = a.at("m").get<int>();
    ag.A.resize(m, prob.p);
    ag.loss.kind = loss_kind_from_string(a.at("loss").get<std::string>());
    ag.loss.b.resize(m);
    ag.reg = regularizer_from_json(a.at("reg"));
    ag.lambda_A = a.at("lambda_A").get<double>();

    const std::string csv = a.at("data").get<std::string>();
    std::ifstream data(fs::path(dir) / csv);
    if (!data) throw std::runtime_error("load_problem: cannot open " + csv);
    std::string line;
    for (int r = 0; r < m; ++r) {
      if (!std::getline(data, line))
        throw std::runtime_error("load_problem: " + csv + " truncated at row " +
                                 std::to_string(r + 1));
      const char* s = line.c_str();
      for (int c = 0; c <= prob.p; ++c) {
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end == s)
          throw std::runtime_error("load_problem: " + csv + ": bad value at row " +
                                   std::to_string(r + 1));
        if (c < prob.p) ag.A(r, c) = v; else ag.loss.b[r] = v;
        s = end;
        if (*s == ',') ++s;
      }
    }
    prob.agents.push_back(std::move(ag));
  }
  prob.validate();
  return prob;
}

}  // namespace dhpr
