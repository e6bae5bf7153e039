#pragma once

#include <cmath>
#include <string>

#include <json.hpp>

#include "tvlate/identified_set.hpp"
#include "tvlate/inference.hpp"
#include "tvlate/oracle.hpp"
#include "tvlate/partition.hpp"
#include "tvlate/propensity.hpp"

namespace tvlate {

using nlohmann::json;

/// Infinities are not representable in JSON; encode them as signed sentinels.
inline json json_real(double x) {
  if (std::isinf(x)) return x > 0 ? json("inf") : json("-inf");
  return json(x);
}

inline json to_json(const CellPartition& p) {
  json out{{"y_edges", p.y_edges},
           {"split_by_t", p.split_by_t},
           {"split_by_r", p.split_by_r},
           {"v_edges", p.v_edges}};
  if (p.split_by_r) out["r_values"] = p.r_values;
  return out;
}

inline CellPartition partition_from_json(const json& j) {
  CellPartition p;
  p.y_edges = j.at("y_edges").get<std::vector<double>>();
  p.split_by_t = j.at("split_by_t").get<bool>();
  p.split_by_r = j.at("split_by_r").get<bool>();
  if (p.split_by_r)
    p.r_values = j.at("r_values").get<std::vector<std::uint8_t>>();
  p.v_edges = j.value("v_edges", std::vector<std::vector<double>>{});
  return p;
}

inline json to_json(const IdentifiedSet& s, Regime regime, int k_n,
                    std::size_t n) {
  const char* kind = s.kind == SetKind::whole_space
                         ? "whole_space"
                         : s.kind == SetKind::point_zero ? "point_zero"
                                                         : "interval";
  json out{{"kind", kind},       {"lo", json_real(s.lo)}, {"hi", json_real(s.hi)},
           {"itt", s.itt},       {"tv", s.tv},            {"regime", regime_name(regime)},
           {"k_n", k_n},         {"n", n}};
  out["wald"] = s.wald ? json(*s.wald) : json(nullptr);
  return out;
}

inline json to_json(const PropensityModel& m) {
  return json{{"beta", m.beta}, {"eta", m.eta}, {"ridge_used", m.ridge_used}};
}

inline json to_json(const PropensityCandidateSet& s) {
  return json{{"delta", s.delta},
              {"candidate_count", s.candidates.size()},
              {"center", to_json(s.candidates.at(0))}};
}

inline json to_json(const ConfidenceInterval& ci) {
  json out{{"alpha", ci.alpha},
           {"delta", ci.delta},
           {"lo", json_real(ci.lo)},
           {"hi", json_real(ci.hi)},
           {"unbounded_above", ci.unbounded_above},
           {"empty", ci.empty},
           {"grid", ci.grid},
           {"accepted_mask", ci.accepted},
           {"b_reps", ci.b_reps},
           {"seed", ci.seed}};
  if (ci.empty) out["closest_theta"] = ci.closest_theta;
  return out;
}

inline json to_json(const DiscreteJoint& j) {
  json pts = json::array();
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    pts.push_back({{"y", j.pts[k].y},
                   {"t", j.pts[k].t},
                   {"r", j.pts[k].r},
                   {"p0", j.p0[k]},
                   {"p1", j.p1[k]}});
  return json{{"pz1", j.pz1}, {"points", pts}};
}

inline DiscreteJoint joint_from_json(const json& spec) {
  DiscreteJoint j;
  j.pz1 = spec.value("pz1", 0.5);
  for (const auto& p : spec.at("points")) {
    j.pts.push_back({p.at("y").get<double>(),
                     static_cast<std::uint8_t>(p.at("t").get<int>()),
                     p.value("r", -1)});
    j.p0.push_back(p.at("p0").get<double>());
    j.p1.push_back(p.at("p1").get<double>());
  }
  j.validate();
  return j;
}

}  // namespace tvlate
