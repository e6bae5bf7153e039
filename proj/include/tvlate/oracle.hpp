#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "tvlate/data.hpp"
#include "tvlate/partition.hpp"

namespace tvlate {

/// Finite-support observable distribution of (Y, T, Z) and optionally R,
/// stored as arm-conditional probability tables.
struct DiscreteJoint {
  struct Point {
    double y;
    std::uint8_t t;
    int r;  // -1 when absent
  };
  std::vector<Point> pts;
  std::vector<double> p0, p1;  // P(point | Z = z)
  double pz1 = 0.5;

  bool has_r() const { return !pts.empty() && pts[0].r >= 0; }

  void validate() const {
    if (pts.size() != p0.size() || pts.size() != p1.size() || pts.empty())
      throw ValidationError("joint tables misaligned");
    double s0 = 0, s1 = 0;
    for (std::size_t s = 0; s < pts.size(); ++s) {
      if (p0[s] < -1e-15 || p1[s] < -1e-15)
        throw ValidationError("negative probability");
      s0 += p0[s];
      s1 += p1[s];
    }
    if (std::fabs(s0 - 1.0) > 1e-9 || std::fabs(s1 - 1.0) > 1e-9)
      throw ValidationError("arm probabilities do not sum to 1");
    if (!(pz1 > 0.0 && pz1 < 1.0))
      throw ValidationError("both instrument arms need positive mass");
  }
};

inline double joint_itt(const DiscreteJoint& j) {
  double s = 0;
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    s += j.pts[k].y * (j.p1[k] - j.p0[k]);
  return s;
}

inline double joint_delta_t(const DiscreteJoint& j) {
  double s = 0;
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    s += j.pts[k].t * (j.p1[k] - j.p0[k]);
  return s;
}

/// Point-level TV distance (the joint's own resolution).
inline double joint_tv(const DiscreteJoint& j) {
  double s = 0;
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    s += std::fabs(j.p1[k] - j.p0[k]);
  return 0.5 * s;
}

inline std::size_t joint_cell(const DiscreteJoint& j, const CellPartition& part,
                              std::size_t k) {
  return part.cell_index(j.pts[k].y, j.pts[k].t,
                         j.pts[k].r < 0 ? 0 : static_cast<std::uint8_t>(j.pts[k].r),
                         nullptr, 0);
}

/// Half-L1 distance between the arm-conditional cell probabilities.
inline double joint_tv_cells(const DiscreteJoint& j, const CellPartition& part) {
  std::vector<double> d(part.cell_count(), 0.0);
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    d[joint_cell(j, part, k)] += j.p1[k] - j.p0[k];
  double s = 0;
  for (double x : d) s += std::fabs(x);
  return 0.5 * s;
}

/// Exhaustive maximum over all 2^cells sign functions of the arm-mean
/// difference of h. Must equal joint_tv_cells; this is the brute-force
/// oracle for the sup-over-H characterization of TV.
inline double tv_bruteforce(const DiscreteJoint& j, const CellPartition& part) {
  const std::size_t cells = part.cell_count();
  if (cells > kMaxCells) throw ValidationError("cell count exceeds cap");
  std::vector<double> d(cells, 0.0);
  for (std::size_t k = 0; k < j.pts.size(); ++k)
    d[joint_cell(j, part, k)] += j.p1[k] - j.p0[k];
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < (std::size_t{1} << cells); ++b) {
    const auto h = sign_function(b, cells);
    double v = 0;
    for (std::size_t c = 0; c < cells; ++c) v += h[c] * d[c];
    best = std::max(best, v);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Latent data generating processes on a finite support. Atom probabilities do
// not depend on Z; the measured-treatment components may (they are allowed to
// under instrument-dependent misclassification, and must not otherwise).
// ---------------------------------------------------------------------------

struct LatentDgp {
  struct Atom {
    double prob;
    double y0, y1;
    int r0, r1;                      // -1 when absent
    std::uint8_t t0_z0, t0_z1;       // measured treatment when T* = 0, per Z
    std::uint8_t t1_z0, t1_z1;       // measured treatment when T* = 1, per Z
    std::uint8_t ts0, ts1;           // (T*_0, T*_1)
  };
  std::vector<Atom> atoms;
  double pz1 = 0.5;
};

/// LATE of the latent process: E[Y1 - Y0 | T*_0 < T*_1].
inline double latent_late(const LatentDgp& dgp) {
  double num = 0, den = 0;
  for (const auto& a : dgp.atoms) {
    if (a.ts0 < a.ts1) {
      num += a.prob * (a.y1 - a.y0);
      den += a.prob;
    }
  }
  if (den <= 0) throw ValidationError("latent process has no compliers");
  return num / den;
}

inline double latent_complier_share(const LatentDgp& dgp) {
  double s = 0;
  for (const auto& a : dgp.atoms)
    if (a.ts0 < a.ts1) s += a.prob;
  return s;
}

/// Observable distribution induced by the structural equations T = T_{T*},
/// Y = Y_{T*}, R = R_{T*}, T* = T*_Z.
inline DiscreteJoint induced_observable(const LatentDgp& dgp) {
  std::map<std::tuple<double, int, int>, std::pair<double, double>> acc;
  for (const auto& a : dgp.atoms) {
    for (int z = 0; z <= 1; ++z) {
      const std::uint8_t ts = z ? a.ts1 : a.ts0;
      const double y = ts ? a.y1 : a.y0;
      const int r = ts ? a.r1 : a.r0;
      const std::uint8_t t = ts ? (z ? a.t1_z1 : a.t1_z0) : (z ? a.t0_z1 : a.t0_z0);
      auto& slot = acc[{y, t, r}];
      (z ? slot.second : slot.first) += a.prob;
    }
  }
  DiscreteJoint j;
  j.pz1 = dgp.pz1;
  for (const auto& [key, pr] : acc) {
    j.pts.push_back({std::get<0>(key), static_cast<std::uint8_t>(std::get<1>(key)),
                     std::get<2>(key)});
    j.p0.push_back(pr.first);
    j.p1.push_back(pr.second);
  }
  return j;
}

/// Largest absolute difference between two observable distributions,
/// matching support points exactly.
inline double joint_l1_distance(const DiscreteJoint& a, const DiscreteJoint& b) {
  std::map<std::tuple<double, int, int>, std::pair<double, double>> acc;
  for (std::size_t k = 0; k < a.pts.size(); ++k) {
    auto& slot = acc[{a.pts[k].y, a.pts[k].t, a.pts[k].r}];
    slot.first += a.p0[k];
    slot.second += a.p1[k];
  }
  for (std::size_t k = 0; k < b.pts.size(); ++k) {
    auto& slot = acc[{b.pts[k].y, b.pts[k].t, b.pts[k].r}];
    slot.first -= b.p0[k];
    slot.second -= b.p1[k];
  }
  double l1 = 0;
  for (const auto& [key, d] : acc) l1 += std::fabs(d.first) + std::fabs(d.second);
  return l1;
}

/// Mechanical verification of the exclusion restriction on the finite
/// support: the latent block's distribution must not depend on Z (the
/// measured-treatment components are exempt when include_t is false, the
/// instrument-dependent-misclassification case) plus monotonicity ts1 >= ts0.
inline bool satisfies_exclusion(const LatentDgp& dgp, bool include_t = true) {
  using Key = std::tuple<double, double, int, int, int, int, int, int>;
  std::map<Key, double> d0, d1;
  for (const auto& a : dgp.atoms) {
    if (a.ts1 < a.ts0) return false;
    const Key k0{a.y0, a.y1, a.r0, a.r1, include_t ? a.t0_z0 : 0,
                 include_t ? a.t1_z0 : 0, a.ts0, a.ts1};
    const Key k1{a.y0, a.y1, a.r0, a.r1, include_t ? a.t0_z1 : 0,
                 include_t ? a.t1_z1 : 0, a.ts0, a.ts1};
    d0[k0] += a.prob;
    d1[k1] += a.prob;
  }
  for (const auto& [k, p] : d0) {
    auto it = d1.find(k);
    if (it == d1.end() || std::fabs(it->second - p) > 1e-12) return false;
  }
  return d0.size() == d1.size();
}

/// Extremal lower process: everyone is a complier and the potential
/// observables reproduce the arm-conditional distributions, so the LATE
/// equals the ITT.
inline LatentDgp construct_extremal_lower(const DiscreteJoint& j) {
  j.validate();
  LatentDgp dgp;
  dgp.pz1 = j.pz1;
  for (std::size_t i = 0; i < j.pts.size(); ++i) {
    if (j.p0[i] <= 0) continue;
    for (std::size_t k = 0; k < j.pts.size(); ++k) {
      if (j.p1[k] <= 0) continue;
      LatentDgp::Atom a{};
      a.prob = j.p0[i] * j.p1[k];
      a.y0 = j.pts[i].y; a.t0_z0 = a.t0_z1 = j.pts[i].t; a.r0 = j.pts[i].r;
      a.y1 = j.pts[k].y; a.t1_z0 = a.t1_z1 = j.pts[k].t; a.r1 = j.pts[k].r;
      a.ts0 = 0; a.ts1 = 1;
      dgp.atoms.push_back(a);
    }
  }
  return dgp;
}

/// Extremal upper process: compliers carry the signed difference of the arm
/// densities split by H = sgn(Delta f), never/always-takers absorb the
/// rest; the LATE equals ITT / TV and the complier share equals TV.
inline LatentDgp construct_extremal_upper(const DiscreteJoint& j) {
  j.validate();
  const double tv = joint_tv(j);
  if (!(tv > 0)) throw ValidationError("extremal upper construction needs TV > 0");
  const std::size_t m = j.pts.size();
  std::vector<double> q0(m, 0.0), q1(m, 0.0), at(m, 0.0), nt(m, 0.0);
  double at_p = 0, nt_p = 0;
  for (std::size_t s = 0; s < m; ++s) {
    const double d = j.p1[s] - j.p0[s];
    if (d >= 0) {  // H = +1/2 (sgn(0) = +1)
      q1[s] = d / tv;
      at[s] = j.p0[s];
      at_p += j.p0[s];
    } else {
      q0[s] = -d / tv;
      nt[s] = j.p1[s];
      nt_p += j.p1[s];
    }
    if (q0[s] < -1e-12 || q1[s] < -1e-12)
      throw std::logic_error("extremal construction produced a negative density");
  }
  LatentDgp dgp;
  dgp.pz1 = j.pz1;
  for (std::size_t i = 0; i < m; ++i) {
    if (q0[i] <= 0) continue;
    for (std::size_t k = 0; k < m; ++k) {
      if (q1[k] <= 0) continue;
      LatentDgp::Atom a{};
      a.prob = tv * q0[i] * q1[k];
      a.y0 = j.pts[i].y; a.t0_z0 = a.t0_z1 = j.pts[i].t; a.r0 = j.pts[i].r;
      a.y1 = j.pts[k].y; a.t1_z0 = a.t1_z1 = j.pts[k].t; a.r1 = j.pts[k].r;
      a.ts0 = 0; a.ts1 = 1;
      dgp.atoms.push_back(a);
    }
  }
  for (std::size_t s = 0; s < m; ++s) {
    if (at[s] > 0) {  // always-takers draw the H=+1/2 share of the Z=0 arm
      LatentDgp::Atom a{};
      a.prob = at[s];
      a.y0 = a.y1 = j.pts[s].y;
      a.t0_z0 = a.t0_z1 = a.t1_z0 = a.t1_z1 = j.pts[s].t;
      a.r0 = a.r1 = j.pts[s].r;
      a.ts0 = a.ts1 = 1;
      dgp.atoms.push_back(a);
    }
    if (nt[s] > 0) {  // never-takers draw the H=-1/2 share of the Z=1 arm
      LatentDgp::Atom a{};
      a.prob = nt[s];
      a.y0 = a.y1 = j.pts[s].y;
      a.t0_z0 = a.t0_z1 = a.t1_z0 = a.t1_z1 = j.pts[s].t;
      a.r0 = a.r1 = j.pts[s].r;
      a.ts0 = a.ts1 = 0;
      dgp.atoms.push_back(a);
    }
  }
  return dgp;
}

/// Measured-treatment-free variant of the upper process, built on the
/// Y-marginal sign split with the measured treatment drawn from f_{T|Y,Z}
/// per instrument arm (it may depend on Z here). LATE equals ITT / TV_Y.
inline LatentDgp construct_extremal_upper_no_t(const DiscreteJoint& j) {
  j.validate();
  if (j.has_r())
    throw ValidationError("no_t construction operates on (Y,T,Z) joints");
  // y-marginal tables and f_{T|Y,Z}
  std::map<double, std::array<double, 2>> ymarg;  // y -> {p0, p1}
  for (std::size_t s = 0; s < j.pts.size(); ++s) {
    ymarg[j.pts[s].y][0] += j.p0[s];
    ymarg[j.pts[s].y][1] += j.p1[s];
  }
  auto f_t_given = [&](double y, int z) {
    std::array<double, 2> f{0.0, 0.0};
    for (std::size_t s = 0; s < j.pts.size(); ++s)
      if (j.pts[s].y == y) f[j.pts[s].t] += z ? j.p1[s] : j.p0[s];
    const double tot = f[0] + f[1];
    if (tot > 0) { f[0] /= tot; f[1] /= tot; }
    return f;
  };
  double tv_y = 0;
  for (const auto& [y, p] : ymarg) tv_y += std::fabs(p[1] - p[0]);
  tv_y *= 0.5;
  if (!(tv_y > 0)) throw ValidationError("no_t construction needs TV_Y > 0");

  struct YSlot { double y, q0, q1, at, nt; };
  std::vector<YSlot> ys;
  for (const auto& [y, p] : ymarg) {
    const double d = p[1] - p[0];
    YSlot s{y, 0, 0, 0, 0};
    if (d >= 0) { s.q1 = d / tv_y; s.at = p[0]; }
    else        { s.q0 = -d / tv_y; s.nt = p[1]; }
    ys.push_back(s);
  }

  LatentDgp dgp;
  dgp.pz1 = j.pz1;
  auto push_expanded = [&](double prob, double y0, double y1, std::uint8_t ts0,
                           std::uint8_t ts1) {
    // expand the T | Y,Z draws over both sides and both arms
    const auto f0z0 = f_t_given(y0, 0), f0z1 = f_t_given(y0, 1);
    const auto f1z0 = f_t_given(y1, 0), f1z1 = f_t_given(y1, 1);
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1)
        for (int b0 = 0; b0 < 2; ++b0)
          for (int b1 = 0; b1 < 2; ++b1) {
            const double p = prob * f0z0[a0] * f0z1[a1] * f1z0[b0] * f1z1[b1];
            if (p <= 0) continue;
            LatentDgp::Atom a{};
            a.prob = p;
            a.y0 = y0; a.y1 = y1;
            a.r0 = a.r1 = -1;
            a.t0_z0 = static_cast<std::uint8_t>(a0);
            a.t0_z1 = static_cast<std::uint8_t>(a1);
            a.t1_z0 = static_cast<std::uint8_t>(b0);
            a.t1_z1 = static_cast<std::uint8_t>(b1);
            a.ts0 = ts0; a.ts1 = ts1;
            dgp.atoms.push_back(a);
          }
  };
  for (const auto& s0 : ys) {
    if (s0.q0 <= 0) continue;
    for (const auto& s1 : ys) {
      if (s1.q1 <= 0) continue;
      push_expanded(tv_y * s0.q0 * s1.q1, s0.y, s1.y, 0, 1);
    }
  }
  for (const auto& s : ys) {
    if (s.at > 0) push_expanded(s.at, s.y, s.y, 1, 1);
    if (s.nt > 0) push_expanded(s.nt, s.y, s.y, 0, 0);
  }
  return dgp;
}

/// Probability mixture of two latent processes over the same instrument law.
inline LatentDgp mix(const LatentDgp& a, const LatentDgp& b, double lambda) {
  if (a.pz1 != b.pz1) throw ValidationError("mixture requires a common P(Z=1)");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda in [0,1]");
  LatentDgp out;
  out.pz1 = a.pz1;
  for (auto atom : a.atoms) {
    atom.prob *= lambda;
    if (atom.prob > 0) out.atoms.push_back(atom);
  }
  for (auto atom : b.atoms) {
    atom.prob *= 1.0 - lambda;
    if (atom.prob > 0) out.atoms.push_back(atom);
  }
  return out;
}

/// Discretizes a sample into a DiscreteJoint: support points are the
/// partition cells with pooled within-cell mean outcomes.
inline DiscreteJoint joint_from_table(const ObservationTable& tab,
                                      const CellPartition& part) {
  if (!part.split_by_t || (tab.has_r() && !part.split_by_r))
    throw ValidationError("joint_from_table needs cells constant in t (and r)");
  const std::size_t cells = part.cell_count();
  std::vector<double> ysum(cells, 0.0), cnt(cells, 0.0), c0(cells, 0.0),
      c1(cells, 0.0);
  std::vector<int> tval(cells, 0), rval(cells, -1);
  double n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < tab.n; ++i) {
    const std::size_t c = part.cell_index(tab, i);
    ysum[c] += tab.y[i];
    cnt[c] += 1;
    tval[c] = tab.t[i];
    if (tab.has_r()) rval[c] = tab.r[i];
    if (tab.z[i]) { c1[c] += 1; n1 += 1; }
    else          { c0[c] += 1; n0 += 1; }
  }
  DiscreteJoint j;
  j.pz1 = n1 / (n1 + n0);
  for (std::size_t c = 0; c < cells; ++c) {
    if (cnt[c] == 0) continue;
    j.pts.push_back({ysum[c] / cnt[c], static_cast<std::uint8_t>(tval[c]), rval[c]});
    j.p0.push_back(c0[c] / n0);
    j.p1.push_back(c1[c] / n1);
  }
  return j;
}

}  // namespace tvlate
