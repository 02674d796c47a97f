#include "margot/formulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace margot {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kPrunedNorm = 1e-8;

int node_level(int t) {
  int level = 0;
  while (t > 0) {
    t = (t - 1) / 2;
    ++level;
  }
  return level;
}

VariableMap make_map(ModelVariant variant, int depth, int num_features,
                     long num_samples) {
  VariableMap map;
  map.variant = variant;
  map.depth = depth;
  map.num_features = num_features;
  map.num_samples = num_samples;
  map.num_branch = (1 << depth) - 1;
  map.num_last_branch = 1 << (depth - 1);
  const long nb = map.num_branch;
  const long n = num_features;
  const long I = num_samples;
  const bool fs = variant != ModelVariant::Margot;

  map.w_offset = 0;
  map.b_offset = static_cast<int>(nb * n);
  map.xi_offset = map.b_offset + nb;
  map.z_offset = map.xi_offset + nb * I;
  long next = map.z_offset + I * map.num_last_branch;
  if (fs) {
    map.s_offset = static_cast<int>(next);
    next += nb * n;
  }
  if (variant == ModelVariant::Sfs) {
    map.u_offset = static_cast<int>(next);
    next += nb;
  }
  map.total_vars = next;

  const long nupper = nb - map.num_last_branch;
  long cur = 0;
  auto span = [&cur](long size) {
    VariableMap::RowSpan s{cur, cur + size};
    cur += size;
    return s;
  };
  map.margin_rows = span(nb * I);
  map.routing_right_rows = span(nupper * I);
  map.routing_left_rows = span(nupper * I);
  map.assignment_rows = span(I);
  map.linking_lower_rows = span(fs ? nb * n : 0);
  map.linking_upper_rows = span(fs ? nb * n : 0);
  map.budget_rows = span(variant == ModelVariant::Hfs ? nb : 0);
  map.excess_rows = span(variant == ModelVariant::Sfs ? nb : 0);
  return map;
}

long total_rows(const VariableMap& map) { return map.excess_rows.end; }

}  // namespace

const char* to_string(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::Margot: return "margot";
    case ModelVariant::Hfs: return "hfs";
    case ModelVariant::Sfs: return "sfs";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& name) {
  if (name == "margot") return ModelVariant::Margot;
  if (name == "hfs") return ModelVariant::Hfs;
  if (name == "sfs") return ModelVariant::Sfs;
  throw std::invalid_argument("unknown model variant '" + name + "'");
}

Hyperparameters Hyperparameters::uniform(int depth, double C_all) {
  Hyperparameters hp;
  hp.depth = depth;
  hp.C = VectorXd::Constant((1 << depth) - 1, C_all);
  return hp;
}

void Hyperparameters::set_level_costs(const std::vector<double>& per_level) {
  if (static_cast<int>(per_level.size()) != depth)
    throw std::invalid_argument("hyperparameters: one cost per level required");
  const int nb = (1 << depth) - 1;
  C.resize(nb);
  for (int t = 0; t < nb; ++t) C(t) = per_level[static_cast<std::size_t>(node_level(t))];
}

void Hyperparameters::set_level_budgets(const std::vector<int>& per_level) {
  if (static_cast<int>(per_level.size()) != depth)
    throw std::invalid_argument("hyperparameters: one budget per level required");
  const int nb = (1 << depth) - 1;
  budgets.resize(nb);
  for (int t = 0; t < nb; ++t)
    budgets(t) = per_level[static_cast<std::size_t>(node_level(t))];
}

void Hyperparameters::validate(ModelVariant variant, int num_features) const {
  if (depth < 1 || depth > 16)
    throw std::invalid_argument("hyperparameters: depth must be in [1, 16]");
  const int nb = (1 << depth) - 1;
  if (C.size() != nb)
    throw std::invalid_argument("hyperparameters: need one C per branch node");
  for (int t = 0; t < nb; ++t)
    if (!(C(t) > 0.0) || !std::isfinite(C(t)))
      throw std::invalid_argument("hyperparameters: C must be positive");
  if (!(epsilon > 0.0) || !(M_xi > 0.0) || !(M_h > 0.0) || !(M_w > 0.0))
    throw std::invalid_argument("hyperparameters: epsilon and big-M constants must be positive");
  if (epsilon >= M_h)
    throw std::invalid_argument("hyperparameters: epsilon must be smaller than M_h");
  if (variant != ModelVariant::Margot) {
    if (budgets.size() != nb)
      throw std::invalid_argument("hyperparameters: need one budget per branch node");
    for (int t = 0; t < nb; ++t)
      if (budgets(t) < 1 || budgets(t) > num_features)
        throw std::invalid_argument("hyperparameters: budgets must be in [1, num_features]");
  }
  if (variant == ModelVariant::Sfs && (!(alpha >= 0.0) || !std::isfinite(alpha)))
    throw std::invalid_argument("hyperparameters: alpha must be nonnegative");
}

long VariableMap::w_index(int t, int j) const {
  if (t < 0 || t >= num_branch || j < 0 || j >= num_features)
    throw std::out_of_range("w index");
  return w_offset + static_cast<long>(t) * num_features + j;
}

long VariableMap::b_index(int t) const {
  if (t < 0 || t >= num_branch) throw std::out_of_range("b index");
  return b_offset + t;
}

long VariableMap::xi_index(int t, long i) const {
  if (t < 0 || t >= num_branch || i < 0 || i >= num_samples)
    throw std::out_of_range("xi index");
  return xi_offset + static_cast<long>(t) * num_samples + i;
}

long VariableMap::z_index(long i, int t) const {
  const int off = t - (num_last_branch - 1);
  if (i < 0 || i >= num_samples || off < 0 || off >= num_last_branch)
    throw std::out_of_range("z index");
  return z_offset + i * num_last_branch + off;
}

long VariableMap::s_index(int t, int j) const {
  if (s_offset < 0) throw std::out_of_range("variant has no selector bits");
  if (t < 0 || t >= num_branch || j < 0 || j >= num_features)
    throw std::out_of_range("s index");
  return s_offset + static_cast<long>(t) * num_features + j;
}

long VariableMap::u_index(int t) const {
  if (u_offset < 0) throw std::out_of_range("variant has no excess variables");
  if (t < 0 || t >= num_branch) throw std::out_of_range("u index");
  return u_offset + t;
}

namespace {

BuiltModel build_common(ModelVariant variant, const Dataset& data,
                        const Hyperparameters& hp) {
  data.validate();
  const int n = data.cols();
  const long I = data.rows();
  hp.validate(variant, n);

  BuiltModel model;
  model.variant = variant;
  model.hp = hp;
  model.topology = build_topology(hp.depth);
  model.map = make_map(variant, hp.depth, n, I);
  const VariableMap& map = model.map;
  const TreeTopology& topo = model.topology;
  model.size_warning = map.num_last_branch > I;

  QuadraticProgram base = QuadraticProgram::make(
      static_cast<int>(map.total_vars), static_cast<int>(total_rows(map)));

  for (int t = 0; t < map.num_branch; ++t) {
    for (int j = 0; j < n; ++j) {
      const long wi = map.w_index(t, j);
      base.P(wi, wi) = 1.0;
    }
    for (long i = 0; i < I; ++i) base.q(map.xi_index(t, i)) = hp.C(t);
  }

  // Generous caps on b and xi so every variable carries a finite box.
  // Routing everything down the right spine with w = 0 costs at most
  // I * sum_t C_t, which caps ||w_t|| at any optimum and in turn caps the
  // optimal intercepts and slacks.  The caps never bind; they exist so the
  // solver can certify lower bounds from inexact dual iterates.
  double x_norm_max = 0.0;
  for (long i = 0; i < I; ++i)
    x_norm_max = std::max(x_norm_max, data.X.row(i).norm());
  double cost_sum = 0.0;
  for (int t = 0; t < map.num_branch; ++t) cost_sum += hp.C(t);
  const double h_cap =
      std::sqrt(2.0 * static_cast<double>(I) * cost_sum) * x_norm_max;
  const double b_cap = 1.0 + hp.M_h + h_cap;
  const double xi_cap = 1.0 + h_cap + b_cap;

  for (int t = 0; t < map.num_branch; ++t) {
    base.lb(map.b_index(t)) = -b_cap;
    base.ub(map.b_index(t)) = b_cap;
    for (long i = 0; i < I; ++i) {
      base.lb(map.xi_index(t, i)) = 0.0;
      base.ub(map.xi_index(t, i)) = xi_cap;
    }
  }
  for (long i = 0; i < I; ++i)
    for (int t : topo.last_branch_nodes) {
      base.lb(map.z_index(i, t)) = 0.0;
      base.ub(map.z_index(i, t)) = 1.0;
    }

  // margin rows: y_i (w_t'x_i + b_t) + xi_ti - M_xi sum_{l under t} z_il
  // >= 1 - M_xi, which activates exactly when sample i lands under node t
  for (int t = 0; t < map.num_branch; ++t) {
    for (long i = 0; i < I; ++i) {
      const long row = map.margin_rows.begin + static_cast<long>(t) * I + i;
      for (int j = 0; j < n; ++j)
        base.A(row, map.w_index(t, j)) = data.y(i) * data.X(i, j);
      base.A(row, map.b_index(t)) = data.y(i);
      base.A(row, map.xi_index(t, i)) = 1.0;
      for (int l : topo.subtree_last[static_cast<std::size_t>(t)])
        base.A(row, map.z_index(i, l)) = -hp.M_xi;
      base.cl(row) = 1.0 - hp.M_xi;
    }
  }

  // routing rows at the upper nodes: a sample assigned into the right half
  // must satisfy h_t >= 0, into the left half h_t <= -epsilon
  for (std::size_t k = 0; k < topo.upper_branch_nodes.size(); ++k) {
    const int t = topo.upper_branch_nodes[k];
    for (long i = 0; i < I; ++i) {
      const long right_row =
          map.routing_right_rows.begin + static_cast<long>(k) * I + i;
      const long left_row =
          map.routing_left_rows.begin + static_cast<long>(k) * I + i;
      for (int j = 0; j < n; ++j) {
        base.A(right_row, map.w_index(t, j)) = data.X(i, j);
        base.A(left_row, map.w_index(t, j)) = data.X(i, j);
      }
      base.A(right_row, map.b_index(t)) = 1.0;
      base.A(left_row, map.b_index(t)) = 1.0;
      for (int l : topo.subtree_last_right[static_cast<std::size_t>(t)])
        base.A(right_row, map.z_index(i, l)) = -hp.M_h;
      for (int l : topo.subtree_last_left[static_cast<std::size_t>(t)])
        base.A(left_row, map.z_index(i, l)) = hp.M_h;
      base.cl(right_row) = -hp.M_h;
      base.cu(left_row) = hp.M_h - hp.epsilon;
    }
  }

  for (long i = 0; i < I; ++i) {
    const long row = map.assignment_rows.begin + i;
    for (int t : topo.last_branch_nodes) base.A(row, map.z_index(i, t)) = 1.0;
    base.cl(row) = 1.0;
    base.cu(row) = 1.0;
  }

  if (variant != ModelVariant::Margot) {
    for (int t = 0; t < map.num_branch; ++t) {
      for (int j = 0; j < n; ++j) {
        const long lo = map.linking_lower_rows.begin +
                        static_cast<long>(t) * n + j;
        const long hi = map.linking_upper_rows.begin +
                        static_cast<long>(t) * n + j;
        base.A(lo, map.w_index(t, j)) = 1.0;
        base.A(lo, map.s_index(t, j)) = hp.M_w;
        base.cl(lo) = 0.0;
        base.A(hi, map.w_index(t, j)) = 1.0;
        base.A(hi, map.s_index(t, j)) = -hp.M_w;
        base.cu(hi) = 0.0;
        base.lb(map.s_index(t, j)) = 0.0;
        base.ub(map.s_index(t, j)) = 1.0;
      }
    }
  }
  if (variant == ModelVariant::Hfs) {
    for (int t = 0; t < map.num_branch; ++t) {
      const long row = map.budget_rows.begin + t;
      for (int j = 0; j < n; ++j) base.A(row, map.s_index(t, j)) = 1.0;
      base.cu(row) = hp.budgets(t);
    }
  }
  if (variant == ModelVariant::Sfs) {
    for (int t = 0; t < map.num_branch; ++t) {
      base.q(map.u_index(t)) = hp.alpha;
      base.lb(map.u_index(t)) = 0.0;
      base.ub(map.u_index(t)) = static_cast<double>(n);
      const long row = map.excess_rows.begin + t;
      base.A(row, map.u_index(t)) = 1.0;
      for (int j = 0; j < n; ++j) base.A(row, map.s_index(t, j)) = -1.0;
      base.cl(row) = -static_cast<double>(hp.budgets(t));
    }
  }

  model.prob.base = std::move(base);
  for (long i = 0; i < I; ++i)
    for (int t : topo.last_branch_nodes)
      model.prob.binary_vars.push_back(static_cast<int>(map.z_index(i, t)));
  if (variant != ModelVariant::Margot)
    for (int t = 0; t < map.num_branch; ++t)
      for (int j = 0; j < n; ++j)
        model.prob.binary_vars.push_back(static_cast<int>(map.s_index(t, j)));
  std::sort(model.prob.binary_vars.begin(), model.prob.binary_vars.end());
  model.prob.validate();
  return model;
}

}  // namespace

BuiltModel build_margot(const Dataset& data, const Hyperparameters& hp) {
  return build_common(ModelVariant::Margot, data, hp);
}
BuiltModel build_hfs(const Dataset& data, const Hyperparameters& hp) {
  return build_common(ModelVariant::Hfs, data, hp);
}
BuiltModel build_sfs(const Dataset& data, const Hyperparameters& hp) {
  return build_common(ModelVariant::Sfs, data, hp);
}
BuiltModel build_model(ModelVariant variant, const Dataset& data,
                       const Hyperparameters& hp) {
  return build_common(variant, data, hp);
}

ModelSolution decode_solution(const Eigen::VectorXd& x, const VariableMap& map) {
  if (x.size() != map.total_vars)
    throw std::invalid_argument("decode: wrong vector length");
  ModelSolution sol;
  const int n = map.num_features;
  const long I = map.num_samples;
  sol.w.resize(map.num_branch, n);
  sol.b.resize(map.num_branch);
  sol.xi.resize(map.num_branch, I);
  sol.z.resize(I, map.num_last_branch);
  for (int t = 0; t < map.num_branch; ++t) {
    for (int j = 0; j < n; ++j) sol.w(t, j) = x(map.w_index(t, j));
    sol.b(t) = x(map.b_index(t));
    for (long i = 0; i < I; ++i) sol.xi(t, i) = x(map.xi_index(t, i));
  }
  const int first_last = map.num_last_branch - 1;
  for (long i = 0; i < I; ++i)
    for (int c = 0; c < map.num_last_branch; ++c)
      sol.z(i, c) = x(map.z_index(i, first_last + c));
  if (map.s_offset >= 0) {
    sol.s.resize(map.num_branch, n);
    for (int t = 0; t < map.num_branch; ++t)
      for (int j = 0; j < n; ++j) sol.s(t, j) = x(map.s_index(t, j));
  }
  if (map.u_offset >= 0) {
    sol.u.resize(map.num_branch);
    for (int t = 0; t < map.num_branch; ++t) sol.u(t) = x(map.u_index(t));
  }
  return sol;
}

Eigen::VectorXd encode_solution(const ModelSolution& sol,
                                const VariableMap& map) {
  const int n = map.num_features;
  const long I = map.num_samples;
  if (sol.w.rows() != map.num_branch || sol.w.cols() != n ||
      sol.b.size() != map.num_branch || sol.xi.rows() != map.num_branch ||
      sol.xi.cols() != I || sol.z.rows() != I ||
      sol.z.cols() != map.num_last_branch)
    throw std::invalid_argument("encode: block shapes do not match the map");
  VectorXd x = VectorXd::Zero(map.total_vars);
  for (int t = 0; t < map.num_branch; ++t) {
    for (int j = 0; j < n; ++j) x(map.w_index(t, j)) = sol.w(t, j);
    x(map.b_index(t)) = sol.b(t);
    for (long i = 0; i < I; ++i) x(map.xi_index(t, i)) = sol.xi(t, i);
  }
  const int first_last = map.num_last_branch - 1;
  for (long i = 0; i < I; ++i)
    for (int c = 0; c < map.num_last_branch; ++c)
      x(map.z_index(i, first_last + c)) = sol.z(i, c);
  if (map.s_offset >= 0) {
    if (sol.s.rows() == map.num_branch && sol.s.cols() == n)
      for (int t = 0; t < map.num_branch; ++t)
        for (int j = 0; j < n; ++j) x(map.s_index(t, j)) = sol.s(t, j);
    else if (sol.s.size() != 0)
      throw std::invalid_argument("encode: selector block shape mismatch");
  }
  if (map.u_offset >= 0) {
    if (sol.u.size() == map.num_branch)
      for (int t = 0; t < map.num_branch; ++t) x(map.u_index(t)) = sol.u(t);
    else if (sol.u.size() != 0)
      throw std::invalid_argument("encode: excess block shape mismatch");
  }
  return x;
}

double FeasibilityReport::worst_constraint() const {
  return std::max({margin, routing, assignment, linking, budget, excess,
                   variable_bounds, integrality});
}

bool FeasibilityReport::feasible(double feas_tol, double int_tol) const {
  return margin <= feas_tol && routing <= feas_tol && assignment <= feas_tol &&
         linking <= feas_tol && budget <= feas_tol && excess <= feas_tol &&
         variable_bounds <= feas_tol && integrality <= int_tol;
}

FeasibilityReport check_feasible(const Eigen::VectorXd& x,
                                 const BuiltModel& model) {
  const auto& base = model.prob.base;
  if (x.size() != base.num_vars())
    throw std::invalid_argument("check: wrong vector length");
  const VariableMap& map = model.map;
  FeasibilityReport rep;

  const VectorXd ax = base.A * x;
  auto family_violation = [&](VariableMap::RowSpan span) {
    double worst = 0.0;
    for (long r = span.begin; r < span.end; ++r) {
      const int ri = static_cast<int>(r);
      worst = std::max({worst, base.cl(ri) - ax(ri), ax(ri) - base.cu(ri)});
    }
    return worst;
  };
  rep.margin = family_violation(map.margin_rows);
  rep.routing = std::max(family_violation(map.routing_right_rows),
                         family_violation(map.routing_left_rows));
  rep.assignment = family_violation(map.assignment_rows);
  rep.linking = std::max(family_violation(map.linking_lower_rows),
                         family_violation(map.linking_upper_rows));
  rep.budget = family_violation(map.budget_rows);
  rep.excess = family_violation(map.excess_rows);
  if (map.u_offset >= 0)
    for (int t = 0; t < map.num_branch; ++t)
      rep.excess = std::max(rep.excess, -x(map.u_index(t)));

  for (long j = 0; j < x.size(); ++j) {
    if (map.u_offset >= 0 && j >= map.u_offset &&
        j < map.u_offset + map.num_branch)
      continue;  // u >= 0 is reported under excess
    const int ji = static_cast<int>(j);
    rep.variable_bounds = std::max(
        {rep.variable_bounds, base.lb(ji) - x(j), x(j) - base.ub(ji)});
  }
  for (int j : model.prob.binary_vars)
    rep.integrality =
        std::max(rep.integrality, std::abs(x(j) - std::round(x(j))));
  return rep;
}

FeasibilityReport check_feasible(const ModelSolution& sol,
                                 const BuiltModel& model) {
  return check_feasible(encode_solution(sol, model.map), model);
}

bool big_m_binding(const ModelSolution& sol, const BuiltModel& model,
                   double tol) {
  const VariableMap& map = model.map;
  const Hyperparameters& hp = model.hp;
  const TreeTopology& topo = model.topology;
  const VectorXd x = encode_solution(sol, map);
  const VectorXd ax = model.prob.base.A * x;
  const int first_last = map.num_last_branch - 1;

  auto assigned_under = [&](long i, const std::vector<int>& last_nodes) {
    double total = 0.0;
    for (int l : last_nodes) total += sol.z(i, l - first_last);
    return total > 0.5;
  };

  for (int t = 0; t < map.num_branch; ++t)
    for (long i = 0; i < map.num_samples; ++i) {
      if (assigned_under(i, topo.subtree_last[static_cast<std::size_t>(t)]))
        continue;
      const long row = map.margin_rows.begin + static_cast<long>(t) * map.num_samples + i;
      if (ax(static_cast<int>(row)) <= (1.0 - hp.M_xi) + tol) return true;
    }
  for (std::size_t k = 0; k < topo.upper_branch_nodes.size(); ++k) {
    const int t = topo.upper_branch_nodes[k];
    for (long i = 0; i < map.num_samples; ++i) {
      const long rr = map.routing_right_rows.begin +
                      static_cast<long>(k) * map.num_samples + i;
      const long lr = map.routing_left_rows.begin +
                      static_cast<long>(k) * map.num_samples + i;
      if (!assigned_under(i, topo.subtree_last_right[static_cast<std::size_t>(t)]) &&
          ax(static_cast<int>(rr)) <= -hp.M_h + tol)
        return true;
      if (!assigned_under(i, topo.subtree_last_left[static_cast<std::size_t>(t)]) &&
          ax(static_cast<int>(lr)) >= (hp.M_h - hp.epsilon) - tol)
        return true;
    }
  }
  if (map.s_offset >= 0)
    for (int t = 0; t < map.num_branch; ++t)
      for (int j = 0; j < map.num_features; ++j)
        if (sol.s(t, j) > 0.5 && std::abs(sol.w(t, j)) >= hp.M_w - tol)
          return true;
  return false;
}

TreeClassifier extract_tree(const ModelSolution& sol, const VariableMap& map,
                            const Hyperparameters&, const Dataset& data) {
  if (data.rows() != map.num_samples || data.cols() != map.num_features)
    throw std::invalid_argument("extract: dataset does not match the map");
  TreeClassifier clf;
  clf.topology = build_topology(map.depth);
  clf.weights = sol.w;
  clf.intercepts = sol.b;
  clf.feature_names = data.feature_names;
  const TreeTopology& topo = clf.topology;
  const int first_last = map.num_last_branch - 1;

  // assigned last-level node per sample
  std::vector<int> assigned(static_cast<std::size_t>(map.num_samples));
  for (long i = 0; i < map.num_samples; ++i) {
    int best = 0;
    for (int c = 1; c < map.num_last_branch; ++c)
      if (sol.z(i, c) > sol.z(i, best)) best = c;
    assigned[static_cast<std::size_t>(i)] = first_last + best;
  }
  std::vector<std::vector<char>> under(
      static_cast<std::size_t>(map.num_branch));
  for (int t = 0; t < map.num_branch; ++t) {
    auto& flags = under[static_cast<std::size_t>(t)];
    flags.assign(static_cast<std::size_t>(map.num_samples), 0);
    const auto& last = topo.subtree_last[static_cast<std::size_t>(t)];
    for (long i = 0; i < map.num_samples; ++i)
      if (std::find(last.begin(), last.end(),
                    assigned[static_cast<std::size_t>(i)]) != last.end())
        flags[static_cast<std::size_t>(i)] = 1;
  }

  for (int t = 0; t < map.num_branch; ++t) {
    if (clf.weights.row(t).cwiseAbs().maxCoeff() > kPrunedNorm) continue;
    long pos = 0, neg = 0;
    for (long i = 0; i < map.num_samples; ++i)
      if (under[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)])
        (data.y(i) > 0 ? pos : neg)++;
    if (pos > 0 && neg > 0) continue;  // mixed node keeps its optimized split
    const double label = pos + neg == 0 ? 1.0 : (pos > 0 ? 1.0 : -1.0);
    const double dir = clf.intercepts(t) >= 0.0 ? 1.0 : -1.0;
    if (pos + neg == 0 || dir == label) clf.intercepts(t) = label;
  }

  // repair roundoff on binding right-routing rows: the smallest intercept
  // lift that puts every right-assigned sample at h >= 0 without pushing a
  // left-assigned one across
  for (std::size_t k = 0; k < topo.upper_branch_nodes.size(); ++k) {
    const int t = topo.upper_branch_nodes[k];
    double min_right = kInf, max_left = -kInf;
    for (long i = 0; i < map.num_samples; ++i) {
      if (!under[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)])
        continue;
      const double h = clf.node_value(t, data.X.row(i).transpose());
      const bool right =
          std::find(topo.subtree_last_right[static_cast<std::size_t>(t)].begin(),
                    topo.subtree_last_right[static_cast<std::size_t>(t)].end(),
                    assigned[static_cast<std::size_t>(i)]) !=
          topo.subtree_last_right[static_cast<std::size_t>(t)].end();
      if (right)
        min_right = std::min(min_right, h);
      else
        max_left = std::max(max_left, h);
    }
    if (min_right < 0.0 && std::isfinite(min_right)) {
      const double lift = -min_right + std::max(1e-12, -min_right * 1e-3);
      if (max_left + lift < 0.0) clf.intercepts(t) += lift;
    }
  }
  return clf;
}

FeatureReport feature_report(const TreeClassifier& clf) {
  FeatureReport rep;
  const int nb = clf.topology.num_branch();
  const int n = clf.num_features();
  rep.per_node = Eigen::VectorXi::Zero(nb);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  for (int t = 0; t < nb; ++t)
    for (int j = 0; j < n; ++j)
      if (std::abs(clf.weights(t, j)) > kPrunedNorm) {
        rep.per_node(t) += 1;
        used[static_cast<std::size_t>(j)] = 1;
      }
  rep.distinct_features =
      static_cast<int>(std::count(used.begin(), used.end(), 1));
  return rep;
}

ModelDimensions expected_dimensions(ModelVariant variant, int depth,
                                    int num_features, long num_samples) {
  if (depth < 1) throw std::invalid_argument("dimensions: depth must be >= 1");
  const long nb = (1L << depth) - 1;
  const long nlast = 1L << (depth - 1);
  const long nupper = nb - nlast;
  const long n = num_features;
  const long I = num_samples;
  ModelDimensions dims;
  dims.continuous_vars = (n + 1 + I) * nb;
  dims.binary_vars = I * nlast;
  dims.margin_rows = nb * I;
  dims.routing_rows = 2 * nupper * I;
  dims.assignment_rows = I;
  if (variant != ModelVariant::Margot) {
    dims.binary_vars += nb * n;
    dims.linking_rows = 2 * nb * n;
  }
  if (variant == ModelVariant::Hfs) dims.budget_rows = nb;
  if (variant == ModelVariant::Sfs) {
    dims.continuous_vars += nb;
    dims.excess_rows = nb;
  }
  return dims;
}

void dump_problem(const BuiltModel& model, const std::string& path) {
  const auto& base = model.prob.base;
  const VariableMap& map = model.map;
  nlohmann::json doc;
  doc["variant"] = to_string(model.variant);
  doc["depth"] = map.depth;
  doc["num_features"] = map.num_features;
  doc["num_samples"] = map.num_samples;
  doc["num_vars"] = base.num_vars();
  doc["num_rows"] = base.num_rows();

  auto limit = [](double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  nlohmann::json offsets;
  offsets["w"] = map.w_offset;
  offsets["b"] = map.b_offset;
  offsets["xi"] = map.xi_offset;
  offsets["z"] = map.z_offset;
  offsets["s"] = map.s_offset;
  offsets["u"] = map.u_offset;
  doc["offsets"] = std::move(offsets);

  nlohmann::json spans;
  auto add_span = [&spans](const char* name, VariableMap::RowSpan s) {
    spans[name] = {{"begin", s.begin}, {"end", s.end}};
  };
  add_span("margin", map.margin_rows);
  add_span("routing_right", map.routing_right_rows);
  add_span("routing_left", map.routing_left_rows);
  add_span("assignment", map.assignment_rows);
  add_span("linking_lower", map.linking_lower_rows);
  add_span("linking_upper", map.linking_upper_rows);
  add_span("budget", map.budget_rows);
  add_span("excess", map.excess_rows);
  doc["row_spans"] = std::move(spans);

  nlohmann::json p_trip = nlohmann::json::array();
  for (int i = 0; i < base.num_vars(); ++i)
    for (int j = 0; j < base.num_vars(); ++j)
      if (base.P(i, j) != 0.0) p_trip.push_back({i, j, base.P(i, j)});
  doc["P"] = std::move(p_trip);

  nlohmann::json q_entries = nlohmann::json::array();
  for (int j = 0; j < base.num_vars(); ++j)
    if (base.q(j) != 0.0) q_entries.push_back({j, base.q(j)});
  doc["q"] = std::move(q_entries);

  nlohmann::json a_trip = nlohmann::json::array();
  for (int i = 0; i < base.num_rows(); ++i)
    for (int j = 0; j < base.num_vars(); ++j)
      if (base.A(i, j) != 0.0) a_trip.push_back({i, j, base.A(i, j)});
  doc["A"] = std::move(a_trip);

  nlohmann::json cl = nlohmann::json::array(), cu = nlohmann::json::array();
  for (int i = 0; i < base.num_rows(); ++i) {
    cl.push_back(limit(base.cl(i)));
    cu.push_back(limit(base.cu(i)));
  }
  doc["cl"] = std::move(cl);
  doc["cu"] = std::move(cu);

  nlohmann::json lb = nlohmann::json::array(), ub = nlohmann::json::array();
  for (int j = 0; j < base.num_vars(); ++j) {
    lb.push_back(limit(base.lb(j)));
    ub.push_back(limit(base.ub(j)));
  }
  doc["lb"] = std::move(lb);
  doc["ub"] = std::move(ub);
  doc["binary_vars"] = model.prob.binary_vars;
  doc["time_limit_default"] = 600;
  doc["warm_start_limit_default"] = 30;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace margot
