#include "kdarek/safectrl.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <deque>

#include "kdarek/errors.hpp"
#include "kdarek/parallel.hpp"

namespace kdarek::ctrl {

namespace {

Eigen::Matrix4d dyn_a(double dt) {
  Eigen::Matrix4d a = Eigen::Matrix4d::Identity();
  a(0, 2) = dt;
  a(1, 3) = dt;
  return a;
}

Eigen::Matrix<double, 4, 2> dyn_b(double dt) {
  Eigen::Matrix<double, 4, 2> b = Eigen::Matrix<double, 4, 2>::Zero();
  b(0, 0) = 0.5 * dt * dt;
  b(1, 1) = 0.5 * dt * dt;
  b(2, 0) = dt;
  b(3, 1) = dt;
  return b;
}

}  // namespace

State step_dynamics(const State& x, const Input& u, const State& d,
                    double dt) {
  State next;
  next.head<2>() = x.head<2>() + x.tail<2>() * dt + 0.5 * dt * dt * u;
  next.tail<2>() = x.tail<2>() + dt * u;
  return next + d;
}

Input mpc_reference(const State& x, const Eigen::Vector2d& goal, int horizon,
                    double dt) {
  if (horizon < 1) throw DimensionMismatch("mpc horizon must be >= 1");
  const Eigen::Matrix4d a = dyn_a(dt);
  const Eigen::Matrix<double, 4, 2> b = dyn_b(dt);
  const Eigen::Vector4d q_diag(1.0, 1.0, 0.6, 0.6);
  const Eigen::Matrix4d q = q_diag.asDiagonal();
  const Eigen::Matrix2d r = 0.25 * Eigen::Matrix2d::Identity();
  const Eigen::Matrix4d qf = 8.0 * q;

  Eigen::Matrix4d p = qf;
  Eigen::Matrix<double, 2, 4> gain = Eigen::Matrix<double, 2, 4>::Zero();
  for (int t = horizon - 1; t >= 0; --t) {
    const Eigen::Matrix2d s = r + b.transpose() * p * b;
    gain = s.ldlt().solve(b.transpose() * p * a);
    p = q + a.transpose() * p * (a - b * gain);
  }
  State err = x;
  err.head<2>() -= goal;
  return -gain * err;
}

namespace {

constexpr double kTiny = 1e-9;

// Braking-distance barrier: nonnegative when the closing speed can still be
// absorbed by braking before the separation drops to min_distance.
double barrier(const Eigen::Vector2d& dp, const Eigen::Vector2d& dv,
               const CbfParams& prm) {
  const double dist = std::max(dp.norm(), kTiny);
  const double gap = dist - prm.min_distance;
  const double radial = dp.dot(dv) / dist;
  const double brake =
      (gap >= 0.0 ? 1.0 : -1.0) * std::sqrt(2.0 * prm.braking_accel * std::abs(gap));
  return brake + radial;
}

void barrier_gradient(const Eigen::Vector2d& dp, const Eigen::Vector2d& dv,
                      const CbfParams& prm, Eigen::Vector2d& g_dp,
                      Eigen::Vector2d& g_dv) {
  const double dist = std::max(dp.norm(), kTiny);
  const double gap = dist - prm.min_distance;
  const double s = std::max(std::sqrt(2.0 * prm.braking_accel * std::abs(gap)),
                            1e-4);
  const Eigen::Vector2d dir = dp / dist;
  g_dp = (prm.braking_accel / s) * dir + dv / dist -
         dp * (dp.dot(dv)) / (dist * dist * dist);
  g_dv = dir;
}

}  // namespace

FilterResult cbf_filter(const Input& u_ref, const State& x,
                        const std::vector<OtherAgent>& others,
                        const DisturbancePolytope& polytope,
                        const CbfParams& prm) {
  FilterResult out;
  const double dt = prm.dt;
  const Eigen::Vector2d p = x.head<2>();
  const Eigen::Vector2d v = x.tail<2>();
  const Eigen::Vector2d p_next = p + v * dt;  // zero-input ego position
  const Eigen::Vector2d v_next = v;

  const int n_cbf = static_cast<int>(others.size());
  Eigen::MatrixXd rows(n_cbf + 4, 2);
  Eigen::VectorXd rhs(n_cbf + 4);

  for (int j = 0; j < n_cbf; ++j) {
    const auto& o = others[j];
    const Eigen::Vector2d po_next = o.position + o.velocity * dt;
    const double h_now = barrier(p - o.position, v - o.velocity, prm);

    // Worst polytope vertex for the zero-input next-step barrier.
    double worst = std::numeric_limits<double>::infinity();
    Eigen::Vector2d worst_dp = Eigen::Vector2d::Zero();
    Eigen::Vector2d worst_dv = Eigen::Vector2d::Zero();
    for (int mask = 0; mask < 16; ++mask) {
      Eigen::Vector2d d_p(polytope.half_width(0) * ((mask & 1) ? 1 : -1),
                          polytope.half_width(1) * ((mask & 2) ? 1 : -1));
      Eigen::Vector2d d_v(polytope.half_width(2) * ((mask & 4) ? 1 : -1),
                          polytope.half_width(3) * ((mask & 8) ? 1 : -1));
      const double h = barrier(p_next + d_p - po_next,
                               v_next + d_v - o.velocity, prm);
      if (h < worst) {
        worst = h;
        worst_dp = d_p;
        worst_dv = d_v;
      }
    }

    Eigen::Vector2d g_dp, g_dv;
    barrier_gradient(p_next + worst_dp - po_next, v_next + worst_dv - o.velocity,
                     prm, g_dp, g_dv);
    const Eigen::Vector2d a_u = 0.5 * dt * dt * g_dp + dt * g_dv;
    // worst + a_u'u >= (1-gamma) h_now
    rows.row(j) = -a_u.transpose();
    rhs(j) = worst - (1.0 - prm.gamma) * h_now;
  }
  // Actuator box.
  rows.row(n_cbf) << 1.0, 0.0;
  rows.row(n_cbf + 1) << -1.0, 0.0;
  rows.row(n_cbf + 2) << 0.0, 1.0;
  rows.row(n_cbf + 3) << 0.0, -1.0;
  rhs.segment(n_cbf, 4).setConstant(prm.u_max);

  const Eigen::Matrix2d h2 = 2.0 * Eigen::Matrix2d::Identity();
  const Eigen::Vector2d f2 = -2.0 * u_ref;
  qp::QpResult sol = qp::solve(h2, f2, rows, rhs);
  if (sol.status == qp::QpStatus::Optimal) {
    out.u = sol.x;
    out.kkt_residual = sol.kkt_residual;
    for (Eigen::Index i = 0; i < sol.lambda.size(); ++i) {
      if (sol.lambda(i) > 1e-10) ++out.active_constraints;
    }
    return out;
  }

  // Slack-relaxed fallback: heavily penalized violations of the barrier
  // rows, box kept hard. Always feasible inside the actuator box.
  out.fallback = true;
  const int nv = 2 + n_cbf;
  Eigen::MatrixXd hs = Eigen::MatrixXd::Zero(nv, nv);
  hs(0, 0) = hs(1, 1) = 2.0;
  for (int j = 0; j < n_cbf; ++j) hs(2 + j, 2 + j) = 2.0e4;
  Eigen::VectorXd fs = Eigen::VectorXd::Zero(nv);
  fs.head<2>() = -2.0 * u_ref;
  Eigen::MatrixXd as = Eigen::MatrixXd::Zero(n_cbf + 4 + n_cbf, nv);
  Eigen::VectorXd bs(n_cbf + 4 + n_cbf);
  for (int j = 0; j < n_cbf; ++j) {
    as.block(j, 0, 1, 2) = rows.row(j);
    as(j, 2 + j) = -1.0;  // a'u - s_j <= b_j
    bs(j) = rhs(j);
  }
  as.block(n_cbf, 0, 4, 2) = rows.bottomRows(4);
  bs.segment(n_cbf, 4).setConstant(prm.u_max);
  for (int j = 0; j < n_cbf; ++j) {
    as(n_cbf + 4 + j, 2 + j) = -1.0;  // s_j >= 0
    bs(n_cbf + 4 + j) = 0.0;
  }
  qp::QpResult relaxed = qp::solve(hs, fs, as, bs, 400);
  out.u = relaxed.x.head<2>();
  out.kkt_residual = relaxed.kkt_residual;
  return out;
}

State KdarekDisturbance::predict(const State& x, const Input& u) const {
  Eigen::VectorXd z(6);
  z << x, u;
  return eval_.predict(z);
}

State KdarekDisturbance::bound(const State& x, const Input& u) const {
  Eigen::VectorXd z(6);
  z << x, u;
  return eval_.bound_at(z).total;
}

State DarekDisturbance::predict(const State& x, const Input& u) const {
  Eigen::VectorXd z(6);
  z << x, u;
  return model_.forward(z).output;
}

State DarekDisturbance::bound(const State& x, const Input& u) const {
  Eigen::VectorXd z(6);
  z << x, u;
  return base::darek_two_layer_bound(model_, ctx_, z).total;
}

namespace {

struct Other {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
  Eigen::Vector2d waypoint_a, waypoint_b;
  bool toward_b = true;
  double speed = 1.0;
};

std::vector<Other> spawn_others(const WorldConfig& cfg, Rng& rng) {
  std::vector<Other> others(cfg.n_other_agents);
  const Eigen::Vector2d corridor = cfg.goal - cfg.start;
  for (int i = 0; i < cfg.n_other_agents; ++i) {
    auto& o = others[i];
    // Crossing lane through the ego corridor, staggered along it.
    const double frac =
        (i + 0.7 + cfg.other_jitter * rng.symmetric(1.0)) /
        (cfg.n_other_agents + 0.4);
    const Eigen::Vector2d on_path = cfg.start + frac * corridor;
    const Eigen::Vector2d normal =
        Eigen::Vector2d(-corridor.y(), corridor.x()).normalized();
    const double side = (i % 2 == 0) ? 1.0 : -1.0;
    const double reach = 9.0 + 2.0 * rng.symmetric(1.0);
    o.waypoint_a = on_path + side * reach * normal;
    o.waypoint_b = on_path - side * reach * normal;
    const double lead = rng.uniform(0.15, 0.75);
    o.position = o.waypoint_a + lead * (o.waypoint_b - o.waypoint_a);
    o.speed = cfg.other_speed * (1.0 + 0.3 * rng.symmetric(1.0));
    o.toward_b = true;
    o.velocity = (o.waypoint_b - o.position).normalized() * o.speed;
  }
  return others;
}

void step_other(Other& o, double dt) {
  const Eigen::Vector2d target = o.toward_b ? o.waypoint_b : o.waypoint_a;
  if ((target - o.position).norm() < 0.5) {
    o.toward_b = !o.toward_b;
  }
  const Eigen::Vector2d next = o.toward_b ? o.waypoint_b : o.waypoint_a;
  o.velocity = (next - o.position).normalized() * o.speed;
  o.position += o.velocity * dt;
}

void hash_state(std::uint64_t& h, const State& x) {
  unsigned char bytes[sizeof(double) * 4];
  std::memcpy(bytes, x.data(), sizeof(bytes));
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
}

}  // namespace

TrialOutcome run_trial(const WorldConfig& cfg, const DisturbanceModel& model,
                       std::uint64_t seed,
                       std::vector<TrajectoryRow>* trajectory) {
  Rng rng(seed);
  std::vector<Other> others = spawn_others(cfg, rng);

  State ego = State::Zero();
  ego.head<2>() = cfg.start;

  CbfParams prm;
  prm.dt = cfg.dt;
  prm.gamma = cfg.cbf_gamma;
  prm.u_max = cfg.u_max;
  prm.braking_accel = cfg.u_max;
  prm.min_distance = 2.0 * cfg.agent_radius + cfg.safety_margin;

  TrialOutcome out;
  out.trajectory_hash = 1469598103934665603ULL;
  out.min_distance = std::numeric_limits<double>::infinity();
  std::deque<Eigen::Vector2d> trail;

  std::vector<OtherAgent> observed(others.size());

  for (int t = 0; t < cfg.max_steps; ++t) {
    for (std::size_t i = 0; i < others.size(); ++i) {
      observed[i].position = others[i].position;
      observed[i].velocity = others[i].velocity;
      const double dist = (others[i].position - ego.head<2>()).norm();
      out.min_distance = std::min(out.min_distance, dist);
    }
    if (out.min_distance < 2.0 * cfg.agent_radius) {
      out.tag = OutcomeTag::Collision;
      out.steps = t;
      return out;
    }
    if ((ego.head<2>() - cfg.goal).norm() <= cfg.goal_radius) {
      out.tag = OutcomeTag::Success;
      out.steps = t;
      return out;
    }

    Input u_ref = mpc_reference(ego, cfg.goal, cfg.mpc_horizon, cfg.dt);
    u_ref = u_ref.cwiseMax(-cfg.u_max).cwiseMin(cfg.u_max);

    DisturbancePolytope polytope;
    polytope.half_width = model.bound(ego, u_ref);

    const FilterResult filt = cbf_filter(u_ref, ego, observed, polytope, prm);
    if (filt.fallback) ++out.fallback_count;

    // Disturbance draws happen unconditionally so paired seeds expose every
    // model to the same noise sequence.
    State d;
    d(0) = rng.symmetric(cfg.dbar_p);
    d(1) = rng.symmetric(cfg.dbar_p);
    d(2) = rng.symmetric(cfg.dbar_v);
    d(3) = rng.symmetric(cfg.dbar_v);

    if (trajectory) {
      trajectory->push_back({t, 0, ego(0), ego(1), ego(2), ego(3), filt.u(0),
                             filt.u(1), polytope.half_width(0),
                             polytope.half_width(2)});
      for (std::size_t i = 0; i < others.size(); ++i) {
        trajectory->push_back({t, static_cast<int>(i) + 1,
                               others[i].position(0), others[i].position(1),
                               others[i].velocity(0), others[i].velocity(1),
                               0.0, 0.0, 0.0, 0.0});
      }
    }

    ego = step_dynamics(ego, filt.u, d, cfg.dt);
    for (auto& o : others) step_other(o, cfg.dt);
    hash_state(out.trajectory_hash, ego);

    trail.push_back(ego.head<2>());
    if (static_cast<int>(trail.size()) > cfg.stuck_window) {
      const double moved = (trail.back() - trail.front()).norm();
      trail.pop_front();
      if (moved < cfg.stuck_displacement) {
        out.tag = OutcomeTag::Stuck;
        out.steps = t + 1;
        return out;
      }
    }
  }
  out.tag = OutcomeTag::Stuck;
  out.steps = cfg.max_steps;
  return out;
}

std::vector<CampaignCell> run_campaign(
    const WorldConfig& base_cfg, const std::vector<double>& dbar_p_grid,
    const std::vector<double>& dbar_v_grid,
    const std::vector<const DisturbanceModel*>& models, int n_trials,
    std::uint64_t seed0, int jobs) {
  std::vector<CampaignCell> cells;
  int cell_index = 0;
  for (double dp : dbar_p_grid) {
    for (double dv : dbar_v_grid) {
      WorldConfig cfg = base_cfg;
      cfg.dbar_p = dp;
      cfg.dbar_v = dv;
      for (const auto* model : models) {
        CampaignCell cell;
        cell.model = model->name();
        cell.dbar_p = dp;
        cell.dbar_v = dv;
        cell.seed0 = seed0;
        std::vector<TrialOutcome> outcomes(n_trials);
        parallel_for(static_cast<std::size_t>(n_trials), jobs,
                     [&](std::size_t trial) {
                       // Seeds pair trials across models: same worlds, same
                       // noise, different bounds.
                       const std::uint64_t seed =
                           Rng::mix(seed0, cell_index, trial);
                       outcomes[trial] = run_trial(cfg, *model, seed);
                     });
        double steps = 0.0;
        for (const auto& o : outcomes) {
          steps += o.steps;
          switch (o.tag) {
            case OutcomeTag::Success: ++cell.success; break;
            case OutcomeTag::Collision: ++cell.collision; break;
            case OutcomeTag::Stuck: ++cell.stuck; break;
          }
        }
        cell.mean_steps = steps / n_trials;
        cells.push_back(std::move(cell));
      }
      ++cell_index;
    }
  }
  return cells;
}

}  // namespace kdarek::ctrl
