#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kdarek/bounds.hpp"
#include "kdarek/darek.hpp"
#include "kdarek/qp.hpp"
#include "kdarek/rng.hpp"

namespace kdarek::ctrl {

using State = Eigen::Vector4d;  // px, py, vx, vy
using Input = Eigen::Vector2d;  // ax, ay

struct WorldConfig {
  double dt = 0.1;
  int n_other_agents = 4;
  Eigen::Vector2d start{-14.0, 0.0};
  Eigen::Vector2d goal{14.0, 0.0};
  double goal_radius = 1.0;
  double agent_radius = 1.0;
  double safety_margin = 0.2;
  double arena_half = 18.0;
  double dbar_p = 0.0;  // uniform position disturbance half-width
  double dbar_v = 0.0;  // uniform velocity disturbance half-width
  int max_steps = 400;
  double stuck_displacement = 0.05;  // over stuck_window consecutive steps
  int stuck_window = 50;
  double u_max = 3.0;
  int mpc_horizon = 8;
  double cbf_gamma = 0.4;
  double other_speed = 1.8;
  double other_jitter = 0.25;
};

// One-step double integrator with additive disturbance: positions move by
// v*dt + u*dt^2/2 plus d_p, velocities by u*dt plus d_v.
State step_dynamics(const State& x, const Input& u, const State& d, double dt);

// First input of a finite-horizon quadratic tracking problem to the goal
// position at rest, solved by backward Riccati recursion.
Input mpc_reference(const State& x, const Eigen::Vector2d& goal, int horizon,
                    double dt);

// Componentwise symmetric bound on the one-step disturbance.
struct DisturbancePolytope {
  State half_width = State::Zero();
};

struct OtherAgent {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
};

struct CbfParams {
  double dt = 0.1;
  double gamma = 0.4;
  double u_max = 3.0;
  double braking_accel = 3.0;
  double min_distance = 2.2;  // sum of radii plus margin
};

struct FilterResult {
  Input u = Input::Zero();
  bool fallback = false;     // slack-relaxed problem was used
  double kkt_residual = 0.0;
  int active_constraints = 0;
};

// Safety filter: min ||u - u_ref||^2 subject to one discrete-time barrier
// constraint per neighbour, each tightened by the polytope vertex that
// minimizes the next-step barrier, plus the actuator box. Falls back to a
// slack-penalized always-feasible problem when the constraints conflict.
FilterResult cbf_filter(const Input& u_ref, const State& x,
                        const std::vector<OtherAgent>& others,
                        const DisturbancePolytope& polytope,
                        const CbfParams& params);

// Pluggable worst-case error model feeding the polytope.
class DisturbanceModel {
 public:
  virtual ~DisturbanceModel() = default;
  virtual State predict(const State& x, const Input& u) const = 0;
  virtual State bound(const State& x, const Input& u) const = 0;
  virtual std::string name() const = 0;
};

class KdarekDisturbance : public DisturbanceModel {
 public:
  KdarekDisturbance(bounds::BoundEvaluator evaluator, std::string name)
      : eval_(std::move(evaluator)), name_(std::move(name)) {}
  State predict(const State& x, const Input& u) const override;
  State bound(const State& x, const Input& u) const override;
  std::string name() const override { return name_; }
  const bounds::BoundEvaluator& evaluator() const { return eval_; }

 private:
  bounds::BoundEvaluator eval_;
  std::string name_;
};

class DarekDisturbance : public DisturbanceModel {
 public:
  DarekDisturbance(base::DarekModel model, base::DarekBoundContext ctx,
                   std::string name)
      : model_(std::move(model)), ctx_(std::move(ctx)), name_(std::move(name)) {}
  State predict(const State& x, const Input& u) const override;
  State bound(const State& x, const Input& u) const override;
  std::string name() const override { return name_; }

 private:
  base::DarekModel model_;
  base::DarekBoundContext ctx_;
  std::string name_;
};

class FixedDisturbance : public DisturbanceModel {
 public:
  explicit FixedDisturbance(const State& half_width) : hw_(half_width) {}
  State predict(const State&, const Input&) const override {
    return State::Zero();
  }
  State bound(const State&, const Input&) const override { return hw_; }
  std::string name() const override { return "fixed"; }

 private:
  State hw_;
};

enum class OutcomeTag { Success, Collision, Stuck };

struct TrialOutcome {
  OutcomeTag tag = OutcomeTag::Stuck;
  int steps = 0;
  double min_distance = 0.0;
  int fallback_count = 0;
  std::uint64_t trajectory_hash = 0;
};

struct TrajectoryRow {
  int t;
  int agent_id;  // 0 = ego
  double px, py, vx, vy, u1, u2;
  double bound_p, bound_v;
};

TrialOutcome run_trial(const WorldConfig& cfg, const DisturbanceModel& model,
                       std::uint64_t seed,
                       std::vector<TrajectoryRow>* trajectory = nullptr);

struct CampaignCell {
  std::string model;
  double dbar_p = 0.0;
  double dbar_v = 0.0;
  int success = 0;
  int collision = 0;
  int stuck = 0;
  double mean_steps = 0.0;
  std::uint64_t seed0 = 0;
};

// Grid of disturbance levels x models, n trials per cell; trials use
// paired seeds across models so every model faces the same worlds.
std::vector<CampaignCell> run_campaign(
    const WorldConfig& base_cfg, const std::vector<double>& dbar_p_grid,
    const std::vector<double>& dbar_v_grid,
    const std::vector<const DisturbanceModel*>& models, int n_trials,
    std::uint64_t seed0, int jobs);

}  // namespace kdarek::ctrl
