#pragma once

#include <cstdint>
#include <functional>
#include <vector>
#include <random>

#include "prefforge/frame.hpp"

namespace prefforge::envsim {

inline constexpr double kMinPosition = -1.2;
inline constexpr double kMaxPosition = 0.6;
inline constexpr double kMaxSpeed = 0.07;

struct CarState {
  double position = -0.5;
  double velocity = 0.0;

  bool operator==(const CarState&) const = default;
};

struct Action {
  double accel = 0.0;
};

// Physics and reward constants follow the reference continuous Mountain Car.
struct EnvConfig {
  int frame_height = 84;
  int frame_width = 84;
  double goal_position = 0.45;
  double force_coeff = 0.0015;
  double gravity_coeff = 0.0025;
  double goal_bonus = 100.0;
  double action_cost = 0.1;
  int max_steps = 500;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument describing the first violated field.
  void validate() const;
};

CarState step(const CarState& state, Action action, const EnvConfig& cfg);

bool is_terminal(const CarState& state, const EnvConfig& cfg);

// Hidden ground-truth reward. Only the oracle labeler and evaluation read it.
double true_reward(const CarState& state, Action action, const CarState& next, const EnvConfig& cfg);

// Deterministic integer rasterization: hill, goal flag, car block. The frame
// depends on position only; velocity is not drawn.
Frame render(const CarState& state, const EnvConfig& cfg);

// Car block footprint in pixels for a given frame size.
struct CarSprite {
  int width;
  int height;
};
CarSprite car_sprite(const EnvConfig& cfg);

int position_to_column(double position, int frame_width);

// Start states: position uniform in [-0.6, -0.4], velocity 0.
class StartStateSampler {
 public:
  explicit StartStateSampler(std::uint64_t seed) : rng_(seed) {}
  CarState sample();

 private:
  std::mt19937_64 rng_;
};

struct Rollout {
  std::vector<CarState> states;  // states[t] is observed before actions[t]
  std::vector<Frame> frames;     // render(states[t])
  std::vector<double> actions;
  std::vector<double> true_rewards;
  bool reached_goal = false;
};

// Runs a policy from `start` until the goal or cfg.max_steps.
Rollout rollout(const std::function<Action(const CarState&)>& policy, CarState start, const EnvConfig& cfg,
                bool render_frames = true);

// Energy-pumping controller: full throttle in the direction of motion.
Action pump_controller(const CarState& state);

// ---------------------------------------------------------------------------
// Dot world: one bright cell on an N x N grid. Used for mask tests.

enum class DotMove { stay, up, down, left, right };

struct DotState {
  int row = 0;
  int col = 0;
  bool operator==(const DotState&) const = default;
};

DotState dotworld_step(const DotState& state, DotMove move, int grid_size);
Frame dotworld_render(const DotState& state, int grid_size);

}  // namespace prefforge::envsim
