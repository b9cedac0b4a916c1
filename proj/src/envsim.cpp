#include "prefforge/envsim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace prefforge::envsim {

namespace {

constexpr std::uint8_t kGroundShade = 50;
constexpr std::uint8_t kHillLine = 120;
constexpr std::uint8_t kFlagShade = 180;
constexpr std::uint8_t kCarShade = 255;

double hill_height(double position) { return std::sin(3.0 * position) * 0.45 + 0.55; }

// Row of the ground surface under a column. Height 1.0 maps a quarter of the
// frame below the top so the car and flag stay visible on the right summit.
int ground_row(int col, int frame_height, int frame_width) {
  double pos = kMinPosition + (kMaxPosition - kMinPosition) * col / (frame_width - 1);
  double h = hill_height(pos);
  int row = (frame_height - 1) - static_cast<int>(std::floor(h * 0.72 * (frame_height - 1)));
  return std::clamp(row, 0, frame_height - 1);
}

}  // namespace

void EnvConfig::validate() const {
  if (frame_height < 16) throw std::invalid_argument("env.frame_height must be >= 16");
  if (frame_width < 16) throw std::invalid_argument("env.frame_width must be >= 16");
  if (!(force_coeff > 0)) throw std::invalid_argument("env.force_coeff must be > 0");
  if (!(gravity_coeff > 0)) throw std::invalid_argument("env.gravity_coeff must be > 0");
  if (goal_position < kMinPosition || goal_position > kMaxPosition)
    throw std::invalid_argument("env.goal_position must lie on the track");
  if (max_steps < 1) throw std::invalid_argument("env.max_steps must be >= 1");
}

CarState step(const CarState& state, Action action, const EnvConfig& cfg) {
  const double accel = std::clamp(action.accel, -1.0, 1.0);
  double velocity = state.velocity + cfg.force_coeff * accel - cfg.gravity_coeff * std::cos(3.0 * state.position);
  velocity = std::clamp(velocity, -kMaxSpeed, kMaxSpeed);
  double position = std::clamp(state.position + velocity, kMinPosition, kMaxPosition);
  if (position == kMinPosition && velocity < 0) velocity = 0.0;
  return {position, velocity};
}

bool is_terminal(const CarState& state, const EnvConfig& cfg) { return state.position >= cfg.goal_position; }

double true_reward(const CarState& /*state*/, Action action, const CarState& next, const EnvConfig& cfg) {
  const double accel = std::clamp(action.accel, -1.0, 1.0);
  double reward = -cfg.action_cost * accel * accel;
  if (is_terminal(next, cfg)) reward += cfg.goal_bonus;
  return reward;
}

int position_to_column(double position, int frame_width) {
  double t = (std::clamp(position, kMinPosition, kMaxPosition) - kMinPosition) / (kMaxPosition - kMinPosition);
  return static_cast<int>(std::lround(t * (frame_width - 1)));
}

CarSprite car_sprite(const EnvConfig& cfg) {
  return {std::max(2, cfg.frame_width / 14), std::max(2, cfg.frame_height / 20)};
}

Frame render(const CarState& state, const EnvConfig& cfg) {
  const int h = cfg.frame_height;
  const int w = cfg.frame_width;
  Frame frame(h, w, 0);

  for (int col = 0; col < w; ++col) {
    int surface = ground_row(col, h, w);
    frame.at(surface, col) = kHillLine;
    for (int row = surface + 1; row < h; ++row) frame.at(row, col) = kGroundShade;
  }

  // Flag: pole plus a small pennant to its left.
  const int flag_col = position_to_column(cfg.goal_position, w);
  const int flag_base = ground_row(flag_col, h, w);
  const int pole = std::max(3, h / 8);
  for (int k = 1; k <= pole && flag_base - k >= 0; ++k) frame.at(flag_base - k, flag_col) = kFlagShade;
  const int pennant = std::max(1, pole / 3);
  for (int k = 0; k < pennant; ++k) {
    int row = flag_base - pole + k;
    for (int c = flag_col - pennant; c < flag_col; ++c) {
      if (row >= 0 && c >= 0) frame.at(row, c) = kFlagShade;
    }
  }

  const CarSprite sprite = car_sprite(cfg);
  const int center = position_to_column(state.position, w);
  const int left = center - sprite.width / 2;
  const int base = ground_row(center, h, w) - 1;
  for (int row = base - sprite.height + 1; row <= base; ++row) {
    for (int col = left; col < left + sprite.width; ++col) {
      if (row >= 0 && row < h && col >= 0 && col < w) frame.at(row, col) = kCarShade;
    }
  }
  return frame;
}

CarState StartStateSampler::sample() {
  std::uniform_real_distribution<double> dist(-0.6, -0.4);
  return {dist(rng_), 0.0};
}

Rollout rollout(const std::function<Action(const CarState&)>& policy, CarState start, const EnvConfig& cfg,
                bool render_frames) {
  Rollout out;
  CarState state = start;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const Action action{std::clamp(policy(state).accel, -1.0, 1.0)};
    const CarState next = step(state, action, cfg);
    out.states.push_back(state);
    if (render_frames) out.frames.push_back(render(state, cfg));
    out.actions.push_back(action.accel);
    out.true_rewards.push_back(true_reward(state, action, next, cfg));
    state = next;
    if (is_terminal(state, cfg)) {
      out.reached_goal = true;
      break;
    }
  }
  return out;
}

Action pump_controller(const CarState& state) { return {state.velocity >= 0 ? 1.0 : -1.0}; }

DotState dotworld_step(const DotState& state, DotMove move, int grid_size) {
  DotState next = state;
  switch (move) {
    case DotMove::stay: break;
    case DotMove::up: next.row -= 1; break;
    case DotMove::down: next.row += 1; break;
    case DotMove::left: next.col -= 1; break;
    case DotMove::right: next.col += 1; break;
  }
  next.row = std::clamp(next.row, 0, grid_size - 1);
  next.col = std::clamp(next.col, 0, grid_size - 1);
  return next;
}

Frame dotworld_render(const DotState& state, int grid_size) {
  Frame frame(grid_size, grid_size, 0);
  frame.at(state.row, state.col) = 255;
  return frame;
}

}  // namespace prefforge::envsim
