#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "relit/image.hpp"
#include "relit/parallel.hpp"
#include "relit/raster.hpp"

namespace relit::stabilize {

struct StabilizeConfig {
  double lambda1 = 0.1;   // spatial TV weight
  double lambda2 = 1.0;   // temporal weight
  double delta = 0.05;    // Huber threshold of the data term
  double epsilon = 1e-8;  // TV smoothing
  int iterations = 200;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int window = 30;
  int window_overlap = 5;
  // Reject Adam steps that would raise the objective of a coupled block of
  // frames, halving the step up to max_backtracks times.
  bool monotone = true;
  int max_backtracks = 30;

  void validate() const {
    std::vector<std::string> bad;
    if (!(lambda1 >= 0)) bad.push_back("lambda1 must be >= 0");
    if (!(lambda2 >= 0)) bad.push_back("lambda2 must be >= 0");
    if (!(delta > 0)) bad.push_back("delta must be > 0");
    if (!(epsilon > 0)) bad.push_back("epsilon must be > 0");
    if (iterations < 1) bad.push_back("iterations must be >= 1");
    if (!(learning_rate > 0)) bad.push_back("learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) bad.push_back("beta1 must be in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) bad.push_back("beta2 must be in [0, 1)");
    if (!(adam_epsilon > 0)) bad.push_back("adam_epsilon must be > 0");
    if (window < 1) bad.push_back("window must be >= 1");
    if (window_overlap < 0 || window_overlap >= window)
      bad.push_back("window_overlap must be in [0, window)");
    if (max_backtracks < 0) bad.push_back("max_backtracks must be >= 0");
    if (!bad.empty()) {
      std::string msg = "invalid stabilize config: ";
      for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
      throw ParameterError(msg);
    }
  }
};

inline double huber(double a, double delta) {
  const double m = std::abs(a);
  return m < delta ? 0.5 * a * a : delta * (m - 0.5 * delta);
}

inline double huber_derivative(double a, double delta) {
  return std::abs(a) < delta ? a : (a > 0 ? delta : -delta);
}

inline ImagePlane huber(const ImagePlane& a, double delta) {
  if (!(delta > 0)) throw ParameterError("huber: delta must be > 0");
  ImagePlane out = a;
  for (double& v : out.samples()) v = huber(v, delta);
  return out;
}

struct ValueAndGradient {
  double value = 0;
  ImagePlane gradient;
};

// Smoothed isotropic total variation sum_i sqrt(|Dx x_i|^2 + |Dy x_i|^2 + eps),
// channels summed inside the norm, with its exact gradient.
inline ValueAndGradient tv_eps(const ImagePlane& x, double epsilon) {
  if (!(epsilon > 0)) throw ParameterError("tv_eps: epsilon must be > 0");
  auto [gx, gy] = spatial_gradients(x);
  const int w = x.width(), h = x.height(), nc = x.channels();
  std::vector<double> rows(h, 0.0);
  parallel_for(0, h, [&](int y) {
    double acc = 0;
    for (int px = 0; px < w; ++px) {
      double sq = epsilon;
      for (int c = 0; c < nc; ++c) sq += gx(px, y, c) * gx(px, y, c) + gy(px, y, c) * gy(px, y, c);
      const double s = std::sqrt(sq);
      acc += s;
      for (int c = 0; c < nc; ++c) {
        gx(px, y, c) /= s;
        gy(px, y, c) /= s;
      }
    }
    rows[y] = acc;
  });
  return {std::accumulate(rows.begin(), rows.end(), 0.0), forward_difference_adjoint(gx, gy)};
}

// Optimization variables and fixed inputs of the temporal regularization
// problem. flow[t] maps frame t's grid into frame t+1 (so warping x[t+1] with
// it aligns x[t+1] to frame t); valid[t] masks that comparison.
struct SequenceState {
  std::vector<ImagePlane> estimate;    // x_t
  std::vector<ImagePlane> observed;    // mean prediction
  std::vector<ImagePlane> confidence;  // 1 - sigma_norm
  std::vector<BinaryMask> valid;       // T - 1 masks
  std::vector<FlowField> flow;         // T - 1 flows

  int frames() const noexcept { return static_cast<int>(observed.size()); }

  void validate(bool need_estimate = true) const {
    const int t = frames();
    if (t < 1) throw DataError("sequence has no frames");
    if (need_estimate && static_cast<int>(estimate.size()) != t)
      throw DataError("sequence needs one estimate per frame");
    if (static_cast<int>(confidence.size()) != t)
      throw DataError("sequence needs one confidence map per frame");
    if (static_cast<int>(valid.size()) != t - 1 || static_cast<int>(flow.size()) != t - 1)
      throw DataError("sequence of " + std::to_string(t) + " frames needs " +
                      std::to_string(t - 1) + " flows and validity masks");
    const auto& ref = observed.front();
    for (int i = 0; i < t; ++i) {
      require_same_shape(ref, observed[i], "sequence observation");
      require_same_shape(ref, confidence[i], "sequence confidence");
      if (need_estimate) require_same_shape(ref, estimate[i], "sequence estimate");
    }
    for (int i = 0; i + 1 < t; ++i) {
      require_same_extent(ref, valid[i], "sequence validity mask");
      require_same_extent(ref, flow[i], "sequence flow");
    }
  }
};

namespace detail {

// Sum of per-row partial sums, so the result is independent of threading.
template <class RowFn>
double row_sum(int h, RowFn&& fn) {
  std::vector<double> rows(h, 0.0);
  parallel_for(0, h, [&](int y) { rows[y] = fn(y); });
  return std::accumulate(rows.begin(), rows.end(), 0.0);
}

inline double data_term(const ImagePlane& x, const ImagePlane& obs, const ImagePlane& conf,
                        double delta) {
  return row_sum(x.height(), [&](int y) {
    double acc = 0;
    for (int px = 0; px < x.width(); ++px)
      for (int c = 0; c < x.channels(); ++c)
        acc += huber(obs(px, y, c) - x(px, y, c), delta) * conf(px, y, c);
    return acc;
  });
}

// (warp(next) - x) masked by valid.
inline ImagePlane temporal_residual(const ImagePlane& x, const ImagePlane& next,
                                    const FlowField& flow, const BinaryMask& valid) {
  ImagePlane r = backward_warp(next, flow);
  for (int y = 0; y < x.height(); ++y)
    for (int px = 0; px < x.width(); ++px) {
      const bool on = valid.test(px, y);
      for (int c = 0; c < x.channels(); ++c) r(px, y, c) = on ? r(px, y, c) - x(px, y, c) : 0.0;
    }
  return r;
}

inline double squared_norm(const ImagePlane& r) {
  return row_sum(r.height(), [&](int y) {
    double acc = 0;
    for (int px = 0; px < r.width(); ++px)
      for (int c = 0; c < r.channels(); ++c) acc += r(px, y, c) * r(px, y, c);
    return acc;
  });
}

inline double frame_energy(std::span<const ImagePlane> x, const SequenceState& s, int t,
                           const StabilizeConfig& cfg) {
  double e = data_term(x[t], s.observed[t], s.confidence[t], cfg.delta);
  if (cfg.lambda1 > 0) e += cfg.lambda1 * tv_eps(x[t], cfg.epsilon).value;
  if (cfg.lambda2 > 0 && t + 1 < s.frames())
    e += cfg.lambda2 * squared_norm(temporal_residual(x[t], x[t + 1], s.flow[t], s.valid[t]));
  return e;
}

inline std::vector<ImagePlane> gradient(std::span<const ImagePlane> x, const SequenceState& s,
                                        const StabilizeConfig& cfg) {
  const int frames = s.frames();
  std::vector<ImagePlane> grad(frames);
  std::vector<ImagePlane> pull(frames);  // adjoint-warp contribution onto frame t+1
  parallel_for(0, frames, [&](int t) {
    const auto& xt = x[t];
    ImagePlane g(xt.width(), xt.height(), xt.channels());
    for (int y = 0; y < xt.height(); ++y)
      for (int px = 0; px < xt.width(); ++px)
        for (int c = 0; c < xt.channels(); ++c)
          g(px, y, c) = -huber_derivative(s.observed[t](px, y, c) - xt(px, y, c), cfg.delta) *
                        s.confidence[t](px, y, c);
    if (cfg.lambda1 > 0) {
      const auto tv = tv_eps(xt, cfg.epsilon);
      auto gs = g.samples();
      auto ts = tv.gradient.samples();
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += cfg.lambda1 * ts[i];
    }
    if (cfg.lambda2 > 0 && t + 1 < frames) {
      ImagePlane r = temporal_residual(xt, x[t + 1], s.flow[t], s.valid[t]);
      for (double& v : r.samples()) v *= 2.0 * cfg.lambda2;
      auto gs = g.samples();
      auto rs = r.samples();
      for (std::size_t i = 0; i < gs.size(); ++i) gs[i] -= rs[i];
      pull[t + 1] = backward_warp_adjoint(r, s.flow[t]);
    }
    grad[t] = std::move(g);
  });
  for (int t = 1; t < frames; ++t) {
    if (pull[t].empty()) continue;
    auto gs = grad[t].samples();
    auto ps = pull[t].samples();
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += ps[i];
  }
  return grad;
}

}  // namespace detail

// Per-frame contributions e_t (data + TV + temporal term linking t and t+1);
// their sum is the objective.
inline std::vector<double> frame_energies(const SequenceState& state, const StabilizeConfig& cfg) {
  state.validate();
  std::vector<double> e(state.frames());
  for (int t = 0; t < state.frames(); ++t)
    e[t] = detail::frame_energy(state.estimate, state, t, cfg);
  return e;
}

inline double objective(const SequenceState& state, const StabilizeConfig& cfg) {
  const auto e = frame_energies(state, cfg);
  return std::accumulate(e.begin(), e.end(), 0.0);
}

// Exact gradient of objective() with respect to every estimate frame. The
// warp is a fixed linear operator, so frame t+1 receives its adjoint.
inline std::vector<ImagePlane> objective_grad(const SequenceState& state,
                                              const StabilizeConfig& cfg) {
  state.validate();
  return detail::gradient(state.estimate, state, cfg);
}

struct TracePoint {
  int window = 0;
  int iteration = 0;
  double objective = 0;
};

struct SolveResult {
  std::vector<ImagePlane> frames;
  std::vector<TracePoint> trace;
};

namespace detail {

inline std::vector<ImagePlane> solve_window(const SequenceState& s, const StabilizeConfig& cfg,
                                            int window_index, std::vector<TracePoint>& trace) {
  const int frames = s.frames();
  std::vector<ImagePlane> x = s.observed;
  std::vector<ImagePlane> m1, m2;
  for (const auto& f : x) {
    m1.emplace_back(f.width(), f.height(), f.channels());
    m2.emplace_back(f.width(), f.height(), f.channels());
  }

  // Frames are only coupled through the temporal term.
  std::vector<std::vector<int>> blocks;
  if (cfg.lambda2 > 0) {
    blocks.emplace_back(frames);
    std::iota(blocks.back().begin(), blocks.back().end(), 0);
  } else {
    for (int t = 0; t < frames; ++t) blocks.push_back({t});
  }

  std::vector<double> energy(frames);
  for (int t = 0; t < frames; ++t) energy[t] = frame_energy(x, s, t, cfg);
  auto total = [&] { return std::accumulate(energy.begin(), energy.end(), 0.0); };
  auto check = [&](double v, int it) {
    if (!std::isfinite(v))
      throw NumericalError("stabilize: non-finite objective at iteration " + std::to_string(it) +
                           " (window " + std::to_string(window_index) + ")");
  };
  check(total(), 0);
  trace.push_back({window_index, 0, total()});

  std::vector<ImagePlane> step(frames), candidate = x;
  for (int it = 1; it <= cfg.iterations; ++it) {
    const auto g = gradient(x, s, cfg);
    const double c1 = 1.0 - std::pow(cfg.beta1, it);
    const double c2 = 1.0 - std::pow(cfg.beta2, it);
    for (int t = 0; t < frames; ++t) {
      auto gs = g[t].samples();
      auto a = m1[t].samples();
      auto b = m2[t].samples();
      step[t] = ImagePlane(x[t].width(), x[t].height(), x[t].channels());
      auto st = step[t].samples();
      for (std::size_t i = 0; i < gs.size(); ++i) {
        a[i] = cfg.beta1 * a[i] + (1 - cfg.beta1) * gs[i];
        b[i] = cfg.beta2 * b[i] + (1 - cfg.beta2) * gs[i] * gs[i];
        st[i] = cfg.learning_rate * (a[i] / c1) / (std::sqrt(b[i] / c2) + cfg.adam_epsilon);
      }
    }

    for (const auto& block : blocks) {
      double before = 0;
      for (int t : block) before += energy[t];
      double scale = 1.0;
      const int tries = cfg.monotone ? cfg.max_backtracks + 1 : 1;
      for (int attempt = 0; attempt < tries; ++attempt, scale *= 0.5) {
        for (int t : block) {
          auto xs = x[t].samples();
          auto cs = candidate[t].samples();
          auto st = step[t].samples();
          for (std::size_t i = 0; i < xs.size(); ++i) cs[i] = xs[i] - scale * st[i];
        }
        std::vector<double> e_new(block.size());
        double after = 0;
        for (std::size_t k = 0; k < block.size(); ++k) {
          e_new[k] = frame_energy(candidate, s, block[k], cfg);
          after += e_new[k];
        }
        check(after, it);
        if (!cfg.monotone || after <= before) {
          for (std::size_t k = 0; k < block.size(); ++k) {
            x[block[k]] = candidate[block[k]];
            energy[block[k]] = e_new[k];
          }
          break;
        }
      }
      // Restore candidate frames that were not accepted.
      for (int t : block) candidate[t] = x[t];
    }
    trace.push_back({window_index, it, total()});
  }
  return x;
}

inline SequenceState window_slice(const SequenceState& s, int begin, int end) {
  SequenceState w;
  w.observed.assign(s.observed.begin() + begin, s.observed.begin() + end);
  w.confidence.assign(s.confidence.begin() + begin, s.confidence.begin() + end);
  w.valid.assign(s.valid.begin() + begin, s.valid.begin() + end - 1);
  w.flow.assign(s.flow.begin() + begin, s.flow.begin() + end - 1);
  return w;
}

}  // namespace detail

// Window start frames: stride window - overlap, last window shifted inward.
inline std::vector<int> window_starts(int frames, int window, int overlap) {
  if (frames <= window) return {0};
  std::vector<int> out{0};
  int s = 0;
  while (s + window < frames) {
    s = std::min(s + (window - overlap), frames - window);
    out.push_back(s);
  }
  return out;
}

// Minimizes the confidence-weighted Huber data term + lambda1 TV + lambda2
// flow-warped temporal term with Adam, starting from the observations.
// Sequences longer than cfg.window are solved in overlapping windows that are
// cross-faded linearly where they overlap.
inline SolveResult solve(const SequenceState& state, const StabilizeConfig& cfg) {
  cfg.validate();
  state.validate(false);
  const int frames = state.frames();
  SolveResult result;
  const auto starts = window_starts(frames, cfg.window, cfg.window_overlap);
  int assembled_end = 0;
  for (std::size_t wi = 0; wi < starts.size(); ++wi) {
    const int begin = starts[wi], end = std::min(frames, begin + cfg.window);
    const auto x = detail::solve_window(detail::window_slice(state, begin, end), cfg,
                                        static_cast<int>(wi), result.trace);
    const int overlap = std::max(0, assembled_end - begin);
    for (int t = begin; t < end; ++t) {
      const ImagePlane& mine = x[t - begin];
      if (t >= assembled_end) {
        result.frames.push_back(mine);
        continue;
      }
      const double wnew = double(t - begin + 1) / (overlap + 1);
      auto dst = result.frames[t].samples();
      auto src = mine.samples();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = (1 - wnew) * dst[i] + wnew * src[i];
    }
    assembled_end = end;
  }
  return result;
}

}  // namespace relit::stabilize
