#include "varshift/layers.hpp"

#include <cmath>
#include <string>

#include "finite.hpp"
#include "parallel.hpp"

namespace varshift {

std::string_view to_string(Phase phase) noexcept {
  return phase == Phase::Train ? "train" : "test";
}

KeepProbability::KeepProbability(double p) : p_(p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("keep probability must lie in (0, 1), got " + std::to_string(p));
  }
}

DropoutMask sample_mask(std::size_t batch_size, std::size_t width, KeepProbability p,
                        RandomSeed seed) {
  MaskBits bits(static_cast<Eigen::Index>(batch_size), static_cast<Eigen::Index>(width));
  const CounterRng rng(seed);
  const auto slabs = detail::make_slabs(batch_size);
  const double keep = p.value();
  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    std::uint8_t* out = bits.data() + slabs[s].begin * width;
    const std::uint64_t k0 = slabs[s].begin * width;
    const std::uint64_t count = slabs[s].size() * width;
    for (std::uint64_t i = 0; i < count; ++i) {
      out[i] = rng.bernoulli(k0 + i, keep) ? 1 : 0;
    }
  });
  return DropoutMask{std::move(bits), p};
}

DropoutResult dropout_forward(FeatureBatch x, KeepProbability p, Phase phase, RandomSeed seed) {
  if (phase == Phase::Test) {
    return DropoutResult{std::move(x), std::nullopt};
  }
  DropoutMask mask = sample_mask(x.batch_size(), x.width(), p, seed);
  FeatureBatch out = dropout_with_mask(std::move(x), mask);
  return DropoutResult{std::move(out), std::move(mask)};
}

FeatureBatch dropout_with_mask(FeatureBatch x, const DropoutMask& mask) {
  if (static_cast<std::size_t>(mask.bits.rows()) != x.batch_size() ||
      static_cast<std::size_t>(mask.bits.cols()) != x.width()) {
    throw ShapeError("dropout_with_mask: mask is " + std::to_string(mask.bits.rows()) + "x" +
                     std::to_string(mask.bits.cols()) + " but batch is " +
                     std::to_string(x.batch_size()) + "x" + std::to_string(x.width()));
  }
  Matrix m = std::move(x).release();
  const double scale = mask.keep.scale();
  m.array() *= mask.bits.cast<double>().array() * scale;
  return FeatureBatch(std::move(m));
}

FeatureBatch relu_forward(FeatureBatch x) {
  Matrix m = std::move(x).release();
  // select, not max: every non-positive input (including -0) maps to +0.
  m = (m.array() > 0.0).select(m, 0.0);
  return FeatureBatch(std::move(m));
}

FeatureBatch elu_forward(FeatureBatch x, double alpha) {
  if (!(alpha > 0.0)) {
    throw DomainError("elu_forward: alpha must be > 0");
  }
  Matrix m = std::move(x).release();
  m = m.unaryExpr([alpha](double v) { return v > 0.0 ? v : alpha * std::expm1(v); });
  return FeatureBatch(std::move(m));
}

LinearWeights make_weights(Matrix w) {
  if (w.rows() < 1 || w.cols() < 1) {
    throw ShapeError("make_weights: empty weight matrix");
  }
  if (!w.allFinite()) {
    throw DomainError("make_weights: weights must be finite");
  }
  const double mean = w.mean();
  const double var = (w.array() - mean).square().mean();
  return LinearWeights{std::move(w), mean, var};
}

LinearWeights he_init(std::size_t width_out, std::size_t width_in, double mean_w,
                      RandomSeed seed) {
  if (width_out < 1 || width_in < 1) {
    throw ShapeError("he_init: dimensions must be >= 1");
  }
  const double variance = 2.0 / static_cast<double>(width_in);
  Matrix w(static_cast<Eigen::Index>(width_out), static_cast<Eigen::Index>(width_in));
  const CounterRng rng(seed);
  rng.fill_normal(0, w.data(), width_out * width_in);
  w = (w.array() * std::sqrt(variance) + mean_w).matrix();
  return LinearWeights{std::move(w), mean_w, variance};
}

FeatureBatch linear_forward(FeatureBatch x, const LinearWeights& w) {
  if (w.width_in() != x.width()) {
    throw ShapeError("linear_forward: weight expects width " + std::to_string(w.width_in()) +
                     ", batch has width " + std::to_string(x.width()));
  }
  const std::size_t rows = x.batch_size();
  const auto slabs = detail::make_slabs(rows);
  Matrix in = std::move(x).release();
  auto rows_of = [](Matrix& m, const detail::Slab& s) {
    return m.middleRows(static_cast<Eigen::Index>(s.begin), static_cast<Eigen::Index>(s.size()));
  };
  if (w.width_out() == w.width_in()) {
    detail::parallel_for(slabs.size(), [&](std::size_t s) {
      auto block = rows_of(in, slabs[s]);
      Matrix tmp = block * w.w.transpose();
      block = tmp;
    });
    return FeatureBatch(std::move(in));
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(w.width_out()));
  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    rows_of(out, slabs[s]).noalias() = rows_of(in, slabs[s]) * w.w.transpose();
  });
  return FeatureBatch(std::move(out));
}

BNState bn_calibrate(const FeatureBatch& x_train, double gamma) {
  if (x_train.batch_size() < 2) {
    throw ShapeError("bn_calibrate: need a training batch of at least 2 samples");
  }
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw DomainError("bn_calibrate: gamma must be finite and > 0");
  }
  MomentStats stats = batch_moments(x_train);
  BNState state;
  state.gamma = gamma;
  state.frozen_mean = std::move(stats.mean);
  state.frozen_variance = std::move(stats.variance);
  return state;
}

FeatureBatch bn_forward(FeatureBatch x, const BNState& state) {
  if (!state.calibrated()) {
    throw std::logic_error("bn_forward: state has not been calibrated");
  }
  if (static_cast<std::size_t>(state.frozen_mean.size()) != x.width()) {
    throw ShapeError("bn_forward: state width " + std::to_string(state.frozen_mean.size()) +
                     " does not match batch width " + std::to_string(x.width()));
  }
  const Eigen::RowVectorXd scale =
      (state.gamma / (state.frozen_variance.array() + state.epsilon).sqrt()).matrix().transpose();
  const Eigen::RowVectorXd shift =
      (state.beta - state.frozen_mean.transpose().array() * scale.array()).matrix();
  Matrix m = std::move(x).release();
  const auto slabs = detail::make_slabs(static_cast<std::size_t>(m.rows()));
  detail::parallel_for(slabs.size(), [&](std::size_t s) {
    auto block = m.middleRows(static_cast<Eigen::Index>(slabs[s].begin),
                              static_cast<Eigen::Index>(slabs[s].size()));
    block.array().rowwise() *= scale.array();
    block.rowwise() += shift;
  });
  return FeatureBatch(std::move(m));
}

FeatureBatch skip_add(FeatureBatch x, const FeatureBatch& f) {
  if (x.batch_size() != f.batch_size() || x.width() != f.width()) {
    throw ShapeError("skip_add: shapes differ");
  }
  Matrix m = std::move(x).release();
  m += f.values();
  return FeatureBatch(std::move(m));
}

SpatialFeatureBatch::SpatialFeatureBatch(Matrix data, std::size_t channels,
                                         std::size_t spatial_size)
    : data_(std::move(data)), channels_(channels), spatial_(spatial_size) {
  if (channels_ < 1 || spatial_ < 1 || data_.rows() < 1) {
    throw ShapeError("SpatialFeatureBatch: all dimensions must be >= 1");
  }
  if (static_cast<std::size_t>(data_.cols()) != channels_ * spatial_) {
    throw ShapeError("SpatialFeatureBatch: row length " + std::to_string(data_.cols()) +
                     " != channels * spatial_size");
  }
  if (!detail::all_finite(data_.data(), static_cast<std::size_t>(data_.size()))) {
    throw DomainError("SpatialFeatureBatch entries must be finite");
  }
}

FeatureBatch gap_forward(const SpatialFeatureBatch& x) {
  const auto rows = static_cast<Eigen::Index>(x.batch_size());
  const auto c = static_cast<Eigen::Index>(x.channels());
  const auto s = static_cast<Eigen::Index>(x.spatial_size());
  Matrix out(rows, c);
  const Matrix& in = x.values();
  for (Eigen::Index b = 0; b < rows; ++b) {
    for (Eigen::Index ch = 0; ch < c; ++ch) {
      out(b, ch) = in.row(b).segment(ch * s, s).sum() / static_cast<double>(s);
    }
  }
  return FeatureBatch(std::move(out));
}

SpatialFeatureBatch spatial_dropout_elementwise(SpatialFeatureBatch x, KeepProbability p,
                                                Phase phase, RandomSeed seed) {
  if (phase == Phase::Test) {
    return x;
  }
  const std::size_t channels = x.channels();
  const std::size_t spatial = x.spatial_size();
  const std::size_t rows = x.batch_size();
  const DropoutMask mask = sample_mask(rows, channels * spatial, p, seed);
  Matrix m = std::move(x).release();
  m.array() *= mask.bits.cast<double>().array() * p.scale();
  return SpatialFeatureBatch(std::move(m), channels, spatial);
}

}  // namespace varshift
